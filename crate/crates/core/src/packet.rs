//! The two message kinds of the network: interests and content objects.

use std::fmt;

use crate::crypto::Signature;
use crate::names::{ExcludeFilter, Name};

/// A node-local interface number.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FaceId(pub u32);

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "f{}", self.0)
    }
}

/// A request for named content. There is deliberately no field that names
/// the requester: only the first-hop router's PIT knows which face it came in on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interest {
    pub name: Name,
    pub exclude: ExcludeFilter,
    pub nonce: u64,
    /// Answer from cache without touching cache state, never forward.
    pub non_invasive: bool,
    /// Skip caches and go to the producer.
    pub no_cache_request: bool,
}

impl Interest {
    pub fn new(name: Name, nonce: u64) -> Self {
        Interest {
            name,
            exclude: ExcludeFilter::new(),
            nonce,
            non_invasive: false,
            no_cache_request: false,
        }
    }

    pub fn with_exclude(mut self, exclude: ExcludeFilter) -> Self {
        self.exclude = exclude;
        self
    }

    pub fn non_invasive(mut self) -> Self {
        self.non_invasive = true;
        self
    }

    pub fn bypass_cache(mut self) -> Self {
        self.no_cache_request = true;
        self
    }

    pub fn uses_exclude(&self) -> bool {
        !self.exclude.is_empty()
    }
}

/// Signed named payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContentObject {
    pub name: Name,
    pub payload: Vec<u8>,
    pub signature: Signature,
    /// Set by the origin; routers honoring it never cache the object.
    pub no_cache: bool,
    pub chunk_index: Option<u32>,
    pub total_chunks: Option<u32>,
}

impl ContentObject {
    pub fn payload_size(&self) -> usize {
        self.payload.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Packet {
    Interest(Interest),
    Data(ContentObject),
}

impl Packet {
    pub fn name(&self) -> &Name {
        match self {
            Packet::Interest(i) => &i.name,
            Packet::Data(d) => &d.name,
        }
    }
}

/// Segment component used for chunked content: `/movie/trailer/seg=3`.
pub fn segment_component(index: u32) -> String {
    format!("seg={index}")
}

/// Splits `/base/seg=i` into `(base, i)`.
pub fn split_segment(name: &Name) -> Option<(Name, u32)> {
    let idx = name.last()?.strip_prefix("seg=")?.parse().ok()?;
    Some((name.parent(), idx))
}
