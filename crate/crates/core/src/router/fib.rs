use std::collections::{BTreeMap, BTreeSet};

use crate::names::Name;
use crate::packet::FaceId;

/// Prefix-to-face routing table. Lookup walks the candidate's own prefixes
/// from longest to shortest, so cost is proportional to name depth.
#[derive(Clone, Debug, Default)]
pub struct Fib {
    routes: BTreeMap<Name, BTreeSet<FaceId>>,
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prefix: Name, face: FaceId) {
        self.routes.entry(prefix).or_default().insert(face);
    }

    pub fn remove(&mut self, prefix: &Name, face: FaceId) -> bool {
        let Some(faces) = self.routes.get_mut(prefix) else { return false };
        let removed = faces.remove(&face);
        if faces.is_empty() {
            self.routes.remove(prefix);
        }
        removed
    }

    /// Longest matching prefix; among equal prefixes the lowest face id.
    pub fn lookup(&self, name: &Name) -> Option<FaceId> {
        (0..=name.len())
            .rev()
            .find_map(|len| self.routes.get(&name.truncated(len)))
            .and_then(|faces| faces.first().copied())
    }

    pub fn len(&self) -> usize {
        self.routes.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Name, FaceId)> {
        self.routes.iter().flat_map(|(p, faces)| faces.iter().map(move |f| (p, *f)))
    }
}
