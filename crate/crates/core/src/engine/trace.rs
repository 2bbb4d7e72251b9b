//! Line-delimited JSON event trace with a running digest.

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, Serialize, serde::Deserialize, PartialEq, Eq)]
pub struct TraceRecord {
    /// Microseconds of simulated time.
    pub t: u64,
    pub node: String,
    pub kind: String,
    pub name: String,
    /// `node:fN`, empty when the event is not tied to a face.
    pub face: String,
    pub outcome: String,
}

#[derive(Clone, Debug)]
pub struct TraceSink {
    keep: bool,
    lines: Vec<String>,
    hasher: Sha256,
    count: u64,
}

impl TraceSink {
    /// `keep` retains the lines in memory; otherwise only the digest is kept.
    pub fn new(keep: bool) -> Self {
        TraceSink { keep, lines: Vec::new(), hasher: Sha256::new(), count: 0 }
    }

    pub fn push(&mut self, rec: &TraceRecord) {
        let line = serde_json::to_string(rec).expect("trace record serializes");
        self.hasher.update(line.as_bytes());
        self.hasher.update(b"\n");
        self.count += 1;
        if self.keep {
            self.lines.push(line);
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn len(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn records(&self) -> impl Iterator<Item = TraceRecord> + '_ {
        self.lines.iter().map(|l| serde_json::from_str(l).expect("own output parses"))
    }

    pub fn digest(&self) -> String {
        hex::encode(self.hasher.clone().finalize())
    }
}
