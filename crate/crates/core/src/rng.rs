//! Seeded random substreams.
//!
//! A scenario has one seed. Every consumer of randomness asks for a stream
//! by label (`"workload/alice"`, `"cache/r1"`, ...) and gets an independent
//! generator derived from `(seed, label)`. Turning a feature on or off then
//! never shifts the draws seen by unrelated parts of the simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type SimRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, label: &str) -> SimRng {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(label.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        SimRng::from_seed(digest)
    }
}
