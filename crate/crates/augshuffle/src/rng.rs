//! Deterministic randomness with named sub-streams.
//!
//! Every stream is a ChaCha12 keystream whose key is derived from the master
//! seed and a label path, and whose stream id is an index. Parties draw from
//! their own labels ("user", "shuffler", "collector", "attack"), so replacing
//! one party's randomness leaves every other draw unchanged.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Node in a tree of deterministic random streams.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rng {
    key: [u8; 32],
}

impl Rng {
    /// Root of the tree for a 64-bit seed.
    pub fn new(seed: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"augshuffle/root");
        h.update(seed.to_le_bytes());
        Rng {
            key: h.finalize().into(),
        }
    }

    /// Child node for a label and index, e.g. `("trial", 7)`.
    pub fn child(&self, label: &str, index: u64) -> Rng {
        let mut h = Sha256::new();
        h.update(self.key);
        h.update((label.len() as u64).to_le_bytes());
        h.update(label.as_bytes());
        h.update(index.to_le_bytes());
        Rng {
            key: h.finalize().into(),
        }
    }

    /// Family of streams sharing a label; members are addressed by index.
    pub fn family(&self, label: &str) -> StreamFamily {
        StreamFamily {
            key: self.child(label, u64::MAX).key,
        }
    }

    /// Single stream for a label.
    pub fn stream(&self, label: &str) -> ChaCha12Rng {
        self.family(label).get(0)
    }
}

/// Streams sharing a derived key and differing by ChaCha stream id.
#[derive(Clone, Debug)]
pub struct StreamFamily {
    key: [u8; 32],
}

impl StreamFamily {
    /// Stream number `index` of the family.
    pub fn get(&self, index: u64) -> ChaCha12Rng {
        let mut r = ChaCha12Rng::from_seed(self.key);
        r.set_stream(index);
        r
    }
}
