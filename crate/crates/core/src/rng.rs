//! Splittable, reproducible random streams.
//!
//! Every stream is identified by a 256-bit key. Children are derived by
//! hashing the parent key together with a label or an index, so the stream
//! for `root -> "theorem1" -> replicate 7` is the same no matter which thread
//! asks for it or in which order. The key seeds a ChaCha8 generator, which is
//! itself counter based.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A node in the seed tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamSeed([u8; 32]);

impl StreamSeed {
    pub fn root(seed: u64) -> Self {
        Self::derive(&[0u8; 32], b"root", &seed.to_le_bytes())
    }

    /// Child stream keyed by a label (campaign id, experiment stage, ...).
    pub fn child(&self, label: &str) -> Self {
        Self::derive(&self.0, b"label", label.as_bytes())
    }

    /// Child stream keyed by an index (replicate number, cell number, ...).
    pub fn index(&self, i: u64) -> Self {
        Self::derive(&self.0, b"index", &i.to_le_bytes())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::from_seed(self.0)
    }

    pub fn hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn derive(parent: &[u8; 32], kind: &[u8], payload: &[u8]) -> Self {
        let mut h = Sha256::new();
        h.update(parent);
        h.update((kind.len() as u64).to_le_bytes());
        h.update(kind);
        h.update((payload.len() as u64).to_le_bytes());
        h.update(payload);
        let digest = h.finalize();
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        StreamSeed(out)
    }
}
