//! Counter-based random streams.
//!
//! Every trial gets its own ChaCha8 key derived from `(master seed, domain,
//! trial index)`. Within a trial, stream 0 is reserved for auxiliary draws
//! (changepoints, supports, signs) and row `j` reads stream `j + 1`. No
//! draw depends on the order in which trials or rows are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which hypothesis (or side computation) a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Domain {
    Null,
    Alternative,
    /// Free-form tag for auxiliary experiments.
    Other(u64),
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Null => 0x4830_0000_0000_0000,
            Domain::Alternative => 0x4831_0000_0000_0000,
            Domain::Other(t) => splitmix64(t ^ 0x4155_5800_0000_0000),
        }
    }
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a 64-bit child seed, e.g. one per sweep cell.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5EED)))
}

/// The family of streams for one trial.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    base: ChaCha8Rng,
}

impl TrialStreams {
    pub fn new(seed: u64, domain: Domain, trial: u64) -> Self {
        let h = splitmix64(splitmix64(seed) ^ domain.tag()) ^ splitmix64(trial.wrapping_mul(0xD605_BBB5_8C8A_BBDB));
        let mut key = [0u8; 32];
        for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
            chunk.copy_from_slice(&splitmix64(h.wrapping_add(i as u64)).to_le_bytes());
        }
        Self {
            base: ChaCha8Rng::from_seed(key),
        }
    }

    fn stream(&self, id: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(id);
        rng.set_word_pos(0);
        rng
    }

    pub fn aux(&self) -> ChaCha8Rng {
        self.stream(0)
    }

    pub fn row(&self, j: usize) -> ChaCha8Rng {
        self.stream(j as u64 + 1)
    }
}
