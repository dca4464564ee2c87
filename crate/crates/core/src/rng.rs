//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a [`Stream`], a value type
//! holding a 64-bit key. Child streams are derived by hashing the parent key
//! with an index, so a replicate's draws depend only on its position in the
//! tree (root seed, sample size, replicate, attempt) and never on scheduling
//! or on how many other streams were consumed before it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stream {
    key: u64,
    degenerate: bool,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: splitmix64(seed),
            degenerate: false,
        }
    }

    /// A stream whose resamples are always the identity (every bootstrap
    /// sample equals the original rows). All children are the stream itself,
    /// so any strategy randomness (e.g. CV folds) is replayed identically.
    pub fn degenerate(seed: u64) -> Self {
        Self {
            key: splitmix64(seed),
            degenerate: true,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn child(&self, index: u64) -> Self {
        if self.degenerate {
            return *self;
        }
        Self {
            key: splitmix64(self.key ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019))),
            degenerate: false,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }

    /// `n` row indices drawn uniformly with replacement.
    pub fn resample_indices(&self, n: usize) -> Vec<usize> {
        if self.degenerate {
            return (0..n).collect();
        }
        let mut rng = self.rng();
        (0..n).map(|_| rng.random_range(0..n)).collect()
    }

    /// Uniform random permutation of `0..n`.
    pub fn permutation(&self, n: usize) -> Vec<usize> {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut self.rng());
        perm
    }
}
