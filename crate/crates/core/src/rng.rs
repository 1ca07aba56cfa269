//! Counter-based seeded streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha stream keyed by
//! `(seed, key)`, so a draw depends only on its key and never on the order in
//! which other draws happened.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent generator for stream `key` under `seed`.
pub fn stream(seed: u64, key: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key);
    rng
}

/// Child seed for sub-experiment `key`.
pub fn derive_seed(seed: u64, key: u64) -> u64 {
    stream(seed, key).random()
}

/// Per-unit tie-breaking uniforms `U_j`.
///
/// The draw for unit `j` is a pure function of `(seed, j)`. The randomized,
/// oracle and same-class p-values of one unit therefore share the same `U_j`
/// whenever they are built from the same breaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TieBreaker {
    seed: u64,
}

impl TieBreaker {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform on the open interval (0, 1) for unit `j`.
    pub fn u(&self, j: usize) -> f64 {
        stream(self.seed, j as u64).sample(Open01)
    }

    pub fn draws(&self, m: usize) -> Vec<f64> {
        (0..m).map(|j| self.u(j)).collect()
    }
}
