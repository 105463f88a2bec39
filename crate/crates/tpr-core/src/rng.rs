//! Deterministic pseudo-random streams.
//!
//! Every random decision in the pipeline draws from a stream keyed by
//! `(global_seed, task_id, purpose_tag)`. Streams are independent of worker
//! scheduling: the same key always yields the same sequence, so a run is
//! reproducible no matter how tasks are distributed across threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// A deterministic stream of pseudo-random values for one `(seed, task, purpose)` key.
pub struct SeedStream {
    rng: ChaCha8Rng,
}

impl SeedStream {
    /// Derive the stream for `(global_seed, task_id, purpose)`.
    pub fn new(global_seed: u64, task_id: &str, purpose: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(global_seed.to_le_bytes());
        hasher.update([0u8]);
        hasher.update(task_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(purpose.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        SeedStream {
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.gen()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform in `[0, n)`. `n` must be nonzero.
    pub fn pick_index(&mut self, n: usize) -> usize {
        assert!(n > 0, "pick_index over empty range");
        self.rng.gen_range(0..n)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    /// Standard normal via Box-Muller, deterministic across platforms.
    pub fn normal(&mut self, mean: f64, sigma: f64) -> f64 {
        let u1 = self.next_f64().max(f64::MIN_POSITIVE);
        let u2 = self.next_f64();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        mean + sigma * z
    }
}
