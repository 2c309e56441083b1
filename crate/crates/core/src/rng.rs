//! Reproducible random streams.
//!
//! [`Rng`] is a ChaCha8 stream cipher keyed from a 64-bit seed. ChaCha is a
//! counter-based generator: block `i` of the keystream is a pure function of
//! (key, stream id, `i`), so the output is identical on every platform.
//!
//! * Uniforms take the top 53 bits of a `u64` word: `u = (w >> 11) * 2^-53`,
//!   giving `u` in `[0, 1)`.
//! * Standard normals use the Box–Muller transform on two uniforms
//!   `u1 = 1 - u` (so `u1` is in `(0, 1]`) and `u2`:
//!   `r = sqrt(-2 ln u1)`, `z0 = r cos(2 pi u2)`, `z1 = r sin(2 pi u2)`.
//!   `z0` is returned first and `z1` is cached for the next call.
//!
//! Parallel work never shares an `Rng`; each work item derives its own with
//! [`Rng::derive`] from a base seed and its index path.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

// splitmix64 finaliser
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Independent generator for the work item at `path` under `base`.
    ///
    /// The derived seed folds each index through a splitmix64 round, so
    /// `(base, [a, b])` and `(base, [b, a])` give unrelated streams.
    pub fn derive(base: u64, path: &[u64]) -> Self {
        let mut s = mix64(base ^ 0x9e37_79b9_7f4a_7c15);
        for &p in path {
            s = mix64(s.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(mix64(p)));
        }
        Self::new(s)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `[lo, hi]` (inclusive).
    pub fn int_range(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        // Lemire's multiply-shift; bias is below 2^-40 for the spans used here.
        lo + ((self.next_u64() as u128 * span as u128) >> 64) as u64
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }

    /// Bernoulli draw with success probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}
