//! Seeded, reproducible random streams.
//!
//! Uniform bits come from ChaCha8 (a counter-based stream cipher), so a
//! stream is a pure function of its seed on every platform. Normal deviates
//! use the Box–Muller transform; each pair of uniforms produces two normals
//! and the second is cached for the next call.

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ImageTensor;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha8Rng::seed_from_u64(seed), spare: None }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed of the child stream for `index`: `splitmix64(seed ^ splitmix64(index))`.
    /// Children are independent of how much the parent has been consumed.
    pub fn child_seed(seed: u64, index: u64) -> u64 {
        splitmix64(seed ^ splitmix64(index))
    }

    pub fn child(&self, index: u64) -> SeededRng {
        SeededRng::new(Self::child_seed(self.seed, index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], keeping the log finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<X>(&mut self, items: &mut [X]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Tensor of i.i.d. standard normal values.
pub fn sample_gaussian<T: Scalar>(
    rng: &mut SeededRng,
    channels: usize,
    height: usize,
    width: usize,
) -> Result<ImageTensor<T>> {
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::InvalidShape(format!("gaussian sample of shape ({channels}, {height}, {width})")));
    }
    let data = (0..channels * height * width).map(|_| T::lit(rng.gaussian())).collect();
    ImageTensor::from_vec(channels, height, width, data)
}
