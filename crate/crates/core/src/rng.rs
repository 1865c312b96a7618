//! Deterministic, splittable random variates.
//!
//! Every stream is a ChaCha8 generator whose 256-bit key is derived by hashing
//! a [`StreamKey`]. Normal variates use Box–Muller and gamma variates use the
//! Marsaglia–Tsang squeeze, both built on the raw 64-bit output so results do
//! not depend on any external sampler implementation.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::model::Distribution;

/// Identifies one independent stream: a variable (`tag`) within a replication
/// of a study seeded by `master_seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub replication: u64,
    pub tag: u32,
}

impl StreamKey {
    pub fn new(master_seed: u64, replication: u64, tag: u32) -> Self {
        StreamKey {
            master_seed,
            replication,
            tag,
        }
    }

    fn seed_bytes(&self) -> [u8; 32] {
        let mut state = splitmix64(self.master_seed ^ 0x243F_6A88_85A3_08D3);
        state = splitmix64(state ^ self.replication.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        state = splitmix64(state ^ u64::from(self.tag).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
        let mut out = [0u8; 32];
        for chunk in out.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed, e.g. one per scenario of a reproduction run.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid distribution parameters: {0}")]
pub struct SamplingError(pub String);

/// A generator positioned at the start of the stream named by a [`StreamKey`].
pub struct Stream {
    rng: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    pub fn new(key: StreamKey) -> Self {
        Stream {
            rng: ChaCha8Rng::from_seed(key.seed_bytes()),
            spare_normal: None,
        }
    }

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..k`.
    pub fn below(&mut self, k: u64) -> u64 {
        debug_assert!(k > 0);
        // Lemire's multiply-shift with rejection for exact uniformity.
        let threshold = k.wrapping_neg() % k;
        loop {
            let m = u128::from(self.rng.next_u64()) * u128::from(k);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Gamma(shape, 1) by Marsaglia–Tsang; shapes below one are boosted
    /// through `G(a) = G(a + 1) * U^(1/a)`.
    pub fn standard_gamma(&mut self, shape: f64) -> f64 {
        if shape < 1.0 {
            let g = self.standard_gamma(shape + 1.0);
            return g * self.uniform().powf(1.0 / shape);
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.standard_normal();
            let t = 1.0 + c * x;
            if t <= 0.0 {
                continue;
            }
            let v = t * t * t;
            let u = self.uniform();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// One draw from `dist`. Parameters are assumed valid.
    pub fn draw(&mut self, dist: &Distribution) -> f64 {
        match *dist {
            Distribution::Normal { mean, sd } => mean + sd * self.standard_normal(),
            Distribution::Gamma { shape, scale } => scale * self.standard_gamma(shape),
            Distribution::RoundedUniform { lo, hi } => (lo + (hi - lo) * self.uniform()).round(),
            Distribution::PointMass(c) => c,
        }
    }
}

/// `n` i.i.d. draws from `dist` on the stream named by `key`.
pub fn sample(dist: &Distribution, key: StreamKey, n: usize) -> Result<Vec<f64>, SamplingError> {
    dist.check().map_err(SamplingError)?;
    let mut stream = Stream::new(key);
    Ok((0..n).map(|_| stream.draw(dist)).collect())
}
