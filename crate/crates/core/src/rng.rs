//! Seeded random streams.
//!
//! Every stochastic operation takes a [`SeededRng`] built on ChaCha8, which
//! produces the same stream on every platform for a given seed. Independent
//! sub-streams are derived with [`SeededRng::derive`] by mixing the parent
//! seed with a stream label through SplitMix64, so adding draws to one stream
//! never shifts another.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::image::{Image, ValueRange};

pub const ALGORITHM: &str = "chacha8";

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for item `index` of a batch run under `seed` (`seed ^ index`, then mixed).
pub fn item_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ index)
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent stream keyed by `(self.seed, stream)`; does not advance `self`.
    pub fn derive(&self, stream: u64) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ splitmix64(stream.wrapping_add(1))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `lo..=hi`.
    pub fn int_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.inner.random_range(lo..=hi)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn poisson(&mut self, lambda: f64) -> f64 {
        if lambda <= 0.0 {
            return 0.0;
        }
        Poisson::new(lambda)
            .map(|d| d.sample(&mut self.inner))
            .unwrap_or(lambda)
    }

    /// Image of i.i.d. standard normal values.
    pub fn normal_image(&mut self, width: usize, height: usize, channels: usize) -> Image {
        let data: Vec<f64> = (0..width * height * channels).map(|_| self.normal()).collect();
        Image::from_vec(width, height, channels, data, ValueRange::Model)
            .expect("finite normal draws")
    }

    pub fn normal_like(&mut self, img: &Image) -> Image {
        self.normal_image(img.width(), img.height(), img.channels())
    }
}
