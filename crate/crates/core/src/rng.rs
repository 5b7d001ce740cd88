//! Seeded sampling shared by the CLI benchmark and the test suites.
//!
//! Uniforms come from SplitMix64 (state increment `0x9E3779B97F4A7C15`,
//! output mix multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`,
//! shifts 30/27/31). A uniform in `[0, 1)` is `(next_u64 >> 11) * 2^-53`.
//! Gaussians use the Box-Muller transform on two consecutive uniforms
//! `u1, u2`: `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`, the sine branch is
//! discarded so every Gaussian consumes exactly two words.

use nalgebra::{DMatrix, DVector};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

use crate::Scalar;

#[derive(Debug, Clone)]
pub struct Sampler {
    inner: SplitMix64,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: SplitMix64::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    /// Row-major fill, i.e. entry `(i, j)` is the `i * cols + j`-th draw.
    pub fn gaussian_matrix<T: Scalar>(&mut self, rows: usize, cols: usize) -> DMatrix<T> {
        let data: Vec<T> = (0..rows * cols).map(|_| T::lit(self.gaussian())).collect();
        DMatrix::from_row_slice(rows, cols, &data)
    }

    pub fn gaussian_vector<T: Scalar>(&mut self, n: usize) -> DVector<T> {
        DVector::from_fn(n, |_, _| T::lit(self.gaussian()))
    }

    /// Uniformly distributed point on the unit sphere.
    pub fn unit_vector<T: Scalar>(&mut self, n: usize) -> DVector<T> {
        loop {
            let v = self.gaussian_vector::<T>(n);
            let norm = v.norm();
            if norm > T::lit(1e-12) {
                return v / norm;
            }
        }
    }
}
