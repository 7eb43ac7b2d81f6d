//! Seeded Brownian increment paths on uniform grids, with block-sum
//! coarsening so one fine path can drive integrations at several step sizes.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Raw (untruncated) Brownian increments ΔW_n^r ~ N(0, h) for n < N, r < m.
///
/// Stored column-per-step so each step's m increments are contiguous.
#[derive(Debug, Clone)]
pub struct WienerPath {
    m: usize,
    n_steps: usize,
    h: f64,
    /// Shape (m, N): column n holds the increments of step n.
    increments: DMatrix<f64>,
    seed: u64,
    stream: u64,
}

impl WienerPath {
    /// Draw a fresh path from the (seed, stream 0) generator.
    pub fn sample(m: usize, n_steps: usize, h: f64, seed: u64) -> Result<Self> {
        Self::sample_stream(m, n_steps, h, seed, 0)
    }

    /// Draw from an independent stream of the same base seed. Monte Carlo
    /// drivers give sample i the stream `seed + i`.
    pub fn sample_stream(m: usize, n_steps: usize, h: f64, seed: u64, stream: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidConfig("noise count m must be ≥ 1".into()));
        }
        if h <= 0.0 || !h.is_finite() {
            return Err(Error::InvalidConfig(format!("step size {h} must be positive")));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let scale = h.sqrt();
        let increments = DMatrix::from_fn(m, n_steps, |_, _| {
            let xi: f64 = StandardNormal.sample(&mut rng);
            scale * xi
        });
        Ok(WienerPath {
            m,
            n_steps,
            h,
            increments,
            seed,
            stream,
        })
    }

    pub fn noise_count(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.n_steps
    }

    pub fn is_empty(&self) -> bool {
        self.n_steps == 0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// The m raw increments of step n.
    pub fn step_increments(&self, n: usize) -> &[f64] {
        let start = n * self.m;
        &self.increments.as_slice()[start..start + self.m]
    }

    /// W(T) per noise: the telescoping sum of all increments.
    pub fn terminal(&self) -> Vec<f64> {
        (0..self.m)
            .map(|r| self.increments.row(r).iter().sum())
            .collect()
    }

    /// Sum blocks of q consecutive steps, yielding the same Brownian path on
    /// a grid with step qh.
    pub fn coarsen(&self, q: usize) -> Result<WienerPath> {
        if q == 0 || !self.n_steps.is_multiple_of(q) {
            return Err(Error::Grid(format!(
                "coarsening factor {q} does not divide {} steps",
                self.n_steps
            )));
        }
        let coarse_n = self.n_steps / q;
        let increments = DMatrix::from_fn(self.m, coarse_n, |r, n| {
            (0..q).map(|k| self.increments[(r, n * q + k)]).sum()
        });
        Ok(WienerPath {
            m: self.m,
            n_steps: coarse_n,
            h: self.h * q as f64,
            increments,
            seed: self.seed,
            stream: self.stream,
        })
    }

    /// Replace every increment with 0 (deterministic mode).
    pub fn zeroed(mut self) -> Self {
        self.increments.fill(0.0);
        self
    }
}
