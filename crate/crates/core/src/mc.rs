//! Monte Carlo estimates with standard errors.
//!
//! Replicates are grouped into fixed-size blocks; block `b` draws from lane
//! `b` of the caller's stream. Blocks run in parallel but values are kept in
//! block order and reduced by pairwise summation, so the result does not
//! depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{SeededStream, StreamRng};
use crate::scalar::{pairwise_sum, Real};

pub const BLOCK: usize = 4096;

/// Monte Carlo estimate of an expected loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEstimate<T> {
    pub value: T,
    /// Empirical SD of the per-replicate values divided by `sqrt(n_outer)`.
    pub std_error: T,
    pub n_outer: usize,
    pub p: usize,
}

impl<T: Real> LossEstimate<T> {
    pub fn from_values(values: &[T], p: usize) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::invalid("at least two replicates are required"));
        }
        let mean = pairwise_sum(values) / T::of(n);
        let dev: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
        let var = pairwise_sum(&dev) / T::of(n - 1);
        Ok(Self {
            value: mean,
            std_error: (var / T::of(n)).sqrt(),
            n_outer: n,
            p,
        })
    }

    /// Number of standard errors separating the estimate from `target`.
    pub fn z_score(&self, target: T) -> T {
        let diff = (self.value - target).abs();
        if self.std_error > T::zero() {
            diff / self.std_error
        } else if diff == T::zero() {
            T::zero()
        } else {
            T::infinity()
        }
    }
}

/// Draws `n` replicate values, `BLOCK` per lane of `stream`.
pub fn replicate_values<T, F>(stream: SeededStream, n: usize, draw: F) -> Vec<T>
where
    T: Real,
    F: Fn(&mut StreamRng) -> T + Sync,
{
    let blocks = n.div_ceil(BLOCK);
    let per_block: Vec<Vec<T>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream.lane(b as u64);
            let len = BLOCK.min(n - b * BLOCK);
            (0..len).map(|_| draw(&mut rng)).collect()
        })
        .collect();
    per_block.into_iter().flatten().collect()
}

pub fn estimate<T, F>(stream: SeededStream, n: usize, p: usize, draw: F) -> Result<LossEstimate<T>>
where
    T: Real,
    F: Fn(&mut StreamRng) -> T + Sync,
{
    if n < 2 {
        return Err(Error::invalid("n_outer must be at least 2"));
    }
    LossEstimate::from_values(&replicate_values(stream, n, draw), p)
}
