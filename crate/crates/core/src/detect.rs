//! Event probabilities from posterior samples.
//!
//! With a calibrated classifier `c(x) = Pr{z = 1 | x}`, averaging `c` over
//! posterior samples estimates `Pr{z = 1 | y}`. Evaluating `c` at a point
//! estimate does not, unless `c` is affine on the support.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{pairwise_sum, Real};
use crate::toy::SampleBatch;

pub trait Classifier<T: Real>: Send + Sync {
    fn prob(&self, x: &[T]) -> T;

    fn describe(&self) -> String;
}

/// `1[x[coord] > tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Threshold<T> {
    pub coord: usize,
    pub tau: T,
}

impl<T: Real> Classifier<T> for Threshold<T> {
    fn prob(&self, x: &[T]) -> T {
        if x[self.coord] > self.tau {
            T::one()
        } else {
            T::zero()
        }
    }

    fn describe(&self) -> String {
        format!("threshold(x[{}] > {})", self.coord, self.tau)
    }
}

/// `1 / (1 + exp(-(x[coord] - center) / scale))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Logistic<T> {
    pub coord: usize,
    pub center: T,
    pub scale: T,
}

impl<T: Real> Classifier<T> for Logistic<T> {
    fn prob(&self, x: &[T]) -> T {
        let t = (x[self.coord] - self.center) / self.scale;
        // no overflow for large |t|
        if t >= T::zero() {
            (T::one() + (-t).exp()).recip()
        } else {
            let e = t.exp();
            e / (T::one() + e)
        }
    }

    fn describe(&self) -> String {
        format!("logistic(x[{}], center {}, scale {})", self.coord, self.center, self.scale)
    }
}

/// `clamp(slope * x[coord] + intercept, 0, 1)`; affine wherever it does not
/// saturate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClampedLinear<T> {
    pub coord: usize,
    pub slope: T,
    pub intercept: T,
}

impl<T: Real> Classifier<T> for ClampedLinear<T> {
    fn prob(&self, x: &[T]) -> T {
        (self.slope * x[self.coord] + self.intercept).max(T::zero()).min(T::one())
    }

    fn describe(&self) -> String {
        format!("clamp({} * x[{}] + {}, 0, 1)", self.slope, self.coord, self.intercept)
    }
}

/// Wraps any closure as a classifier.
pub struct FnClassifier<F> {
    f: F,
    name: String,
}

impl<F> FnClassifier<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { f, name: name.into() }
    }
}

impl<T: Real, F: Fn(&[T]) -> T + Send + Sync> Classifier<T> for FnClassifier<F> {
    fn prob(&self, x: &[T]) -> T {
        (self.f)(x)
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

// Mean taken relative to the first value, so identical inputs reproduce it
// exactly.
fn shifted_mean<T: Real>(values: &[T]) -> T {
    let base = values[0];
    let dev: Vec<T> = values.iter().map(|&v| v - base).collect();
    base + pairwise_sum(&dev) / T::of(values.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEstimate<T> {
    pub probability: T,
    /// Standard error of the sample mean (zero for a single sample).
    pub std_error: T,
    pub n: usize,
}

fn evaluate<T: Real, C: Classifier<T> + ?Sized>(c: &C, samples: &SampleBatch<T>) -> Result<Vec<T>> {
    let values: Vec<T> = (0..samples.n_rows())
        .into_par_iter()
        .map(|i| c.prob(samples.row(i)))
        .collect();
    if let Some(&bad) = values.iter().find(|&&v| !(v >= T::zero() && v <= T::one())) {
        return Err(Error::ClassifierRange(bad.as_f64()));
    }
    Ok(values)
}

pub fn detection_estimate<T: Real, C: Classifier<T> + ?Sized>(
    c: &C,
    samples: &SampleBatch<T>,
) -> Result<DetectionEstimate<T>> {
    let values = evaluate(c, samples)?;
    let n = values.len();
    let mean = shifted_mean(&values);
    let std_error = if n > 1 {
        let dev: Vec<T> = values.iter().map(|&v| (v - mean) * (v - mean)).collect();
        (pairwise_sum(&dev) / T::of(n - 1) / T::of(n)).sqrt()
    } else {
        T::zero()
    };
    // the clamp guards against rounding past 1
    Ok(DetectionEstimate {
        probability: mean.max(T::zero()).min(T::one()),
        std_error,
        n,
    })
}

/// `(1/P) sum_i c(x_i)`.
pub fn detection_probability<T: Real, C: Classifier<T> + ?Sized>(
    c: &C,
    samples: &SampleBatch<T>,
) -> Result<T> {
    Ok(detection_estimate(c, samples)?.probability)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlugInGap<T> {
    /// Average of the classifier over the samples.
    pub avg_of_c: T,
    /// Classifier evaluated at the sample average.
    pub c_of_avg: T,
}

impl<T: Real> PlugInGap<T> {
    pub fn gap(&self) -> T {
        self.avg_of_c - self.c_of_avg
    }
}

pub fn plug_in_gap<T: Real, C: Classifier<T> + ?Sized>(
    c: &C,
    samples: &SampleBatch<T>,
) -> Result<PlugInGap<T>> {
    if samples.n_rows() < 2 {
        return Err(Error::invalid("plug-in comparison needs at least 2 samples"));
    }
    let avg_of_c = detection_probability(c, samples)?;
    let mean: Vec<T> = (0..samples.dim())
        .map(|j| shifted_mean(&samples.rows().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let c_of_avg = c.prob(&mean);
    if !(c_of_avg >= T::zero() && c_of_avg <= T::one()) {
        return Err(Error::ClassifierRange(c_of_avg.as_f64()));
    }
    Ok(PlugInGap { avg_of_c, c_of_avg })
}

/// Runs one binary classifier per class and rescales the probabilities to
/// sum to one. A convenience for K-ary attributes.
pub fn normalized_probabilities<T: Real>(
    classes: &[&dyn Classifier<T>],
    samples: &SampleBatch<T>,
) -> Result<Vec<T>> {
    if classes.is_empty() {
        return Err(Error::invalid("no classifiers given"));
    }
    let raw = classes
        .iter()
        .map(|c| detection_probability(*c, samples))
        .collect::<Result<Vec<T>>>()?;
    let total: T = raw.iter().copied().sum();
    if total <= T::zero() {
        return Err(Error::invalid("all class probabilities are zero"));
    }
    Ok(raw.into_iter().map(|p| p / total).collect())
}
