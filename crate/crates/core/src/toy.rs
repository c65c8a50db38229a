//! Diagonal Gaussian posteriors and the affine toy generator
//! `G(z, y) = mu + sigma * z`.

use crate::error::{Error, Result};
use crate::rng::{standard_normal, SeededStream};
use crate::scalar::Real;

/// True posterior `N(mu0, diag(sigma0^2))` for one measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorContext<T> {
    pub mu0: Vec<T>,
    pub sigma0: Vec<T>,
}

/// Per-context true posteriors sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPosterior<T> {
    contexts: Vec<PosteriorContext<T>>,
}

impl<T: Real> ToyPosterior<T> {
    pub fn new(contexts: Vec<PosteriorContext<T>>) -> Result<Self> {
        let first = contexts
            .first()
            .ok_or_else(|| Error::invalid("posterior needs at least one context"))?;
        let dim = first.mu0.len();
        if dim == 0 {
            return Err(Error::invalid("posterior dimension must be at least 1"));
        }
        for c in &contexts {
            for len in [c.mu0.len(), c.sigma0.len()] {
                if len != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: len,
                    });
                }
            }
            if c.mu0.iter().chain(&c.sigma0).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("posterior parameters"));
            }
            if c.sigma0.iter().any(|&s| s <= T::zero()) {
                return Err(Error::invalid("posterior sigma0 must be positive"));
            }
        }
        Ok(Self { contexts })
    }

    /// Single context, single dimension.
    pub fn scalar(mu0: T, sigma0: T) -> Result<Self> {
        Self::new(vec![PosteriorContext {
            mu0: vec![mu0],
            sigma0: vec![sigma0],
        }])
    }

    pub fn dim(&self) -> usize {
        self.contexts[0].mu0.len()
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn contexts(&self) -> &[PosteriorContext<T>] {
        &self.contexts
    }

    pub fn context(&self, index: usize) -> Result<&PosteriorContext<T>> {
        self.contexts.get(index).ok_or(Error::InvalidContext {
            index,
            count: self.contexts.len(),
        })
    }

    /// Generator parameters that reproduce the given context exactly.
    pub fn matched_generator(&self, index: usize) -> Result<GeneratorParams<T>> {
        let c = self.context(index)?;
        GeneratorParams::new(c.mu0.clone(), c.sigma0.clone())
    }
}

/// Toy generator parameters. `sigma = 0` is mode collapse.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams<T> {
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
}

impl<T: Real> GeneratorParams<T> {
    pub fn new(mu: Vec<T>, sigma: Vec<T>) -> Result<Self> {
        if mu.len() != sigma.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                found: sigma.len(),
            });
        }
        if mu.is_empty() {
            return Err(Error::invalid("generator dimension must be at least 1"));
        }
        if mu.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("generator parameters"));
        }
        if sigma.iter().any(|&s| s < T::zero()) {
            return Err(Error::invalid("generator sigma must be nonnegative"));
        }
        Ok(Self { mu, sigma })
    }

    pub fn scalar(mu: T, sigma: T) -> Result<Self> {
        Self::new(vec![mu], vec![sigma])
    }

    /// The same `(mu, sigma)` in every one of `dim` coordinates.
    pub fn uniform(mu: T, sigma: T, dim: usize) -> Result<Self> {
        Self::new(vec![mu; dim], vec![sigma; dim])
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Posterior,
    Generator,
}

/// `n` rows of `dim`-dimensional draws, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<T> {
    values: Vec<T>,
    n_rows: usize,
    dim: usize,
    pub origin: Origin,
    pub stream: SeededStream,
}

impl<T: Real> SampleBatch<T> {
    pub fn from_rows(
        rows: &[Vec<T>],
        origin: Origin,
        stream: SeededStream,
    ) -> Result<Self> {
        let dim = rows
            .first()
            .ok_or_else(|| Error::invalid("sample batch needs at least one row"))?
            .len();
        if dim == 0 {
            return Err(Error::invalid("sample dimension must be at least 1"));
        }
        let mut values = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::from_flat(values, dim, origin, stream)
    }

    pub fn from_flat(
        values: Vec<T>,
        dim: usize,
        origin: Origin,
        stream: SeededStream,
    ) -> Result<Self> {
        if dim == 0 || values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::invalid("sample values must form n >= 1 full rows"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample batch"));
        }
        Ok(Self {
            n_rows: values.len() / dim,
            values,
            dim,
            origin,
            stream,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[T]> {
        self.values.chunks_exact(self.dim)
    }
}

fn draw_affine<T: Real>(mu: &[T], sigma: &[T], n: usize, stream: SeededStream) -> Vec<T> {
    let mut rng = stream.rng();
    let mut values = Vec::with_capacity(n * mu.len());
    for _ in 0..n {
        for (&m, &s) in mu.iter().zip(sigma) {
            let z: T = standard_normal(&mut rng);
            values.push(m + s * z);
        }
    }
    values
}

/// `n` i.i.d. draws of `x | y ~ N(mu0, sigma0^2)` for one context.
pub fn sample_posterior<T: Real>(
    post: &ToyPosterior<T>,
    context: usize,
    n: usize,
    stream: SeededStream,
) -> Result<SampleBatch<T>> {
    let c = post.context(context)?;
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let values = draw_affine(&c.mu0, &c.sigma0, n, stream);
    SampleBatch::from_flat(values, c.mu0.len(), Origin::Posterior, stream)
}

/// `n` generator outputs `mu + sigma * z`, `z ~ N(0, I)`.
pub fn sample_generator<T: Real>(
    params: &GeneratorParams<T>,
    n: usize,
    stream: SeededStream,
) -> Result<SampleBatch<T>> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let values = draw_affine(&params.mu, &params.sigma, n, stream);
    SampleBatch::from_flat(values, params.dim(), Origin::Generator, stream)
}

/// Elementwise mean of the first `p` rows.
pub fn p_sample_average<T: Real>(batch: &SampleBatch<T>, p: usize) -> Result<Vec<T>> {
    if p == 0 {
        return Err(Error::invalid("P must be at least 1"));
    }
    if p > batch.n_rows() {
        return Err(Error::invalid(format!(
            "P = {p} exceeds the {} available rows",
            batch.n_rows()
        )));
    }
    if p == 1 {
        return Ok(batch.row(0).to_vec());
    }
    let mut acc = vec![T::zero(); batch.dim()];
    for row in batch.rows().take(p) {
        for (a, &v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
    let inv = T::of(p);
    Ok(acc.into_iter().map(|a| a / inv).collect())
}
