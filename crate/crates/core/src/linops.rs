//! Linear forward operators and the data-consistency projection
//! `x = (I - A^+ A) x_raw + A^+ y`.
//!
//! The projection replaces the row-space component of a raw sample with the
//! one implied by the measurements and keeps the nullspace component. It does
//! nothing about measurement noise, so it suits low-noise problems only.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::{fft, fft2, Direction};
use crate::scalar::Real;

pub type ComplexVector<T> = Vec<Complex<T>>;

pub fn from_real<T: Real>(x: &[T]) -> ComplexVector<T> {
    x.iter().map(|&v| Complex::new(v, T::zero())).collect()
}

/// `[re0, im0, re1, im1, ...]`
pub fn interleave<T: Real>(x: &[Complex<T>]) -> Vec<T> {
    x.iter().flat_map(|c| [c.re, c.im]).collect()
}

pub fn deinterleave<T: Real>(x: &[T]) -> Result<ComplexVector<T>> {
    if !x.len().is_multiple_of(2) {
        return Err(Error::invalid("interleaved complex data has odd length"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("complex vector"));
    }
    Ok(x.chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect())
}

fn check_len<T>(x: &[T], n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    Ok(())
}

fn sub<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> ComplexVector<T> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn add<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> ComplexVector<T> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn zero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

pub trait LinearOperator<T: Real> {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn apply(&self, x: &[Complex<T>]) -> Result<ComplexVector<T>>;
    fn adjoint(&self, y: &[Complex<T>]) -> Result<ComplexVector<T>>;
    /// `A^+ y`.
    fn pinv_apply(&self, y: &[Complex<T>]) -> Result<ComplexVector<T>>;

    /// `(I - A^+ A) x`.
    fn nullspace_project(&self, x: &[Complex<T>]) -> Result<ComplexVector<T>> {
        let row = self.rowspace_project(x)?;
        Ok(sub(x, &row))
    }

    /// `A^+ A x`.
    fn rowspace_project(&self, x: &[Complex<T>]) -> Result<ComplexVector<T>> {
        self.pinv_apply(&self.apply(x)?)
    }

    fn data_consistency(&self, x_raw: &[Complex<T>], y: &[Complex<T>]) -> Result<ComplexVector<T>> {
        check_len(y, self.output_dim())?;
        let null = self.nullspace_project(x_raw)?;
        let fit = self.pinv_apply(y)?;
        Ok(add(&null, &fit))
    }
}

fn check_indices(kept: &[usize], n: usize) -> Result<()> {
    if let Some(&last) = kept.last() {
        if last >= n {
            return Err(Error::invalid(format!("index {last} out of range for dimension {n}")));
        }
    }
    if kept.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("indices must be strictly increasing"));
    }
    Ok(())
}

/// Row selector: keeps the listed entries of an `n`-vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskOperator {
    kept: Vec<usize>,
    n: usize,
}

impl MaskOperator {
    pub fn new(kept: Vec<usize>, n: usize) -> Result<Self> {
        check_indices(&kept, n)?;
        Ok(Self { kept, n })
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    fn kept_flags(&self) -> Vec<bool> {
        let mut flags = vec![false; self.n];
        for &k in &self.kept {
            flags[k] = true;
        }
        flags
    }
}

impl<T: Real> LinearOperator<T> for MaskOperator {
    fn input_dim(&self) -> usize {
        self.n
    }

    fn output_dim(&self) -> usize {
        self.kept.len()
    }

    fn apply(&self, x: &[Complex<T>]) -> Result<ComplexVector<T>> {
        check_len(x, self.n)?;
        Ok(self.kept.iter().map(|&k| x[k]).collect())
    }

    fn adjoint(&self, y: &[Complex<T>]) -> Result<ComplexVector<T>> {
        check_len(y, self.kept.len())?;
        let mut out = vec![zero(); self.n];
        for (&k, &v) in self.kept.iter().zip(y) {
            out[k] = v;
        }
        Ok(out)
    }

    fn pinv_apply(&self, y: &[Complex<T>]) -> Result<ComplexVector<T>> {
        // rows of a selector are orthonormal
        self.adjoint(y)
    }

    fn nullspace_project(&self, x: &[Complex<T>]) -> Result<ComplexVector<T>> {
        check_len(x, self.n)?;
        let flags = self.kept_flags();
        Ok(x.iter().zip(flags).map(|(&v, k)| if k { zero() } else { v }).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourierDims {
    Line(usize),
    Grid(usize, usize),
}

impl FourierDims {
    pub fn len(&self) -> usize {
        match *self {
            FourierDims::Line(n) => n,
            FourierDims::Grid(h, w) => h * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// What the operator returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Measurement {
    /// `A = M F`: the kept Fourier coefficients.
    #[default]
    KSpace,
    /// `A = F^H M^T M F`: the zero-filled (aliased) image, an orthogonal
    /// projector.
    Image,
}

/// Subsampled unitary DFT. `kept` indexes the flattened (row-major) spectrum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FourierSubsampler {
    dims: FourierDims,
    kept: Vec<usize>,
    measurement: Measurement,
}

impl FourierSubsampler {
    pub fn new(dims: FourierDims, kept: Vec<usize>, measurement: Measurement) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::invalid("empty Fourier dimensions"));
        }
        check_indices(&kept, dims.len())?;
        Ok(Self {
            dims,
            kept,
            measurement,
        })
    }

    pub fn dims(&self) -> FourierDims {
        self.dims
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn measurement(&self) -> Measurement {
        self.measurement
    }

    pub fn transform<T: Real>(&self, x: &[Complex<T>], dir: Direction) -> Result<ComplexVector<T>> {
        check_len(x, self.dims.len())?;
        match self.dims {
            FourierDims::Line(_) => Ok(fft(x, dir)),
            FourierDims::Grid(h, w) => fft2(x, h, w, dir),
        }
    }

    // F^H D F x with D zeroing either the kept or the discarded frequencies
    fn filter<T: Real>(&self, x: &[Complex<T>], keep: bool) -> Result<ComplexVector<T>> {
        let mut spec = self.transform(x, Direction::Forward)?;
        let mut flags = vec![!keep; spec.len()];
        for &k in &self.kept {
            flags[k] = keep;
        }
        for (v, f) in spec.iter_mut().zip(flags) {
            if !f {
                *v = zero();
            }
        }
        self.transform(&spec, Direction::Inverse)
    }
}

impl<T: Real> LinearOperator<T> for FourierSubsampler {
    fn input_dim(&self) -> usize {
        self.dims.len()
    }

    fn output_dim(&self) -> usize {
        match self.measurement {
            Measurement::KSpace => self.kept.len(),
            Measurement::Image => self.dims.len(),
        }
    }

    fn apply(&self, x: &[Complex<T>]) -> Result<ComplexVector<T>> {
        match self.measurement {
            Measurement::KSpace => {
                let spec = self.transform(x, Direction::Forward)?;
                Ok(self.kept.iter().map(|&k| spec[k]).collect())
            }
            Measurement::Image => self.filter(x, true),
        }
    }

    fn adjoint(&self, y: &[Complex<T>]) -> Result<ComplexVector<T>> {
        match self.measurement {
            Measurement::KSpace => {
                check_len(y, self.kept.len())?;
                let mut spec = vec![zero(); self.dims.len()];
                for (&k, &v) in self.kept.iter().zip(y) {
                    spec[k] = v;
                }
                self.transform(&spec, Direction::Inverse)
            }
            // self-adjoint
            Measurement::Image => self.filter(y, true),
        }
    }

    fn pinv_apply(&self, y: &[Complex<T>]) -> Result<ComplexVector<T>> {
        // orthonormal rows (k-space) or an orthogonal projector (image):
        // either way the pseudo-inverse is the adjoint
        self.adjoint(y)
    }

    fn nullspace_project(&self, x: &[Complex<T>]) -> Result<ComplexVector<T>> {
        self.filter(x, false)
    }
}

/// Block-diagonal lifting `I_C (x) A` over `coils` stacked copies.
#[derive(Debug, Clone, PartialEq)]
pub struct Multicoil<O> {
    inner: O,
    coils: usize,
}

impl<O> Multicoil<O> {
    pub fn new(inner: O, coils: usize) -> Result<Self> {
        if coils == 0 {
            return Err(Error::invalid("coil count must be at least 1"));
        }
        Ok(Self { inner, coils })
    }

    pub fn coils(&self) -> usize {
        self.coils
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O> Multicoil<O> {
    fn blockwise<T: Real>(
        &self,
        x: &[Complex<T>],
        block_in: usize,
        f: impl Fn(&[Complex<T>]) -> Result<ComplexVector<T>>,
    ) -> Result<ComplexVector<T>> {
        check_len(x, block_in * self.coils)?;
        let mut out = Vec::new();
        for block in x.chunks_exact(block_in.max(1)).take(self.coils) {
            out.extend(f(block)?);
        }
        Ok(out)
    }
}

impl<T: Real, O: LinearOperator<T>> LinearOperator<T> for Multicoil<O> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim() * self.coils
    }

    fn output_dim(&self) -> usize {
        self.inner.output_dim() * self.coils
    }

    fn apply(&self, x: &[Complex<T>]) -> Result<ComplexVector<T>> {
        self.blockwise(x, self.inner.input_dim(), |b| self.inner.apply(b))
    }

    fn adjoint(&self, y: &[Complex<T>]) -> Result<ComplexVector<T>> {
        self.blockwise(y, self.inner.output_dim(), |b| self.inner.adjoint(b))
    }

    fn pinv_apply(&self, y: &[Complex<T>]) -> Result<ComplexVector<T>> {
        self.blockwise(y, self.inner.output_dim(), |b| self.inner.pinv_apply(b))
    }

    fn nullspace_project(&self, x: &[Complex<T>]) -> Result<ComplexVector<T>> {
        self.blockwise(x, self.inner.input_dim(), |b| self.inner.nullspace_project(b))
    }
}

/// Parsed mask file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MaskSpec {
    Pixel { n: usize, kept: Vec<usize> },
    Fourier { dims: FourierDims, kept: Vec<usize> },
}

impl MaskSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::format("mask file", msg);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("{s:?}: {e}")))
        };
        let mut kept = lines.map(num).collect::<Result<Vec<_>>>()?;
        kept.sort_unstable();
        if kept.windows(2).any(|w| w[0] == w[1]) {
            return Err(bad("duplicate index".into()));
        }
        let spec = if let Some(n) = header.strip_prefix("N=") {
            MaskSpec::Pixel { n: num(n)?, kept }
        } else if let Some(d) = header.strip_prefix("DIMS=") {
            let dims = match d.split_once('x') {
                Some((h, w)) => FourierDims::Grid(num(h)?, num(w)?),
                None => FourierDims::Line(num(d)?),
            };
            MaskSpec::Fourier { dims, kept }
        } else {
            return Err(bad(format!("header {header:?} is neither N=<dim> nor DIMS=<h>x<w>")));
        };
        let (n, kept) = match &spec {
            MaskSpec::Pixel { n, kept } => (*n, kept),
            MaskSpec::Fourier { dims, kept } => (dims.len(), kept),
        };
        check_indices(kept, n).map_err(|e| bad(e.to_string()))?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let (header, kept) = match self {
            MaskSpec::Pixel { n, kept } => (format!("N={n}"), kept),
            MaskSpec::Fourier {
                dims: FourierDims::Line(n),
                kept,
            } => (format!("DIMS={n}"), kept),
            MaskSpec::Fourier {
                dims: FourierDims::Grid(h, w),
                kept,
            } => (format!("DIMS={h}x{w}"), kept),
        };
        let mut out = header;
        out.push('\n');
        for k in kept {
            out.push_str(&k.to_string());
            out.push('\n');
        }
        out
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            MaskSpec::Pixel { n, .. } => *n,
            MaskSpec::Fourier { dims, .. } => dims.len(),
        }
    }
}
