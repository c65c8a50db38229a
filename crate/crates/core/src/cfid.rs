//! Conditional and unconditional Fréchet distances between Gaussian fits of
//! embedding sets.
//!
//! Statistics use the population convention (divide by the row count) and
//! the conditional mean gap is evaluated in closed form as
//! `|mu_x - mu_xhat|^2 + tr[(S_xy - S_xhaty) S_yy^+ (S_xy - S_xhaty)^T]`.

use crate::error::{Error, Result};
use crate::linalg::{clamp_psd, pinv_symmetric, sqrtm_psd, sqrtm_psd_scaled, Matrix, PINV_RCOND};
use crate::scalar::{pairwise_sum, Real};

/// Negative distances down to `-NEGATIVE_CLAMP_TOL * max(1, scale)` are
/// rounding and clamp to zero; `scale` is the total trace involved.
pub const NEGATIVE_CLAMP_TOL: f64 = 1e-8;

/// Truth, measurement and generated embeddings, one row per
/// (measurement, posterior sample) pair. Each distinct measurement occupies
/// `p` consecutive rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T> {
    x: Matrix<T>,
    y: Matrix<T>,
    xhat: Matrix<T>,
    p: usize,
}

impl<T: Real> EmbeddingSet<T> {
    pub fn new(x: Matrix<T>, y: Matrix<T>, xhat: Matrix<T>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("repetition count P must be at least 1"));
        }
        for m in [&y, &xhat] {
            if m.rows() != x.rows() {
                return Err(Error::DimensionMismatch {
                    expected: x.rows(),
                    found: m.rows(),
                });
            }
        }
        if xhat.cols() != x.cols() {
            return Err(Error::DimensionMismatch {
                expected: x.cols(),
                found: xhat.cols(),
            });
        }
        if x.rows() == 0 {
            return Err(Error::invalid("embedding set has no rows"));
        }
        if !x.rows().is_multiple_of(p) {
            return Err(Error::invalid(format!(
                "{} rows is not a multiple of P = {p}",
                x.rows()
            )));
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("X"));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("Y"));
        }
        if !xhat.is_finite() {
            return Err(Error::NonFinite("Xhat"));
        }
        Ok(Self { x, y, xhat, p })
    }

    /// Builds the merged set from `n` truth/measurement rows and `n * p`
    /// generated rows (grouped by measurement), repeating each truth and
    /// measurement row `p` times.
    pub fn from_replicated(x: &Matrix<T>, y: &Matrix<T>, xhat: Matrix<T>, p: usize) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::DimensionMismatch {
                expected: x.rows(),
                found: y.rows(),
            });
        }
        if xhat.rows() != x.rows() * p {
            return Err(Error::DimensionMismatch {
                expected: x.rows() * p,
                found: xhat.rows(),
            });
        }
        let repeat = |m: &Matrix<T>| {
            Matrix::from_fn(m.rows() * p, m.cols(), |i, j| m[(i / p.max(1), j)])
        };
        Self::new(repeat(x), repeat(y), xhat, p)
    }

    pub fn x(&self) -> &Matrix<T> {
        &self.x
    }

    pub fn y(&self) -> &Matrix<T> {
        &self.y
    }

    pub fn xhat(&self) -> &Matrix<T> {
        &self.xhat
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_rows(&self) -> usize {
        self.x.rows()
    }

    /// Too few rows for full-rank joint covariances.
    pub fn rank_deficient(&self) -> bool {
        self.n_rows() < self.x.cols() + self.y.cols() + 2
    }

    /// Applies the same row permutation to all three matrices.
    pub fn permute_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_rows() {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows(),
                found: perm.len(),
            });
        }
        let mut seen = vec![false; perm.len()];
        for &k in perm {
            if k >= perm.len() || std::mem::replace(&mut seen[k], true) {
                return Err(Error::invalid("not a permutation"));
            }
        }
        let pick = |m: &Matrix<T>| Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(perm[i], j)]);
        Ok(Self {
            x: pick(&self.x),
            y: pick(&self.y),
            xhat: pick(&self.xhat),
            p: self.p,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussianStats<T> {
    pub mu_x: Vec<T>,
    pub mu_y: Vec<T>,
    pub mu_xhat: Vec<T>,
    pub s_xx: Matrix<T>,
    pub s_yy: Matrix<T>,
    pub s_xhatxhat: Matrix<T>,
    pub s_xy: Matrix<T>,
    pub s_xhaty: Matrix<T>,
}

impl<T: Real> JointGaussianStats<T> {
    /// Checks shapes and symmetry; returns the dimensions `(d, d_y)`.
    pub fn validate(&self) -> Result<(usize, usize)> {
        let d = self.mu_x.len();
        let dy = self.mu_y.len();
        let shape = |m: &Matrix<T>, r: usize, c: usize| {
            if m.rows() != r || m.cols() != c {
                Err(Error::DimensionMismatch {
                    expected: r * c,
                    found: m.rows() * m.cols(),
                })
            } else {
                Ok(())
            }
        };
        if self.mu_xhat.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: self.mu_xhat.len(),
            });
        }
        shape(&self.s_xx, d, d)?;
        shape(&self.s_xhatxhat, d, d)?;
        shape(&self.s_yy, dy, dy)?;
        shape(&self.s_xy, d, dy)?;
        shape(&self.s_xhaty, d, dy)?;
        for m in [&self.s_xx, &self.s_yy, &self.s_xhatxhat] {
            m.checked_symmetric()?;
        }
        let all_finite = self
            .mu_x
            .iter()
            .chain(&self.mu_y)
            .chain(&self.mu_xhat)
            .all(|v| v.is_finite())
            && self.s_xy.is_finite()
            && self.s_xhaty.is_finite();
        if !all_finite {
            return Err(Error::NonFinite("statistics"));
        }
        Ok((d, dy))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalStats<T> {
    pub s_xx_given_y: Matrix<T>,
    pub s_xhatxhat_given_y: Matrix<T>,
    /// Expected squared distance between the two conditional means.
    pub mean_gap_term: T,
}

/// The two nonnegative components of CFID; `total = mean + cov` exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfidParts<T> {
    pub mean: T,
    pub cov: T,
}

impl<T: Real> CfidParts<T> {
    pub fn total(&self) -> T {
        self.mean + self.cov
    }
}

fn column_means<T: Real>(m: &Matrix<T>) -> Vec<T> {
    let n = T::of(m.rows());
    (0..m.cols())
        .map(|j| {
            let col: Vec<T> = (0..m.rows()).map(|i| m[(i, j)]).collect();
            pairwise_sum(&col) / n
        })
        .collect()
}

fn centered<T: Real>(m: &Matrix<T>, mu: &[T]) -> Matrix<T> {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] - mu[j])
}

// a^T b / n for centered a, b.
fn cross_cov<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let n = T::of(a.rows());
    let mut out = Matrix::zeros(a.cols(), b.cols());
    for i in 0..a.cols() {
        for j in 0..b.cols() {
            let terms: Vec<T> = (0..a.rows()).map(|r| a[(r, i)] * b[(r, j)]).collect();
            out[(i, j)] = pairwise_sum(&terms) / n;
        }
    }
    out
}

fn auto_cov<T: Real>(a: &Matrix<T>) -> Matrix<T> {
    // exact symmetry: compute the upper triangle and mirror it
    let c = cross_cov(a, a);
    Matrix::from_fn(c.rows(), c.cols(), |i, j| if i <= j { c[(i, j)] } else { c[(j, i)] })
}

pub fn compute_stats<T: Real>(e: &EmbeddingSet<T>) -> JointGaussianStats<T> {
    let mu_x = column_means(&e.x);
    let mu_y = column_means(&e.y);
    let mu_xhat = column_means(&e.xhat);
    let xz = centered(&e.x, &mu_x);
    let yz = centered(&e.y, &mu_y);
    let xhz = centered(&e.xhat, &mu_xhat);
    JointGaussianStats {
        s_xx: auto_cov(&xz),
        s_yy: auto_cov(&yz),
        s_xhatxhat: auto_cov(&xhz),
        s_xy: cross_cov(&xz, &yz),
        s_xhaty: cross_cov(&xhz, &yz),
        mu_x,
        mu_y,
        mu_xhat,
    }
}

fn largest_eigen_scale<T: Real>(m: &Matrix<T>) -> T {
    // trace bounds lambda_max for PSD input and is cheap
    m.trace().abs().max(m.max_abs())
}

pub fn conditional_stats<T: Real>(j: &JointGaussianStats<T>) -> Result<ConditionalStats<T>> {
    j.validate()?;
    let s_yy = j.s_yy.checked_symmetric()?;
    let pinv = pinv_symmetric(&s_yy, T::lit(PINV_RCOND))?;
    let schur = |s: &Matrix<T>, c: &Matrix<T>| -> Result<Matrix<T>> {
        let reduced = s.sub(&c.matmul(&pinv)?.matmul(&c.transpose())?)?.symmetrized();
        clamp_psd(&reduced, largest_eigen_scale(s))
    };
    let s_xx_given_y = schur(&j.s_xx.symmetrized(), &j.s_xy)?;
    let s_xhatxhat_given_y = schur(&j.s_xhatxhat.symmetrized(), &j.s_xhaty)?;

    let dmu: T = j
        .mu_x
        .iter()
        .zip(&j.mu_xhat)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let dc = j.s_xy.sub(&j.s_xhaty)?;
    let spread = dc.matmul(&pinv)?.matmul(&dc.transpose())?.trace();
    Ok(ConditionalStats {
        s_xx_given_y,
        s_xhatxhat_given_y,
        mean_gap_term: dmu + spread,
    })
}

fn clamp_negative<T: Real>(v: T, scale: T) -> Result<T> {
    if !v.is_finite() {
        return Err(Error::NonFinite("distance"));
    }
    if v >= T::zero() {
        return Ok(v);
    }
    if v >= -T::lit(NEGATIVE_CLAMP_TOL) * scale.max(T::one()) {
        Ok(T::zero())
    } else {
        Err(Error::NegativeDistance(v.as_f64()))
    }
}

/// `tr[A + B - 2 (A^{1/2} B A^{1/2})^{1/2}]`, the covariance term of the
/// squared 2-Wasserstein distance between Gaussians.
pub fn bures_term<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<T> {
    let ra = sqrtm_psd(a)?;
    let inner = ra.matmul(b)?.matmul(&ra)?.symmetrized();
    let scale = largest_eigen_scale(a) * largest_eigen_scale(b);
    let cross = sqrtm_psd_scaled(&inner, scale)?.trace();
    let scale_tr = a.trace().abs() + b.trace().abs();
    clamp_negative(a.trace() + b.trace() - T::lit(2.0) * cross, scale_tr)
}

pub fn cfid_decompose_from_stats<T: Real>(j: &JointGaussianStats<T>) -> Result<CfidParts<T>> {
    let c = conditional_stats(j)?;
    let mean_scale = j.s_xx.trace().abs() + j.s_xhatxhat.trace().abs();
    let mean = clamp_negative(c.mean_gap_term, mean_scale)?;
    let cov = bures_term(&c.s_xx_given_y, &c.s_xhatxhat_given_y)?;
    Ok(CfidParts { mean, cov })
}

/// CFID from (possibly analytic) joint statistics.
pub fn cfid_from_stats<T: Real>(j: &JointGaussianStats<T>) -> Result<T> {
    Ok(cfid_decompose_from_stats(j)?.total())
}

pub fn cfid_decompose<T: Real>(e: &EmbeddingSet<T>) -> Result<CfidParts<T>> {
    cfid_decompose_from_stats(&compute_stats(e))
}

pub fn cfid<T: Real>(e: &EmbeddingSet<T>) -> Result<T> {
    Ok(cfid_decompose(e)?.total())
}

/// Squared 2-Wasserstein distance between two Gaussians given by moments.
pub fn frechet_distance<T: Real>(
    mu1: &[T],
    s1: &Matrix<T>,
    mu2: &[T],
    s2: &Matrix<T>,
) -> Result<T> {
    if mu1.len() != mu2.len() {
        return Err(Error::DimensionMismatch {
            expected: mu1.len(),
            found: mu2.len(),
        });
    }
    let a = s1.checked_symmetric()?;
    let b = s2.checked_symmetric()?;
    if a.rows() != mu1.len() || b.rows() != mu1.len() {
        return Err(Error::DimensionMismatch {
            expected: mu1.len(),
            found: a.rows().max(b.rows()),
        });
    }
    let dmu: T = mu1.iter().zip(mu2).map(|(&a, &b)| (a - b) * (a - b)).sum();
    Ok(dmu + bures_term(&a, &b)?)
}

/// Unconditional FID between the Gaussian fits of two embedding matrices.
pub fn fid<T: Real>(x: &Matrix<T>, xhat: &Matrix<T>) -> Result<T> {
    if x.cols() != xhat.cols() {
        return Err(Error::DimensionMismatch {
            expected: x.cols(),
            found: xhat.cols(),
        });
    }
    if x.rows() == 0 || xhat.rows() == 0 {
        return Err(Error::invalid("empty embedding matrix"));
    }
    if !x.is_finite() || !xhat.is_finite() {
        return Err(Error::NonFinite("embeddings"));
    }
    let mu1 = column_means(x);
    let mu2 = column_means(xhat);
    let s1 = auto_cov(&centered(x, &mu1));
    let s2 = auto_cov(&centered(xhat, &mu2));
    frechet_distance(&mu1, &s1, &mu2, &s2)
}
