//! Closed-form minimization of the toy regularizers and the contour grids
//! used to visualise them.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::regularizers::{beta_sd_nominal, closed_form_j, objective, objective_grad, Gradient, RegularizerKind};
use crate::rng::{label, SeededStream};
use crate::scalar::Real;
use crate::toy::{GeneratorParams, ToyPosterior};

/// Below this magnitude the sigma-derivative counts as identically zero.
pub const FLAT_SIGMA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings<T> {
    pub max_iter: usize,
    /// Convergence threshold on the projected-gradient norm.
    pub grad_tol: T,
    /// Armijo sufficient-decrease constant.
    pub armijo: T,
    /// Backtracking contraction factor.
    pub shrink: T,
    pub initial_step: T,
    pub max_backtracks: usize,
}

impl<T: Real> Default for OptimizerSettings<T> {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            grad_tol: T::lit(1e-10),
            armijo: T::lit(1e-4),
            shrink: T::lit(0.5),
            initial_step: T::one(),
            max_backtracks: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationReport<T> {
    pub kind: RegularizerKind<T>,
    pub theta_star: GeneratorParams<T>,
    pub objective_star: T,
    pub gradient_norm: T,
    pub iterations: usize,
    pub converged: bool,
    /// The objective does not depend on sigma; `theta_star.sigma` is then
    /// just the initial value and carries no information.
    pub flat_sigma: bool,
    /// Iterations at which the nonnegativity projection clipped sigma.
    pub projected_iterations: Vec<usize>,
    pub trace: Vec<(GeneratorParams<T>, T)>,
}

fn projected_gradient_norm<T: Real>(theta: &GeneratorParams<T>, g: &Gradient<T>) -> T {
    let mut acc: T = g.mu.iter().map(|&v| v * v).sum();
    for (&s, &gs) in theta.sigma.iter().zip(&g.sigma) {
        // at the boundary only descent directions into the feasible set count
        let step = if s == T::zero() && gs > T::zero() { T::zero() } else { gs };
        acc += step * step;
    }
    acc.sqrt()
}

/// Projected gradient descent with backtracking on the closed-form
/// objective, keeping `sigma >= 0`.
pub fn minimize_regularizer<T: Real>(
    kind: RegularizerKind<T>,
    post: &ToyPosterior<T>,
    context: usize,
    init: &GeneratorParams<T>,
    settings: &OptimizerSettings<T>,
) -> Result<OptimizationReport<T>> {
    kind.validate()?;
    if init.sigma.iter().any(|&s| s <= T::zero()) {
        return Err(Error::invalid("initial sigma must be positive"));
    }
    let mut theta = init.clone();
    let mut f = objective(&kind, &theta, post, context)?;
    let mut grad = objective_grad(&kind, &theta, post, context)?;
    let mut step = settings.initial_step;
    let mut trace = vec![(theta.clone(), f)];
    let mut projected_iterations = Vec::new();
    let mut converged = projected_gradient_norm(&theta, &grad) <= settings.grad_tol;
    let mut iterations = 0;
    let slack = T::lit(16.0) * T::epsilon();

    while !converged && iterations < settings.max_iter {
        iterations += 1;
        let mut t = step;
        let mut accepted = None;
        for _ in 0..settings.max_backtracks {
            let mut clipped = false;
            let mu: Vec<T> = theta.mu.iter().zip(&grad.mu).map(|(&m, &g)| m - t * g).collect();
            let sigma: Vec<T> = theta
                .sigma
                .iter()
                .zip(&grad.sigma)
                .map(|(&s, &g)| {
                    let v = s - t * g;
                    if v < T::zero() {
                        clipped = true;
                        T::zero()
                    } else {
                        v
                    }
                })
                .collect();
            let cand = GeneratorParams { mu, sigma };
            let f_new = objective(&kind, &cand, post, context)?;
            // directional term g . (cand - theta), nonpositive for projected steps
            let decrease: T = grad
                .mu
                .iter()
                .zip(cand.mu.iter().zip(&theta.mu))
                .chain(grad.sigma.iter().zip(cand.sigma.iter().zip(&theta.sigma)))
                .map(|(&g, (&a, &b))| g * (a - b))
                .sum();
            // Near the optimum objective differences drown in rounding (and
            // the Armijo test turns vacuous) while the gradient stays
            // accurate: there, accept steps whose end-point slope along the
            // step has shrunk, a curvature-type condition that a halving
            // search always meets on a locally convex objective.
            if (f_new - f).abs() <= slack * f.abs().max(T::one()) {
                if decrease < T::zero() {
                    let g_new = objective_grad(&kind, &cand, post, context)?;
                    let slope_new: T = g_new
                        .mu
                        .iter()
                        .zip(cand.mu.iter().zip(&theta.mu))
                        .chain(g_new.sigma.iter().zip(cand.sigma.iter().zip(&theta.sigma)))
                        .map(|(&g, (&a, &b))| g * (a - b))
                        .sum();
                    if slope_new.abs() <= T::lit(0.9) * decrease.abs() {
                        accepted = Some((cand, f_new, clipped));
                        break;
                    }
                }
            } else if f_new <= f + settings.armijo * decrease {
                accepted = Some((cand, f_new, clipped));
                break;
            }
            t *= settings.shrink;
        }
        let Some((cand, f_new, clipped)) = accepted else {
            break;
        };
        if clipped {
            projected_iterations.push(iterations);
        }
        theta = cand;
        f = f_new;
        grad = objective_grad(&kind, &theta, post, context)?;
        trace.push((theta.clone(), f));
        // let the step grow again after successful iterations
        step = t / settings.shrink;
        converged = projected_gradient_norm(&theta, &grad) <= settings.grad_tol;
    }

    let flat_sigma = sigma_is_flat(&kind, &theta, post, context)?;
    Ok(OptimizationReport {
        kind,
        objective_star: f,
        gradient_norm: projected_gradient_norm(&theta, &grad),
        theta_star: theta,
        iterations,
        converged,
        flat_sigma,
        projected_iterations,
        trace,
    })
}

/// True when `|dJ/dsigma| <= FLAT_SIGMA_TOL` over a sigma sweep at the
/// current mu.
fn sigma_is_flat<T: Real>(
    kind: &RegularizerKind<T>,
    theta: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
) -> Result<bool> {
    let c = post.context(context)?;
    let scale = c
        .sigma0
        .iter()
        .chain(&theta.sigma)
        .fold(T::one(), |m, &s| m.max(s));
    let n = 64;
    for k in 0..=n {
        let s = T::lit(10.0) * scale * T::of(k) / T::of(n);
        let probe = GeneratorParams {
            mu: theta.mu.clone(),
            sigma: vec![s; theta.dim()],
        };
        let g = objective_grad(kind, &probe, post, context)?;
        if g.sigma.iter().any(|v| v.abs() > T::lit(FLAT_SIGMA_TOL)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Objective values over a `(mu, sigma)` grid for a scalar posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourGrid<T> {
    pub mu_axis: Vec<T>,
    pub sigma_axis: Vec<T>,
    /// `values[i][j]` is the objective at `(mu_axis[j], sigma_axis[i])`.
    pub values: Vec<Vec<T>>,
    pub kind: RegularizerKind<T>,
    pub truth: (T, T),
    /// `(sigma index, mu index)` of the smallest value.
    pub argmin: (usize, usize),
}

pub const DEFAULT_RESOLUTION: usize = 201;

fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    (0..n)
        .map(|k| {
            if k + 1 == n {
                hi
            } else {
                lo + (hi - lo) * T::of(k) / T::of(n - 1)
            }
        })
        .collect()
}

pub fn contour_grid<T: Real>(
    kind: RegularizerKind<T>,
    post: &ToyPosterior<T>,
    context: usize,
    mu_range: (T, T),
    sigma_range: (T, T),
    resolution: (usize, usize),
) -> Result<ContourGrid<T>> {
    kind.validate()?;
    if post.dim() != 1 {
        return Err(Error::invalid("contour grids need a scalar posterior"));
    }
    let c = post.context(context)?;
    if !(mu_range.0 < mu_range.1) || !(sigma_range.0 < sigma_range.1) {
        return Err(Error::invalid("empty grid range"));
    }
    if sigma_range.0 < T::zero() {
        return Err(Error::invalid("sigma range must be nonnegative"));
    }
    if resolution.0 < 16 || resolution.1 < 16 {
        return Err(Error::invalid("grid resolution must be at least 16 per axis"));
    }
    let mu_axis = linspace(mu_range.0, mu_range.1, resolution.0);
    let sigma_axis = linspace(sigma_range.0, sigma_range.1, resolution.1);
    let values = sigma_axis
        .par_iter()
        .map(|&s| {
            mu_axis
                .iter()
                .map(|&m| objective(&kind, &GeneratorParams { mu: vec![m], sigma: vec![s] }, post, context))
                .collect::<Result<Vec<T>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut argmin = (0, 0);
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite("contour grid"));
            }
            if v < values[argmin.0][argmin.1] {
                argmin = (i, j);
            }
        }
    }
    Ok(ContourGrid {
        mu_axis,
        sigma_axis,
        values,
        kind,
        truth: (c.mu0[0], c.sigma0[0]),
        argmin,
    })
}

impl<T: Real> ContourGrid<T> {
    pub fn argmin_point(&self) -> (T, T) {
        (self.mu_axis[self.argmin.1], self.sigma_axis[self.argmin.0])
    }

    /// Whether `(mu, sigma)` lies within one grid spacing of the argmin.
    pub fn argmin_cell_contains(&self, mu: T, sigma: T) -> bool {
        let (mu_hat, sigma_hat) = self.argmin_point();
        let dmu = self.mu_axis[1] - self.mu_axis[0];
        let dsigma = self.sigma_axis[1] - self.sigma_axis[0];
        (mu - mu_hat).abs() <= dmu && (sigma - sigma_hat).abs() <= dsigma
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let beta = self.kind.beta_sd().unwrap_or_else(T::zero);
        let _ = writeln!(
            out,
            "# kind={} mu0={} sigma0={} P={} beta_sd={}",
            self.kind.name(),
            self.truth.0,
            self.truth.1,
            self.kind.p(),
            beta
        );
        out.push_str("sigma\\mu");
        for m in &self.mu_axis {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
        for (s, row) in self.sigma_axis.iter().zip(&self.values) {
            let _ = write!(out, "{s}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// `count` scalar posteriors with `mu0` and `sigma0` uniform on the given
/// ranges, one replicate stream each.
pub fn random_scalar_posteriors<T: Real>(
    count: usize,
    mu_range: (f64, f64),
    sigma_range: (f64, f64),
    stream: SeededStream,
) -> Result<Vec<ToyPosterior<T>>> {
    if !(mu_range.0 <= mu_range.1) || !(sigma_range.0 <= sigma_range.1) || !(sigma_range.0 > 0.0) {
        return Err(Error::invalid("posterior ranges must be ordered with positive sigma"));
    }
    let stream = stream.experiment(stream.path.experiment ^ label("random_posteriors"));
    (0..count)
        .map(|k| {
            let mut rng = stream.replicate(k as u64).rng();
            let mu0 = mu_range.0 + (mu_range.1 - mu_range.0) * rng.random::<f64>();
            let sigma0 = sigma_range.0 + (sigma_range.1 - sigma_range.0) * rng.random::<f64>();
            ToyPosterior::scalar(T::lit(mu0), T::lit(sigma0))
        })
        .collect()
}

/// Second difference of the nominal-weight objective along sigma at the
/// true parameters, for each `P`.
pub fn steepness_probe<T: Real>(
    post: &ToyPosterior<T>,
    context: usize,
    p_list: &[usize],
) -> Result<Vec<(usize, T)>> {
    let c = post.context(context)?;
    let norm2: T = c.sigma0.iter().map(|&s| s * s).sum();
    let delta = T::lit(1e-3);
    p_list
        .iter()
        .map(|&p| {
            let beta = beta_sd_nominal(p)?;
            let at = |t: T| {
                let sigma = c.sigma0.iter().map(|&s| s * (T::one() + t)).collect();
                let g = GeneratorParams { mu: c.mu0.clone(), sigma };
                closed_form_j(&g, post, context, p, beta)
            };
            let second = (at(delta)? - T::lit(2.0) * at(T::zero())? + at(-delta)?) / (delta * delta);
            Ok((p, second / norm2))
        })
        .collect()
}
