//! Supervised losses and diversity rewards for the Gaussian toy model.
//!
//! Monte Carlo estimators pair one fresh posterior draw with `P` fresh
//! generator draws per outer replicate. Generator deviations are formed as
//! `sigma * (z_i - mean(z))`, so a collapsed generator (`sigma = 0`) yields
//! exactly zero spread regardless of `mu`.
//!
//! Closed forms: with `d = mu - mu0` and `s^2 = sigma0^2 + sigma^2 / P`,
//! `x - xhat_(P) ~ N(-d, s^2)`, whose folded-normal mean gives
//! `J = s sqrt(2/pi) exp(-d^2 / 2s^2) + d erf(d / (sqrt2 s)) - beta * sigma`
//! per coordinate.

use crate::error::{Error, Result};
use crate::mc::{self, LossEstimate};
use crate::rng::{fill_standard_normal, label, standard_normal, SeededStream, StreamRng};
use crate::scalar::Real;
use crate::special::erf;
use crate::toy::{GeneratorParams, PosteriorContext, ToyPosterior};

/// Regularizer family with its training parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerKind<T> {
    /// Supervised l1 on the P-average minus `beta_sd` times the SD reward.
    L1Sd { p: usize, beta_sd: T },
    /// Supervised l2 on the P-average.
    L2 { p: usize },
    /// Supervised l2 plus the unbiased variance reward scaled by `1/P`.
    L2Var { p: usize },
}

impl<T: Real> RegularizerKind<T> {
    pub fn l1_sd_nominal(p: usize) -> Result<Self> {
        Ok(Self::L1Sd {
            p,
            beta_sd: beta_sd_nominal(p)?,
        })
    }

    pub fn p(&self) -> usize {
        match *self {
            Self::L1Sd { p, .. } | Self::L2 { p } | Self::L2Var { p } => p,
        }
    }

    pub fn beta_sd(&self) -> Option<T> {
        match *self {
            Self::L1Sd { beta_sd, .. } => Some(beta_sd),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::L1Sd { .. } => "l1sd",
            Self::L2 { .. } => "l2",
            Self::L2Var { .. } => "l2var",
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_p(self.p())?;
        if let Some(b) = self.beta_sd() {
            if !(b >= T::zero()) || !b.is_finite() {
                return Err(Error::invalid("beta_sd must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

fn check_p(p: usize) -> Result<()> {
    if p < 2 {
        return Err(Error::invalid(format!("P must be at least 2, got {p}")));
    }
    Ok(())
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if !(beta >= T::zero()) || !beta.is_finite() {
        return Err(Error::invalid("beta_sd must be finite and nonnegative"));
    }
    Ok(())
}

/// Scale making `(gamma_P / P) * sum_i |xhat_i - xhat_(P)|` unbiased for sigma:
/// `sqrt(pi P / (2 (P - 1)))`.
pub fn gamma_p<T: Real>(p: usize) -> Result<T> {
    check_p(p)?;
    let p = T::of(p);
    Ok((T::PI() * p / (T::lit(2.0) * (p - T::one()))).sqrt())
}

/// Nominal SD-reward weight `sqrt(2 / (pi P (P + 1)))`.
pub fn beta_sd_nominal<T: Real>(p: usize) -> Result<T> {
    check_p(p)?;
    let p = T::of(p);
    Ok((T::lit(2.0) / (T::PI() * p * (p + T::one()))).sqrt())
}

/// `beta_adv * l_adv + l1 - beta_sd * lsd`.
pub fn assemble_generator_loss<T: Real>(beta_adv: T, l_adv: T, l1: T, beta_sd: T, lsd: T) -> T {
    beta_adv * l_adv + l1 - beta_sd * lsd
}

struct Draws<T> {
    z: Vec<T>,
    zbar: T,
}

impl<T: Real> Draws<T> {
    fn new(p: usize) -> Self {
        Self {
            z: vec![T::zero(); p],
            zbar: T::zero(),
        }
    }

    fn refill(&mut self, rng: &mut StreamRng) {
        fill_standard_normal(rng, &mut self.z);
        self.zbar = self.z.iter().copied().sum::<T>() / T::of(self.z.len());
    }
}

fn context_for<'a, T: Real>(
    params: &GeneratorParams<T>,
    post: &'a ToyPosterior<T>,
    context: usize,
) -> Result<&'a PosteriorContext<T>> {
    let c = post.context(context)?;
    params.check_dim(c.mu0.len())?;
    Ok(c)
}

// Per-replicate residual `x_j - xhat_(P),j` for every coordinate.
fn residual_terms<T: Real>(
    params: &GeneratorParams<T>,
    c: &PosteriorContext<T>,
    p: usize,
    rng: &mut StreamRng,
    mut f: impl FnMut(T),
) {
    let mut draws = Draws::<T>::new(p);
    for j in 0..params.dim() {
        draws.refill(rng);
        let z0: T = standard_normal(rng);
        let r = (c.mu0[j] - params.mu[j]) + c.sigma0[j] * z0 - params.sigma[j] * draws.zbar;
        f(r);
    }
}

/// Monte Carlo estimate of `E ||x - xhat_(P)||_1`.
pub fn mc_l1p<T: Real>(
    params: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
    p: usize,
    n_outer: usize,
    stream: SeededStream,
) -> Result<LossEstimate<T>> {
    check_p(p)?;
    let c = context_for(params, post, context)?;
    let stream = stream.experiment(stream.path.experiment ^ label("mc_l1p"));
    mc::estimate(stream, n_outer, p, |rng| {
        let mut acc = T::zero();
        residual_terms(params, c, p, rng, |r| acc += r.abs());
        acc
    })
}

/// Monte Carlo estimate of `E ||x - xhat_(P)||_2^2`.
pub fn mc_l2p<T: Real>(
    params: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
    p: usize,
    n_outer: usize,
    stream: SeededStream,
) -> Result<LossEstimate<T>> {
    check_p(p)?;
    let c = context_for(params, post, context)?;
    let stream = stream.experiment(stream.path.experiment ^ label("mc_l2p"));
    mc::estimate(stream, n_outer, p, |rng| {
        let mut acc = T::zero();
        residual_terms(params, c, p, rng, |r| acc += r * r);
        acc
    })
}

/// Monte Carlo estimate of the SD reward
/// `sqrt(pi / (2P(P-1))) * sum_i E ||xhat_i - xhat_(P)||_1`.
pub fn mc_lsdp<T: Real>(
    params: &GeneratorParams<T>,
    p: usize,
    n_outer: usize,
    stream: SeededStream,
) -> Result<LossEstimate<T>> {
    let scale = gamma_p::<T>(p)? / T::of(p);
    let stream = stream.experiment(stream.path.experiment ^ label("mc_lsdp"));
    mc::estimate(stream, n_outer, p, |rng| {
        let mut draws = Draws::<T>::new(p);
        let mut acc = T::zero();
        for &s in &params.sigma {
            draws.refill(rng);
            let spread: T = draws.z.iter().map(|&z| (z - draws.zbar).abs()).sum();
            acc += s * spread;
        }
        scale * acc
    })
}

/// Monte Carlo estimate of the variance reward
/// `(1/(P-1)) * sum_i E ||xhat_i - xhat_(P)||_2^2`.
pub fn mc_lvarp<T: Real>(
    params: &GeneratorParams<T>,
    p: usize,
    n_outer: usize,
    stream: SeededStream,
) -> Result<LossEstimate<T>> {
    check_p(p)?;
    let scale = T::one() / T::of(p - 1);
    let stream = stream.experiment(stream.path.experiment ^ label("mc_lvarp"));
    mc::estimate(stream, n_outer, p, |rng| {
        let mut draws = Draws::<T>::new(p);
        let mut acc = T::zero();
        for &s in &params.sigma {
            draws.refill(rng);
            let ss: T = draws
                .z
                .iter()
                .map(|&z| (z - draws.zbar) * (z - draws.zbar))
                .sum();
            acc += s * s * ss;
        }
        scale * acc
    })
}

fn folded_scale<T: Real>(sigma0: T, sigma: T, p: usize) -> T {
    (sigma0 * sigma0 + sigma * sigma / T::of(p)).sqrt()
}

/// `E|d + s Z|` for `Z ~ N(0, 1)`.
fn folded_normal_mean<T: Real>(d: T, s: T) -> T {
    if s == T::zero() {
        return d.abs();
    }
    let two = T::lit(2.0);
    s * (two / T::PI()).sqrt() * (-(d * d) / (two * s * s)).exp()
        + d * erf(d / (T::SQRT_2() * s))
}

/// Exact `L1,P - beta_sd * LSD,P` for the Gaussian toy model, summed over
/// coordinates.
pub fn closed_form_j<T: Real>(
    params: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
    p: usize,
    beta_sd: T,
) -> Result<T> {
    check_p(p)?;
    check_beta(beta_sd)?;
    let c = context_for(params, post, context)?;
    let mut total = T::zero();
    for j in 0..params.dim() {
        let s = folded_scale(c.sigma0[j], params.sigma[j], p);
        total += folded_normal_mean(params.mu[j] - c.mu0[j], s) - beta_sd * params.sigma[j];
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub mu: Vec<T>,
    pub sigma: Vec<T>,
}

impl<T: Real> Gradient<T> {
    pub fn norm(&self) -> T {
        self.mu
            .iter()
            .chain(&self.sigma)
            .map(|&g| g * g)
            .sum::<T>()
            .sqrt()
    }
}

/// Analytic gradient of [`closed_form_j`]. At `sigma = 0` the sigma
/// component is the right-sided derivative.
///
/// `dJ/dmu = erf(d / (sqrt2 s))` and
/// `dJ/dsigma = sqrt(2/pi) exp(-d^2 / 2s^2) * sigma / (P s) - beta`.
pub fn closed_form_j_grad<T: Real>(
    params: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
    p: usize,
    beta_sd: T,
) -> Result<Gradient<T>> {
    check_p(p)?;
    check_beta(beta_sd)?;
    let c = context_for(params, post, context)?;
    let two = T::lit(2.0);
    let pf = T::of(p);
    let root_2_over_pi = (two / T::PI()).sqrt();
    let mut g = Gradient {
        mu: Vec::with_capacity(params.dim()),
        sigma: Vec::with_capacity(params.dim()),
    };
    for j in 0..params.dim() {
        let d = params.mu[j] - c.mu0[j];
        let sigma = params.sigma[j];
        let s = folded_scale(c.sigma0[j], sigma, p);
        if s == T::zero() {
            // sigma0 = sigma = 0: J = E|d + sigma zbar| to the right of 0
            g.mu.push(if d == T::zero() { T::zero() } else { d.signum() });
            let slope = if d == T::zero() {
                root_2_over_pi / pf.sqrt()
            } else {
                T::zero()
            };
            g.sigma.push(slope - beta_sd);
        } else {
            g.mu.push(erf(d / (T::SQRT_2() * s)));
            let gauss = (-(d * d) / (two * s * s)).exp();
            g.sigma.push(root_2_over_pi * gauss * sigma / (pf * s) - beta_sd);
        }
    }
    Ok(g)
}

/// Bias-variance form of `L2,P`:
/// `||mu - mu0||^2 + (1/P) sum sigma^2 + sum sigma0^2`.
pub fn closed_form_l2p<T: Real>(
    params: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
    p: usize,
) -> Result<T> {
    if p == 0 {
        return Err(Error::invalid("P must be at least 1"));
    }
    let c = context_for(params, post, context)?;
    let pf = T::of(p);
    let mut total = T::zero();
    for j in 0..params.dim() {
        let d = params.mu[j] - c.mu0[j];
        total += d * d + params.sigma[j] * params.sigma[j] / pf + c.sigma0[j] * c.sigma0[j];
    }
    Ok(total)
}

/// `L2,P - (1/P) Lvar,P = ||mu - mu0||^2 + sum sigma0^2`; sigma drops out.
pub fn closed_form_l2varp<T: Real>(
    params: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
    p: usize,
) -> Result<T> {
    if p == 0 {
        return Err(Error::invalid("P must be at least 1"));
    }
    let c = context_for(params, post, context)?;
    let mut total = T::zero();
    for j in 0..params.dim() {
        let d = params.mu[j] - c.mu0[j];
        total += d * d + c.sigma0[j] * c.sigma0[j];
    }
    Ok(total)
}

/// Closed-form value of the given regularizer.
pub fn objective<T: Real>(
    kind: &RegularizerKind<T>,
    params: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
) -> Result<T> {
    kind.validate()?;
    match *kind {
        RegularizerKind::L1Sd { p, beta_sd } => closed_form_j(params, post, context, p, beta_sd),
        RegularizerKind::L2 { p } => closed_form_l2p(params, post, context, p),
        RegularizerKind::L2Var { p } => closed_form_l2varp(params, post, context, p),
    }
}

/// Closed-form gradient of the given regularizer.
pub fn objective_grad<T: Real>(
    kind: &RegularizerKind<T>,
    params: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
) -> Result<Gradient<T>> {
    kind.validate()?;
    match *kind {
        RegularizerKind::L1Sd { p, beta_sd } => {
            closed_form_j_grad(params, post, context, p, beta_sd)
        }
        RegularizerKind::L2 { p } | RegularizerKind::L2Var { p } => {
            let c = context_for(params, post, context)?;
            let two = T::lit(2.0);
            let mu = params
                .mu
                .iter()
                .zip(&c.mu0)
                .map(|(&m, &m0)| two * (m - m0))
                .collect();
            let sigma = params
                .sigma
                .iter()
                .map(|&s| match kind {
                    RegularizerKind::L2 { .. } => two * s / T::of(p),
                    _ => T::zero(),
                })
                .collect();
            Ok(Gradient { mu, sigma })
        }
    }
}
