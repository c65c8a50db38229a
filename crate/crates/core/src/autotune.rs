//! Feedback tuning of the SD-reward weight from validation errors of
//! P-sample averages, and the averaging-gain curve of true posterior
//! samples (`E_1 / E_P = 2P / (P + 1)`).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mc::LossEstimate;
use crate::regularizers::{beta_sd_nominal, closed_form_l2p};
use crate::rng::{label, SeededStream};
use crate::scalar::{pairwise_sum, Real};
use crate::toy::{sample_generator, sample_posterior, GeneratorParams, SampleBatch, ToyPosterior};

pub const DEFAULT_MU_SD: f64 = 0.1;
pub const DEFAULT_TOLERANCE_DB: f64 = 0.1;

/// `10 log10(x)`.
pub fn db<T: Real>(x: T) -> T {
    T::lit(10.0) * x.log10()
}

/// Expected `E_1 / E_P` of true posterior samples, in dB.
pub fn target_ratio_db<T: Real>(p: usize) -> Result<T> {
    if p == 0 {
        return Err(Error::invalid("P must be at least 1"));
    }
    Ok(db(T::of(2 * p) / T::of(p + 1)))
}

/// `(P, 10 log10(2P / (P + 1)))` for `P = 1..=p_max`.
pub fn psnr_gain_curve<T: Real>(p_max: usize) -> Result<Vec<(usize, T)>> {
    if p_max == 0 {
        return Err(Error::invalid("p_max must be at least 1"));
    }
    (1..=p_max).map(|p| Ok((p, target_ratio_db(p)?))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutotuneState<T> {
    pub beta_sd: T,
    pub mu_sd: T,
    pub p_val: usize,
    pub p_train: usize,
    pub epoch: usize,
}

impl<T: Real> AutotuneState<T> {
    /// Starts at the nominal weight for `p_train`.
    pub fn new(p_train: usize, p_val: usize, mu_sd: T) -> Result<Self> {
        let state = Self {
            beta_sd: beta_sd_nominal(p_train)?,
            mu_sd,
            p_val,
            p_train,
            epoch: 0,
        };
        state.validate()?;
        Ok(state)
    }

    fn validate(&self) -> Result<()> {
        if self.p_val < 2 || self.p_train < 2 {
            return Err(Error::invalid("p_val and p_train must be at least 2"));
        }
        if !self.beta_sd.is_finite() {
            return Err(Error::NonFinite("beta_sd"));
        }
        if !(self.mu_sd >= T::zero()) || !self.mu_sd.is_finite() {
            return Err(Error::invalid("mu_sd must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// One gradient step on the dB mismatch between observed and ideal
/// averaging gain. No clamping is applied to the new weight.
pub fn update_beta<T: Real>(state: &AutotuneState<T>, e1_hat: T, ep_hat: T) -> Result<AutotuneState<T>> {
    state.validate()?;
    if !(e1_hat > T::zero()) || !(ep_hat > T::zero()) {
        return Err(Error::invalid("error estimates must be positive"));
    }
    let mismatch = db(e1_hat / ep_hat) - target_ratio_db(state.p_val)?;
    let nominal: T = beta_sd_nominal(state.p_train)?;
    Ok(AutotuneState {
        beta_sd: state.beta_sd - state.mu_sd * mismatch * nominal,
        epoch: state.epoch + 1,
        ..*state
    })
}

/// Anything that can produce draws for a given measurement context.
pub trait ConditionalSampler<T>: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, context: usize, n: usize, stream: SeededStream) -> Result<SampleBatch<T>>;
}

/// The true posterior used as a sampler.
impl<T: Real> ConditionalSampler<T> for ToyPosterior<T> {
    fn dim(&self) -> usize {
        ToyPosterior::dim(self)
    }

    fn sample(&self, context: usize, n: usize, stream: SeededStream) -> Result<SampleBatch<T>> {
        sample_posterior(self, context, n, stream)
    }
}

/// A context-independent toy generator.
impl<T: Real> ConditionalSampler<T> for GeneratorParams<T> {
    fn dim(&self) -> usize {
        GeneratorParams::dim(self)
    }

    fn sample(&self, _context: usize, n: usize, stream: SeededStream) -> Result<SampleBatch<T>> {
        sample_generator(self, n, stream)
    }
}

/// Validation pairs `(x_v, context_v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet<T> {
    pairs: Vec<(Vec<T>, usize)>,
}

impl<T: Real> ValidationSet<T> {
    pub fn new(pairs: Vec<(Vec<T>, usize)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::invalid("validation set is empty"));
        }
        Ok(Self { pairs })
    }

    /// `v` ground-truth draws from the posterior, cycling through contexts.
    pub fn draw(post: &ToyPosterior<T>, v: usize, stream: SeededStream) -> Result<Self> {
        if v == 0 {
            return Err(Error::invalid("validation set is empty"));
        }
        let stream = stream.experiment(stream.path.experiment ^ label("validation"));
        let pairs = (0..v)
            .map(|i| {
                let ctx = i % post.n_contexts();
                let s = stream.context(ctx as u64).replicate(i as u64);
                let x = sample_posterior(post, ctx, 1, s)?;
                Ok((x.row(0).to_vec(), ctx))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { pairs })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(Vec<T>, usize)] {
        &self.pairs
    }
}

// (||xhat_1 - x||^2, ||xhat_(P) - x||^2) for each validation item
fn per_item_errors<T: Real, G: ConditionalSampler<T> + ?Sized>(
    generator: &G,
    val: &ValidationSet<T>,
    p: usize,
    stream: SeededStream,
) -> Result<Vec<(T, T)>> {
    if p == 0 {
        return Err(Error::invalid("P must be at least 1"));
    }
    let stream = stream.experiment(stream.path.experiment ^ label("e_hat"));
    val.pairs
        .par_iter()
        .enumerate()
        .map(|(v, (x, ctx))| {
            if x.len() != generator.dim() {
                return Err(Error::DimensionMismatch {
                    expected: generator.dim(),
                    found: x.len(),
                });
            }
            let batch = generator.sample(*ctx, p, stream.context(*ctx as u64).replicate(v as u64))?;
            let mut avg = vec![T::zero(); x.len()];
            for row in batch.rows() {
                for (a, &r) in avg.iter_mut().zip(row) {
                    *a += r;
                }
            }
            let pf = T::of(p);
            avg.iter_mut().for_each(|a| *a /= pf);
            let e1: T = batch.row(0).iter().zip(x).map(|(&a, &b)| (a - b) * (a - b)).sum();
            let ep: T = avg.iter().zip(x).map(|(&a, &b)| (a - b) * (a - b)).sum();
            Ok((e1, ep))
        })
        .collect()
}

/// Validation error of the `P`-sample average,
/// `(1/V) sum_v ||(1/P) sum_i G(z_iv, y_v) - x_v||^2`, with fresh codes per item.
pub fn e_hat<T: Real, G: ConditionalSampler<T> + ?Sized>(
    generator: &G,
    val: &ValidationSet<T>,
    p: usize,
    stream: SeededStream,
) -> Result<LossEstimate<T>> {
    let errs: Vec<T> = per_item_errors(generator, val, p, stream)?.into_iter().map(|(_, ep)| ep).collect();
    if errs.len() == 1 {
        return Ok(LossEstimate { value: errs[0], std_error: T::zero(), n_outer: 1, p });
    }
    LossEstimate::from_values(&errs, p)
}

/// Paired estimates of `E_1` and `E_P` sharing the first code of each item,
/// with a delta-method standard error for their ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate<T> {
    pub e1: LossEstimate<T>,
    pub ep: LossEstimate<T>,
    pub ratio: T,
    pub ratio_std_error: T,
}

impl<T: Real> RatioEstimate<T> {
    pub fn ratio_db(&self) -> T {
        db(self.ratio)
    }
}

pub fn e_ratio<T: Real, G: ConditionalSampler<T> + ?Sized>(
    generator: &G,
    val: &ValidationSet<T>,
    p: usize,
    stream: SeededStream,
) -> Result<RatioEstimate<T>> {
    let pairs = per_item_errors(generator, val, p, stream)?;
    if pairs.len() < 2 {
        return Err(Error::invalid("ratio estimate needs at least two validation items"));
    }
    let e1v: Vec<T> = pairs.iter().map(|p| p.0).collect();
    let epv: Vec<T> = pairs.iter().map(|p| p.1).collect();
    let e1 = LossEstimate::from_values(&e1v, 1)?;
    let ep = LossEstimate::from_values(&epv, p)?;
    let n = T::of(pairs.len());
    let cross: Vec<T> = pairs.iter().map(|&(a, b)| (a - e1.value) * (b - ep.value)).collect();
    let cov_means = pairwise_sum(&cross) / (n - T::one()) / n;
    let ratio = e1.value / ep.value;
    let rel_var = e1.std_error.powi(2) / e1.value.powi(2) + ep.std_error.powi(2) / ep.value.powi(2)
        - T::lit(2.0) * cov_means / (e1.value * ep.value);
    Ok(RatioEstimate {
        e1,
        ep,
        ratio,
        ratio_std_error: ratio.abs() * rel_var.max(T::zero()).sqrt(),
    })
}

/// Average pixel-wise SD of the first `P` rows:
/// `sqrt((1/(N P)) sum_i ||xhat_(P) - xhat_i||^2)`.
pub fn apsd<T: Real>(samples: &SampleBatch<T>, p: usize) -> Result<T> {
    if p < 2 {
        return Err(Error::invalid("APSD needs P >= 2"));
    }
    if samples.n_rows() < p {
        return Err(Error::invalid(format!("APSD needs {p} rows, batch has {}", samples.n_rows())));
    }
    let dim = samples.dim();
    let first = samples.row(0);
    // mean taken relative to the first row so identical rows give exactly 0
    let mut shift = vec![T::zero(); dim];
    for row in samples.rows().take(p) {
        for ((a, &r), &f) in shift.iter_mut().zip(row).zip(first) {
            *a += r - f;
        }
    }
    let pf = T::of(p);
    let mut total = T::zero();
    for row in samples.rows().take(p) {
        for ((&a, &r), &f) in shift.iter().zip(row).zip(first) {
            let d = (r - f) - a / pf;
            total += d * d;
        }
    }
    Ok((total / (T::of(dim) * pf)).sqrt())
}

/// Stand-in for GAN training: maps the SD-reward weight to the generated
/// per-coordinate SD, given the true SD of that coordinate.
pub trait Plant<T>: Sync {
    fn sigma(&self, beta_sd: T, sigma0: T) -> T;
}

impl<T, F> Plant<T> for F
where
    F: Fn(T, T) -> T + Sync,
{
    fn sigma(&self, beta_sd: T, sigma0: T) -> T {
        self(beta_sd, sigma0)
    }
}

/// `sigma = sigma0 * max(0, slope * beta + intercept)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPlant<T> {
    pub slope: T,
    pub intercept: T,
}

impl<T: Real> LinearPlant<T> {
    /// Plant that hits `sigma = gain * sigma0` at the nominal weight.
    pub fn calibrated(gain: T, p_train: usize) -> Result<Self> {
        Ok(Self {
            slope: gain / beta_sd_nominal::<T>(p_train)?,
            intercept: T::zero(),
        })
    }
}

impl<T: Real> Plant<T> for LinearPlant<T> {
    fn sigma(&self, beta_sd: T, sigma0: T) -> T {
        sigma0 * (self.slope * beta_sd + self.intercept).max(T::zero())
    }
}

/// How the controller observes `E_1 / E_P` each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observation {
    /// Bias-variance closed form at `mu = mu0`.
    Exact,
    /// Monte Carlo over `v` validation items; `frozen_codes` reuses the same
    /// codes every epoch instead of drawing fresh ones.
    Sampled { v: usize, frozen_codes: bool },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutotuneSettings<T> {
    pub p_train: usize,
    pub p_val: usize,
    pub mu_sd: T,
    pub epochs: usize,
    pub tolerance_db: T,
    pub observation: Observation,
}

impl<T: Real> Default for AutotuneSettings<T> {
    fn default() -> Self {
        Self {
            p_train: 2,
            p_val: 8,
            mu_sd: T::lit(DEFAULT_MU_SD),
            epochs: 200,
            tolerance_db: T::lit(DEFAULT_TOLERANCE_DB),
            observation: Observation::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint<T> {
    pub epoch: usize,
    pub beta_sd: T,
    pub ratio_db: T,
    pub target_db: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutotuneTrace<T> {
    pub points: Vec<TracePoint<T>>,
    pub converged: bool,
    pub final_state: AutotuneState<T>,
}

impl<T: Real> AutotuneTrace<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,beta_sd,ratio_db,target_db\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.epoch, p.beta_sd, p.ratio_db, p.target_db));
        }
        out
    }
}

fn plant_generator<T: Real, P: Plant<T> + ?Sized>(
    plant: &P,
    beta: T,
    post: &ToyPosterior<T>,
    context: usize,
) -> Result<GeneratorParams<T>> {
    let c = post.context(context)?;
    let sigma = c.sigma0.iter().map(|&s0| plant.sigma(beta, s0)).collect();
    GeneratorParams::new(c.mu0.clone(), sigma)
}

/// Closed-form `E_1 / E_P` (in dB) for a generator with the true mean.
pub fn closed_form_ratio_db<T: Real>(
    params: &GeneratorParams<T>,
    post: &ToyPosterior<T>,
    context: usize,
    p: usize,
) -> Result<T> {
    Ok(db(closed_form_l2p(params, post, context, 1)? / closed_form_l2p(params, post, context, p)?))
}

/// Closed-loop run of [`update_beta`] against an analytic plant. Stops as
/// soon as the closed-form ratio is within tolerance of the target.
pub fn simulate_autotune<T: Real, P: Plant<T> + ?Sized>(
    plant: &P,
    post: &ToyPosterior<T>,
    context: usize,
    settings: &AutotuneSettings<T>,
    stream: SeededStream,
) -> Result<AutotuneTrace<T>> {
    let mut state = AutotuneState::new(settings.p_train, settings.p_val, settings.mu_sd)?;
    let target = target_ratio_db::<T>(settings.p_val)?;
    let nominal = state.beta_sd;

    // the observed ratio must not fall as beta grows
    let mut prev: Option<T> = None;
    for k in 0..=40 {
        let beta = nominal * T::of(k) / T::lit(10.0);
        let r = closed_form_ratio_db(&plant_generator(plant, beta, post, context)?, post, context, settings.p_val)?;
        if let Some(p) = prev {
            if r < p - T::lit(1e-12) {
                return Err(Error::NonMonotonePlant { from_db: p.as_f64(), to_db: r.as_f64() });
            }
        }
        prev = Some(r);
    }

    let val = match settings.observation {
        Observation::Sampled { v, .. } => Some(ValidationSet::draw(post, v, stream)?),
        Observation::Exact => None,
    };
    let mut points = Vec::with_capacity(settings.epochs + 1);
    let mut converged = false;
    loop {
        let generator = plant_generator(plant, state.beta_sd, post, context)?;
        let exact = closed_form_ratio_db(&generator, post, context, settings.p_val)?;
        let (e1, ep) = match (&val, settings.observation) {
            (Some(val), Observation::Sampled { frozen_codes, .. }) => {
                let s = if frozen_codes { stream } else { stream.replicate(state.epoch as u64) };
                let r = e_ratio(&generator, val, settings.p_val, s)?;
                (r.e1.value, r.ep.value)
            }
            _ => (
                closed_form_l2p(&generator, post, context, 1)?,
                closed_form_l2p(&generator, post, context, settings.p_val)?,
            ),
        };
        points.push(TracePoint {
            epoch: state.epoch,
            beta_sd: state.beta_sd,
            ratio_db: db(e1 / ep),
            target_db: target,
        });
        if (exact - target).abs() <= settings.tolerance_db {
            converged = true;
            break;
        }
        if state.epoch >= settings.epochs {
            break;
        }
        state = update_beta(&state, e1, ep)?;
    }
    Ok(AutotuneTrace { points, converged, final_state: state })
}
