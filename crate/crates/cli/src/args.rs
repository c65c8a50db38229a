use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "pcgan", version, about = "Posterior-sampling cGAN numerical lab")]
pub struct Cli {
    /// Worker threads for parallel sections (results do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Overwrite existing output files.
    #[arg(long, global = true)]
    pub force: bool,

    /// Record the measured wall time in JSON outputs. Off by default so that
    /// repeated runs produce identical bytes.
    #[arg(long, global = true)]
    pub timing: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Regularizer values over a (mu, sigma) grid, as CSV.
    Contours(ContoursArgs),
    /// Check that l1 + SD reward at the nominal weight recovers the posterior.
    VerifyProp1(RecoveryArgs),
    /// Check that the l2 loss collapses the generated SD to zero.
    VerifyProp2(RecoveryArgs),
    /// Check the E_1 / E_P = 2P / (P + 1) law for true-posterior samples.
    VerifyProp3(Prop3Args),
    /// Closed-loop simulation of the SD-weight auto-tuner, as a CSV trace.
    AutotuneSim(AutotuneArgs),
    /// Ideal PSNR gain of P-sample averaging, as CSV.
    PsnrCurve(PsnrArgs),
    /// Conditional FID from embedding files.
    Cfid(CfidArgs),
    /// Unconditional FID from embedding files.
    Fid(FidArgs),
    /// Data-consistency projection of a raw sample.
    Dc(DcArgs),
    /// Event probability from posterior samples vs the plug-in estimate.
    Detect(DetectArgs),
    /// Monte Carlo and closed-form toy losses for one generator.
    Losses(LossesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    L1sd,
    L2,
    L2var,
}

/// `nominal` or a number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaArg {
    Nominal,
    Value(f64),
}

impl FromStr for BetaArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "nominal" {
            return Ok(BetaArg::Nominal);
        }
        s.parse::<f64>()
            .map(BetaArg::Value)
            .map_err(|_| format!("expected `nominal` or a number, got {s:?}"))
    }
}

/// `lo,hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range(pub f64, pub f64);

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s.split_once(',').ok_or_else(|| format!("expected lo,hi, got {s:?}"))?;
        let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
        let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
        Ok(Range(lo, hi))
    }
}

#[derive(Args, Debug)]
pub struct Output {
    /// Output file; written to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ContoursArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    #[arg(long)]
    pub p: usize,
    /// SD-reward weight for l1sd.
    #[arg(long, default_value = "nominal")]
    pub beta: BetaArg,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    #[arg(long, default_value = "-3,3", allow_hyphen_values = true)]
    pub mu_range: Range,
    #[arg(long, default_value = "0,3", allow_hyphen_values = true)]
    pub sigma_range: Range,
    /// Grid points per axis.
    #[arg(long, default_value_t = 201)]
    pub resolution: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct RecoveryArgs {
    #[arg(long)]
    pub seed: u64,
    /// Number of random posteriors.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "2,3,8")]
    pub p: Vec<usize>,
    #[arg(long, default_value = "-10,10", allow_hyphen_values = true)]
    pub mu0_range: Range,
    #[arg(long, default_value = "0.1,10")]
    pub sigma0_range: Range,
    /// Starting point (mu, sigma) of the optimizer.
    #[arg(long, default_value = "5,5", allow_hyphen_values = true)]
    pub init: Range,
    /// Relative tolerance on the recovered parameters.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct Prop3Args {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,32")]
    pub p: Vec<usize>,
    /// Validation set size.
    #[arg(long, default_value_t = 100_000)]
    pub v: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    /// Allowed deviation in combined standard errors.
    #[arg(long, default_value_t = 4.0)]
    pub z_max: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObserveArg {
    Exact,
    Sampled,
}

#[derive(Args, Debug)]
pub struct AutotuneArgs {
    #[arg(long)]
    pub seed: u64,
    /// Plant: sigma = sigma0 * max(0, gain * beta / beta_nominal + intercept).
    #[arg(long, default_value_t = 1.0)]
    pub plant_gain: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub plant_intercept: f64,
    #[arg(long, default_value_t = 0.1)]
    pub mu_sd: f64,
    #[arg(long, default_value_t = 2)]
    pub p_train: usize,
    #[arg(long, default_value_t = 8)]
    pub p_val: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tolerance_db: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    #[arg(long, value_enum, default_value = "exact")]
    pub observe: ObserveArg,
    /// Validation set size for sampled observation.
    #[arg(long, default_value_t = 1000)]
    pub v: usize,
    /// Reuse the same codes every epoch.
    #[arg(long)]
    pub frozen_codes: bool,
    /// Optional JSON summary.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct PsnrArgs {
    #[arg(long)]
    pub pmax: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct CfidArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long)]
    pub xhat: PathBuf,
    /// Consecutive rows sharing one measurement.
    #[arg(long, default_value_t = 1)]
    pub p: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct FidArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub xhat: PathBuf,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    /// y holds the kept Fourier coefficients.
    Kspace,
    /// y is the zero-filled image F^H M^T M F x.
    Image,
}

#[derive(Args, Debug)]
pub struct DcArgs {
    /// Mask file (`N=<dim>` for pixels, `DIMS=<h>x<w>` for Fourier).
    #[arg(long)]
    pub mask: PathBuf,
    /// Raw sample, one `re[,im]` entry per line.
    #[arg(long)]
    pub x_raw: PathBuf,
    /// Measurements, same format.
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, value_enum, default_value = "kspace")]
    pub form: FormArg,
    /// Stacked coil images sharing the mask.
    #[arg(long, default_value_t = 1)]
    pub coils: usize,
    /// Optional JSON report with the consistency residual.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifierArg {
    Threshold,
    Logistic,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    /// Number of posterior samples.
    #[arg(long, default_value_t = 1_000_000)]
    pub p: usize,
    #[arg(long, value_enum, default_value = "threshold")]
    pub classifier: ClassifierArg,
    /// Threshold (or logistic center).
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub tau: f64,
    /// Logistic scale.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Args, Debug)]
pub struct LossesArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub mu0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma0: f64,
    #[arg(long)]
    pub p: usize,
    #[arg(long, default_value = "nominal")]
    pub beta: BetaArg,
    #[arg(long, default_value_t = 100_000)]
    pub n_outer: usize,
    #[command(flatten)]
    pub output: Output,
}
