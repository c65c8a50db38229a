//! Numerical lab for regularized conditional GANs that aim to sample from a
//! posterior: the supervised-loss/diversity-reward regularizers on a Gaussian
//! toy model, their closed forms and minimizers, the SD-reward auto-tuner,
//! CFID/FID metrics, and data-consistency projections for linear inverse
//! problems.
//!
//! Everything is generic over [`Real`] (`f32` or `f64`); the `*F64` aliases
//! below fix the common double-precision case.

// `!(a <= b)` is used on purpose so that NaN inputs fail validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autotune;
pub mod cfid;
pub mod detect;
pub mod embfile;
pub mod error;
pub mod fft;
pub mod linalg;
pub mod linops;
pub mod mc;
pub mod prop_lab;
pub mod regularizers;
pub mod rng;
pub mod scalar;
pub mod special;
pub mod toy;

pub use autotune::{
    apsd, e_hat, e_ratio, simulate_autotune, target_ratio_db, update_beta, AutotuneSettings,
    AutotuneState, AutotuneTrace, LinearPlant, Observation, Plant, RatioEstimate, ValidationSet,
};
pub use cfid::{
    cfid, cfid_decompose, cfid_from_stats, compute_stats, conditional_stats, fid, CfidParts,
    ConditionalStats, EmbeddingSet, JointGaussianStats,
};
pub use detect::{detection_probability, plug_in_gap, Classifier, Logistic, PlugInGap, Threshold};
pub use error::{Error, Result};
pub use linalg::{sqrtm_psd, Matrix, SymmetricEigen};
pub use linops::{
    FourierDims, FourierSubsampler, LinearOperator, MaskOperator, Measurement, Multicoil,
};
pub use mc::LossEstimate;
pub use prop_lab::{contour_grid, minimize_regularizer, ContourGrid, OptimizationReport};
pub use regularizers::{closed_form_j, gamma_p, objective, RegularizerKind};
pub use rng::SeededStream;
pub use scalar::Real;
pub use toy::{GeneratorParams, PosteriorContext, SampleBatch, ToyPosterior};

pub type ToyPosteriorF64 = ToyPosterior<f64>;
pub type GeneratorParamsF64 = GeneratorParams<f64>;
pub type SampleBatchF64 = SampleBatch<f64>;
pub type RegularizerKindF64 = RegularizerKind<f64>;
pub type MatrixF64 = Matrix<f64>;
pub type EmbeddingSetF64 = EmbeddingSet<f64>;
pub type JointGaussianStatsF64 = JointGaussianStats<f64>;
pub type AutotuneStateF64 = AutotuneState<f64>;
pub type LossEstimateF64 = LossEstimate<f64>;
