use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("context index {index} out of range ({count} contexts)")]
    InvalidContext { index: usize, count: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e} below -{tolerance:e})")]
    NotPsd { eigenvalue: f64, tolerance: f64 },

    #[error("negative distance {0:e} beyond clamp tolerance")]
    NegativeDistance(f64),

    #[error("classifier output {0} outside [0, 1]")]
    ClassifierRange(f64),

    #[error("plant is not monotone: ratio drops from {from_db:.6} dB to {to_db:.6} dB as beta increases")]
    NonMonotonePlant { from_db: f64, to_db: f64 },

    #[error("malformed {kind}: {msg}")]
    Format { kind: &'static str, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(kind: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            kind,
            msg: msg.into(),
        }
    }
}
