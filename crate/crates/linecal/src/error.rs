use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("bus not in tree: {0}")]
    UnknownBus(usize),

    #[error("invalid line parameters: {0}")]
    InvalidParams(String),

    #[error("series length mismatch: {0}")]
    LengthMismatch(String),

    #[error("too few samples: got {got}, need at least {min}")]
    TooFewSamples { got: usize, min: usize },

    #[error("singular line: r and x are both zero")]
    SingularLine,

    #[error("non-generic TLS solution: |v_last| = {0:.3e}, no finite parameter vector")]
    NonGenericTls(f64),

    #[error(
        "degenerate TLS: two smallest singular values tie ({smallest:.6e} vs {next:.6e}); \
         extend the measurement window"
    )]
    DegenerateTls { smallest: f64, next: f64 },

    #[error("rank-deficient regression system: sigma_max = {sigma_max:.3e}, sigma_min = {sigma_min:.3e}")]
    RankDeficient { sigma_max: f64, sigma_min: f64 },

    #[error("ambiguous square root: both branches have near-zero real part")]
    AmbiguousRoot,

    #[error("empty ensemble: no runs to average")]
    EmptyEnsemble,

    #[error("bus voltage ratio: all {0} samples skipped (denominator below threshold)")]
    AllSamplesSkipped(usize),

    #[error("missing {what} for {key} along propagation path")]
    PathGap { what: String, key: String },

    #[error("relative error undefined for zero truth value")]
    ZeroTruth,

    #[error("data error: {0}")]
    Data(String),

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

/// Broad category of a failure, used for per-branch failure records and for
/// process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> FailureClass {
        match self {
            Error::Config(_) | Error::InvalidTree(_) | Error::InvalidParams(_) => {
                FailureClass::Config
            }
            Error::NonGenericTls(_)
            | Error::DegenerateTls { .. }
            | Error::RankDeficient { .. }
            | Error::AmbiguousRoot
            | Error::SingularLine
            | Error::EmptyEnsemble
            | Error::Numerical(_) => FailureClass::Numerical,
            _ => FailureClass::Data,
        }
    }

    /// Rebuild an error of the given class from a recorded failure message.
    pub fn from_class(class: FailureClass, message: String) -> Error {
        match class {
            FailureClass::Config => Error::Config(message),
            FailureClass::Data => Error::Data(message),
            FailureClass::Numerical => Error::Numerical(message),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
