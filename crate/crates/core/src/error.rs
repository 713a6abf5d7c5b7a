use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "invalid Yosida parameter k = {k}: kI - A is singular or k does not exceed the spectral abscissa {abscissa}"
    )]
    InvalidYosidaParameter { k: f64, abscissa: f64 },

    #[error("optimality system is rank deficient (rank {rank} of {dim}): the optimal triple is not unique")]
    UniquenessFailure { rank: usize, dim: usize },

    #[error("structural hypotheses violated: {0}")]
    HypothesisViolation(String),

    #[error("(A, B) is not stabilizable: found {found} stable Hamiltonian eigenvalues, need {needed}")]
    NotStabilizable { found: usize, needed: usize },

    #[error("Riccati solver did not converge: relative residual {residual:e}")]
    RiccatiConvergence { residual: f64 },

    #[error("integration diverged at t = {t}: norm {norm:e} exceeds 1e12")]
    Divergence { t: f64, norm: f64 },

    #[error("explicit integration is unstable for this system (step {step} times stiffness {stiffness:e}); use the transcription solver")]
    TooStiff { step: f64, stiffness: f64 },

    #[error("truncation horizon {horizon} too short: closed-loop tail norm {tail:e} exceeds 1e-6")]
    HorizonTooShort { horizon: f64, tail: f64 },

    #[error("transcription needs {unknowns} unknowns, above the cap of {cap}")]
    MemoryCap { unknowns: usize, cap: usize },

    #[error("decay rate undefined: series is identically zero on the fitting window")]
    UndefinedRate,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    ConfigParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid config:\n  - {}", .0.join("\n  - "))]
    ConfigInvalid(Vec<String>),

    #[error("unknown scenario '{name}', expected one of: {valid}")]
    UnknownScenario { name: String, valid: String },

    #[error("unknown target profile '{0}', expected one of: bump, sine, constant, zero")]
    UnknownProfile(String),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the inputs rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch(_)
                | Error::NonFinite(_)
                | Error::InvalidArgument(_)
                | Error::InvalidYosidaParameter { .. }
                | Error::UniquenessFailure { .. }
                | Error::HypothesisViolation(_)
                | Error::NotStabilizable { .. }
                | Error::TooStiff { .. }
                | Error::HorizonTooShort { .. }
                | Error::MemoryCap { .. }
                | Error::GridMismatch(_)
                | Error::ConfigParse { .. }
                | Error::ConfigInvalid(_)
                | Error::UnknownScenario { .. }
                | Error::UnknownProfile(_)
        )
    }
}
