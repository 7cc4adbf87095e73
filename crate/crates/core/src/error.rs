use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular input: {0}")]
    Singular(String),

    #[error("numerical failure: {message} (residual {residual:.3e})")]
    Numerical { message: String, residual: f64 },

    #[error("regime precondition violated: {0}")]
    Regime(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("vanishing pairing constant at index {index}; filter the kernel set first")]
    Kernel { index: usize },

    #[error("expected a level-{expected} system, found pairing constants incompatible with it")]
    LevelMismatch { expected: u8 },

    #[error("norm growth bound unattainable with exponent <= 1/2: {0}")]
    Growth(String),

    #[error("series diverges: |z| = {modulus} is outside the convergence disk of radius {radius}")]
    Divergence { modulus: f64, radius: f64 },

    #[error("series tail not under control: consecutive term ratio {ratio:.3} exceeds {limit}")]
    TailNotConverged { ratio: f64, limit: f64 },

    #[error("no closed-form moment measure: {0}")]
    NoClosedForm(String),

    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("seed vector condition failed: {0}")]
    SeedVector(String),

    #[error("simple spectrum required: {0}")]
    Multiplicity(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the mathematical regime or domain rather
    /// than by malformed input.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            Error::Regime(_)
                | Error::Unsupported(_)
                | Error::Singular(_)
                | Error::Divergence { .. }
                | Error::TailNotConverged { .. }
                | Error::Growth(_)
                | Error::NoClosedForm(_)
                | Error::Multiplicity(_)
                | Error::Kernel { .. }
                | Error::Degenerate(_)
        )
    }
}
