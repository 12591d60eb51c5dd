use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate geometry on element {element}: {reason}")]
    Geometry { element: usize, reason: String },

    #[error("non-finite value of {what} at ({x}, {y})")]
    Data { what: String, x: f64, y: f64 },

    #[error(
        "singular local block on element {element} \
         (min tau1 - beta.n/2 = {min_tau1:.6e}, min tau2 + beta.n/2 = {min_tau2:.6e})"
    )]
    Condensation {
        element: usize,
        min_tau1: f64,
        min_tau2: f64,
    },

    #[error("singular trace system (pivot {pivot:?}, relative residual {residual:.3e})")]
    SingularSystem { pivot: Option<usize>, residual: f64 },

    #[error("uncondensed residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    Consistency { residual: f64, tolerance: f64 },

    #[error("level n={n}: {source}")]
    Level {
        n: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::Geometry { .. } => "geometry",
            Error::Data { .. } => "data",
            Error::Condensation { .. } => "condensation",
            Error::SingularSystem { .. } => "singular-system",
            Error::Consistency { .. } => "consistency",
            Error::Level { source, .. } => source.kind(),
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
