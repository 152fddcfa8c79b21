use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Variants map onto the CLI exit codes: configuration problems exit with 2,
/// numeric failures with 3 (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("map parse error at line {line}, column {column}: {message}")]
    MapParse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error(
        "power iteration did not converge after {iterations} iterations \
         (last change {last_change:e}, gap estimate {gap_estimate:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        last_change: f64,
        gap_estimate: f64,
        last_iterate: Vec<f64>,
    },

    #[error("eigenvector entry for state {state} is not positive")]
    NotPositive { state: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("trajectory enumeration refused: more than {cap} partial paths")]
    TooManyPaths { cap: usize },

    #[error("no eigenvector entry for state {0}")]
    MissingEntry(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("ROD iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MapParse { .. } | Error::Config(_) | Error::Shape(_) | Error::Empty(_) => 2,
            Error::AtIteration { source, .. } => source.exit_code(),
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
