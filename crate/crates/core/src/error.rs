use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid subsequence length {length}: {reason}")]
    InvalidLength { length: usize, reason: String },

    #[error("no instances of length {0} in the sample")]
    EmptyPool(usize),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported kernel `{0}`")]
    UnsupportedKernel(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("LP solver failure: {0}")]
    Solver(String),

    /// The conic subproblem hit its iteration cap. `best` holds the best
    /// coefficient vector found so far.
    #[error("subproblem did not converge in {iterations} iterations (duality gap {gap:.3e})")]
    NoConvergence {
        iterations: usize,
        gap: f64,
        objective: f64,
        best: Vec<f64>,
    },

    #[error("weak learner failed (length {length}, DC iteration {iteration}): {source}")]
    WeakLearner {
        length: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("all {0} lengths failed in the weak learner: {1}")]
    AllLengthsFailed(usize, String),

    #[error("boosting aborted at iteration {iteration} with {columns} columns, gamma {gamma}: {source}")]
    Boosting {
        iteration: usize,
        columns: usize,
        gamma: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("no separating column: the first weak hypothesis has edge {edge} <= {threshold}")]
    NoSeparatingColumn { edge: f64, threshold: f64 },

    #[error("primal/dual objectives disagree by {gap:.3e}")]
    DualityGap { gap: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command line front end: 2 for data
    /// problems, 3 for optimizer problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Solver(_)
            | Error::NoConvergence { .. }
            | Error::WeakLearner { .. }
            | Error::AllLengthsFailed(..)
            | Error::Boosting { .. }
            | Error::NoSeparatingColumn { .. }
            | Error::DualityGap { .. } => 3,
            _ => 2,
        }
    }
}
