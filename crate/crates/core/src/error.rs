use thiserror::Error;

/// Errors raised by MDP validation, the solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel row ({state}, {action}) is not a probability vector (sum = {sum})")]
    NonStochasticRow { state: usize, action: usize, sum: f64 },

    #[error("reward at ({state}, {action}) exceeds r_max in magnitude")]
    RewardOutOfBound { state: usize, action: usize },

    #[error("discount factor {0} outside (0, 1)")]
    DiscountOutOfRange(f64),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("sampled next state {index} out of range for {num_states} states")]
    SampleOutOfRange { index: usize, num_states: usize },

    #[error("value iteration did not reach tolerance {tol} within {iters} iterations")]
    NonConvergence { tol: f64, iters: usize },

    #[error("singular policy-evaluation system")]
    SingularSystem,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 for validation failures, 3 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 3,
            Error::Json(e) if e.is_io() => 3,
            _ => 2,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
