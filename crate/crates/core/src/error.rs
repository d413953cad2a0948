use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: String,
        got: String,
    },

    #[error("{what} is rank deficient")]
    RankDeficient { what: &'static str },

    #[error("matrix is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("zero reference power for {what}")]
    ZeroPower { what: &'static str },

    #[error("round {round}, phase {phase}: operator {node} is missing a message from operator {from}")]
    MissingInbound {
        round: usize,
        phase: usize,
        node: usize,
        from: usize,
    },

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("dense materialization of {unknowns} unknowns exceeds the cap of {cap}")]
    SizeCap { unknowns: usize, cap: usize },

    #[error("no convergence after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dims(
        what: &'static str,
        expected: impl std::fmt::Display,
        got: impl std::fmt::Display,
    ) -> Self {
        Error::DimensionMismatch {
            what,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
