use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used for CLI exit codes and error JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input files, columns, or arguments.
    Schema,
    /// Degenerate data or a numerical failure.
    Numerical,
    /// A broken internal invariant.
    Internal,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Schema => "schema",
            ErrorKind::Numerical => "numerical",
            ErrorKind::Internal => "internal",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Schema => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Internal => 4,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: {message}")]
    InvalidRow { row: usize, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected} covariates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("model kind mismatch: {0}")]
    KindMismatch(String),
    #[error("no calibration units with C >= c0 (c0 = {c0})")]
    EmptySelection { c0: f64 },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("replication {replication} (seed {seed}) failed: {source}")]
    Replication {
        replication: usize,
        seed: u64,
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
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::MissingColumn(_)
            | Error::InvalidRow { .. }
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::KindMismatch(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorKind::Schema,
            Error::EmptySelection { .. } | Error::Degenerate(_) => ErrorKind::Numerical,
            Error::Invariant(_) => ErrorKind::Internal,
            Error::Replication { source, .. } => source.kind(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
