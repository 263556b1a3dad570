use thiserror::Error;

/// Crate-wide error type. Variants map 1:1 onto CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing field `{field}` in {context}")]
    MissingField { field: String, context: String },

    #[error("missing prerequisite stage output: {0}")]
    DependencyMissing(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {detail}")]
    Parse { context: String, detail: String },

    #[error("client error for role {role}: {detail}")]
    Client { role: String, detail: String },

    #[error("replay miss for role {role}: no fixture for call_key {call_key}")]
    ReplayMiss { role: String, call_key: String },

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("cannot split context {context_id}: fewer than 2 prompts")]
    CannotSplit { context_id: String },

    #[error("insufficient validation pool for {context}: need {needed} per model, have {m1} (M1) and {m2} (M2)")]
    Shortfall {
        context: String,
        needed: usize,
        m1: usize,
        m2: usize,
    },

    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    #[error("stage failure: {0}")]
    Stage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable process exit code for each error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) => 2,
            Error::Config(_) => 3,
            Error::MissingField { .. } => 4,
            Error::DependencyMissing(_) => 5,
            Error::Io { .. } => 6,
            Error::Parse { .. } => 7,
            Error::Client { .. } => 8,
            Error::ReplayMiss { .. } => 9,
            Error::Inconsistent(_) => 10,
            Error::CannotSplit { .. } => 11,
            Error::Shortfall { .. } => 12,
            Error::Degenerate(_) => 13,
            Error::Stage(_) => 14,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
