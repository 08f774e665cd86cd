use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing binding for symbol `{0}`")]
    MissingBinding(String),

    #[error("domain error at `{node}`: {detail}")]
    Domain { node: String, detail: String },

    #[error("dimension mismatch: expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid uncertain parameter: {0}")]
    InvalidSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The local solver met a non-finite objective or gradient.
    #[error("numerical failure ({detail}) at iterate {iterate:?}")]
    Numerical {
        detail: String,
        iterate: Vec<(String, f64)>,
    },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
