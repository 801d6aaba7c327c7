use thiserror::Error;

/// Errors raised by the numerical and data layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("variable does not belong to this tape or was never recorded")]
    UnrecordedVariable,

    #[error("gradient requested of a non-scalar node ({0}x{1})")]
    NonScalarLoss(usize, usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("label {0} is not binary (expected 0 or 1)")]
    NonBinaryLabel(f64),

    #[error("metric precondition failed: {0}")]
    Metric(String),

    #[error("variance {0} exceeds the [0,1]-support ceiling of 0.25")]
    VarianceOutOfRange(f64),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("csv error at line {line}: {message}")]
    CsvLine { line: u64, message: String },

    #[error("column `{0}` required by the schema is missing from the header")]
    MissingColumn(String),

    #[error("model file format version {found} is not supported (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("required input `{path}` not found{hint}")]
    MissingInput { path: std::path::PathBuf, hint: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
