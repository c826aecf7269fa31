use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum CruxError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),

    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    #[error("backend returned only empty answers for record '{0}'")]
    EmptyAnswer(String),

    #[error("prompt template missing placeholder '{0}'")]
    TemplateMissingPlaceholder(String),

    #[error("record '{0}' has an empty context; scoring requires contextual records")]
    ContextFreeRecord(String),

    #[error("cluster distribution total is zero")]
    ZeroTotal,

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("similarity matrix invalid: {0}")]
    MatrixInvalid(String),

    #[error("similarity matrix row {0} has zero degree")]
    ZeroDegreeRow(usize),

    #[error("baseline '{kind}' is missing required input '{input}'")]
    MissingInput { kind: String, input: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("training labels are degenerate (single class)")]
    DegenerateLabels,

    #[error("training data insufficient: {0}")]
    EmptyData(String),

    #[error("evaluation requires both classes in the labels")]
    SingleClass,

    #[error("cannot read '{path}': {source}")]
    FileUnreadable {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("no valid records parsed from '{0}'")]
    SchemaMismatch(String),

    #[error("fusion parameters required but not found at '{0}'")]
    MissingFusionParams(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CruxError>;
