use thiserror::Error;

/// Errors raised by the kernel laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("capacity exceeded: {what} needs {needed} entries but the budget is {budget}; use jvp/vjp products instead")]
    Capacity {
        what: &'static str,
        needed: usize,
        budget: usize,
    },

    #[error("training diverged (last finite epoch: {last_finite_epoch:?})")]
    Divergence { last_finite_epoch: Option<usize> },

    #[error("conditioning error: {message} (jitters tried: {jitters:?})")]
    Conditioning { message: String, jitters: Vec<f64> },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("condition violated: {0}")]
    ConditionViolated(String),

    #[error("unstable step size {step:e}: must stay below {bound:e}")]
    Unstable { step: f64, bound: f64 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("incomplete accuracy matrix, missing cells (stage, task): {0:?}")]
    IncompleteMatrix(Vec<(usize, usize)>),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// Short stable name of the variant, for manifests and logs.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::Input(_) => "input",
            Error::Capacity { .. } => "capacity",
            Error::Divergence { .. } => "divergence",
            Error::Conditioning { .. } => "conditioning",
            Error::Numeric(_) => "numeric",
            Error::Convergence { .. } => "convergence",
            Error::ConditionViolated(_) => "condition-violated",
            Error::Unstable { .. } => "unstable",
            Error::UndefinedMetric(_) => "undefined-metric",
            Error::IncompleteMatrix(_) => "incomplete-matrix",
            Error::Calibration(_) => "calibration",
            Error::Selection(_) => "selection",
            Error::Parse { .. } => "parse",
            Error::Format(_) => "format",
            Error::Degenerate(_) => "degenerate",
            Error::Internal(_) => "internal",
            Error::Io(_) => "io",
            Error::Serde(_) => "serde",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
