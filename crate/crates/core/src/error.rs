use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("transfer infeasible: {0}")]
    TransferInfeasible(String),

    #[error("partition error: cannot split {values} values into {bins} bins")]
    Partition { values: usize, bins: usize },

    #[error("invalid design point: violates rule `{rule}`")]
    Validity { rule: String },

    #[error("model configuration error: {0}")]
    ModelConfig(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("batch element {index} failed: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate fit for memory type `{memory}`, constraint `{constraint}`: {reason}")]
    DegenerateFit {
        memory: String,
        constraint: String,
        reason: String,
    },

    #[error("log-domain error: {0}")]
    Domain(String),

    #[error("projection infeasible: no intersection point satisfies the projected constraints")]
    ProjectionInfeasible,

    #[error("adjustment op {op_index} failed: {reason}")]
    Adjustment { op_index: usize, reason: String },

    #[error("request not ready: {0}")]
    NotReady(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("state error: {0}")]
    State(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
