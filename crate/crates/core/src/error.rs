use thiserror::Error;

use crate::candidates::chat::ChatError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown gait `{0}`")]
    UnknownGait(String),

    #[error("reward weights must be finite and strictly positive, got {0:?}")]
    InvalidWeights([f64; 5]),

    #[error("degenerate segment: cannot take the return of an empty trajectory")]
    EmptySegment,

    #[error("rollout requires a one-hot gait command, got {0:?}; project it for deployment first")]
    NotOneHot([f64; 5]),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    #[error("segment length k={k} must be below trajectory length T={t}")]
    SegmentTooLong { k: usize, t: usize },

    #[error("segment reference {0} does not resolve against the trajectory set")]
    DanglingSegment(String),

    #[error("preference dataset is empty")]
    EmptyDataset,

    #[error("fit diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("could not parse model output: {reason}; offending text: {text:?}")]
    Parse { reason: String, text: String },

    #[error("model output still invalid after {attempts} attempts (retries exhausted); last response: {last_response:?}")]
    RetriesExhausted {
        attempts: usize,
        last_response: String,
    },

    #[error("chat transport failure: {0}")]
    Chat(#[from] ChatError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
