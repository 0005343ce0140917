use std::io;

use thiserror::Error;

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("split infeasible: {0}")]
    SplitInfeasible(String),

    #[error("team {team} already submitted to this track at {last}; next submission allowed at {retry_at}")]
    RateLimited {
        team: String,
        last: String,
        retry_at: String,
    },

    #[error("team {0} already has a challenge submission in this track")]
    AlreadySubmitted(String),

    #[error("submission incomplete: missing {missing:?}, unexpected {extra:?}")]
    SubmissionIncomplete { missing: Vec<String>, extra: Vec<String> },

    #[error("the challenge submission window is closed")]
    WindowClosed,

    #[error("{0} has already responded")]
    AlreadyResponded(String),

    #[error("challenge results are sealed until the submission window closes")]
    Sealed,

    #[error("study infeasible: {0}")]
    StudyInfeasible(String),

    #[error("ranks do not form a permutation: {0}")]
    InvalidPermutation(String),

    #[error("incomplete response: {0}")]
    IncompleteResponse(String),

    #[error("score {value} for {field} is outside the 1..=4 scale")]
    OutOfScale { field: String, value: u8 },

    #[error("incomplete study: {0}")]
    IncompleteStudy(String),

    #[error("unauthorized: {0}")]
    Unauthorized(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("bad request: {0}")]
    BadRequest(String),

    #[error("corrupt event log at line {line}: {detail}")]
    CorruptLog { line: usize, detail: String },

    #[error(transparent)]
    Core(#[from] kbench_core::Error),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl EvalError {
    /// Stable machine-readable code used in API error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            EvalError::SplitInfeasible(_) => "split_infeasible",
            EvalError::RateLimited { .. } => "rate_limited",
            EvalError::AlreadySubmitted(_) => "already_submitted",
            EvalError::SubmissionIncomplete { .. } => "submission_incomplete",
            EvalError::WindowClosed => "window_closed",
            EvalError::AlreadyResponded(_) => "already_responded",
            EvalError::Sealed => "sealed",
            EvalError::StudyInfeasible(_) => "study_infeasible",
            EvalError::InvalidPermutation(_) => "invalid_permutation",
            EvalError::IncompleteResponse(_) => "incomplete_response",
            EvalError::OutOfScale { .. } => "out_of_scale",
            EvalError::IncompleteStudy(_) => "incomplete_study",
            EvalError::Unauthorized(_) => "unauthorized",
            EvalError::NotFound(_) => "not_found",
            EvalError::BadRequest(_) => "bad_request",
            EvalError::CorruptLog { .. } => "corrupt_log",
            EvalError::Core(kbench_core::Error::SubmissionIncomplete { .. }) => "submission_incomplete",
            EvalError::Core(kbench_core::Error::ShapeMismatch { .. })
            | EvalError::Core(kbench_core::Error::CorruptContainer(_))
            | EvalError::Core(kbench_core::Error::InvalidData(_)) => "invalid_submission",
            EvalError::Core(_) => "internal",
            EvalError::Io(_) => "io",
            EvalError::Json(_) => "bad_request",
        }
    }
}
