use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("crop {out_h}x{out_w} does not fit inside a {height}x{width} image")]
    InvalidCropSize {
        out_h: usize,
        out_w: usize,
        height: usize,
        width: usize,
    },

    #[error("virtual coil fit is degenerate: {0}")]
    FitDegenerate(String),

    #[error("corrupt container: {0}")]
    CorruptContainer(String),

    #[error("infeasible mask: {0}")]
    MaskInfeasible(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("reference volume is all zero")]
    DegenerateReference,

    #[error("{height}x{width} slice is smaller than the {window}x{window} SSIM window")]
    WindowTooLarge { height: usize, width: usize, window: usize },

    #[error("submission incomplete: missing {missing:?}, unexpected {extra:?}")]
    SubmissionIncomplete { missing: Vec<String>, extra: Vec<String> },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("solver diverged at iteration {iteration}: residual {residual:e} exceeds 10x the best {best:e}")]
    SolverDiverged { iteration: usize, residual: f64, best: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
