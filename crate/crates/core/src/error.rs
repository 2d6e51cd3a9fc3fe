use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("matrix asymmetry {asymmetry:e} exceeds tolerance {tolerance:e}")]
    AsymmetryTooLarge { asymmetry: f64, tolerance: f64 },

    #[error("{routine} did not converge within {iterations} sweeps")]
    ConvergenceFailure { routine: &'static str, iterations: usize },

    #[error("rows are linearly dependent (row {row} has residual norm {residual:e})")]
    RankDeficient { row: usize, residual: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sample count {0} must be even and at least 2")]
    OddSampleCount(usize),

    #[error("dataset contains no tasks")]
    EmptyDataset,

    #[error("expected {expected} task, got {found}")]
    WrongTaskKind { expected: &'static str, found: &'static str },

    #[error("all tasks must be of the same kind")]
    MixedTaskKinds,

    #[error("rank {r} out of range for dimension {d}")]
    RankOutOfRange { r: usize, d: usize },

    #[error("perturbation {perturbation:e} is not below lambda_r(M) = {lambda_r:e}")]
    GapViolated { perturbation: f64, lambda_r: f64 },

    #[error("empirical loss became non-finite at iteration {0}")]
    NonFiniteLoss(usize),

    #[error("bad IDX magic number 0x{0:08x}")]
    BadMagic(u32),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("not enough samples of digit {digit}: need {needed}, have {available}")]
    InsufficientSamples { digit: u8, needed: usize, available: usize },

    #[error("digit pair ({0}, {1}) is invalid or requested twice")]
    DuplicatePair(u8, u8),

    #[error("no records to report")]
    EmptyRecords,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
