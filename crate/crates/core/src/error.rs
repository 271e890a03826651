use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (relative residual {residual:e})")]
    NotHermitian { residual: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("eigensolver did not converge")]
    EigenFailed,
    #[error("time {t} outside schedule range [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("level index {index} out of range ({count} levels)")]
    InvalidLevel { index: usize, count: usize },
    #[error("gap closure at t = {t}: levels {lower} and {upper} separated by {gap:e} (delta_deg {delta_deg:e})")]
    GapClosure {
        t: f64,
        lower: usize,
        upper: usize,
        gap: f64,
        delta_deg: f64,
    },
    #[error("level tracking lost between t = {t_prev} and t = {t}: {detail}; refine the grid")]
    LevelTracking { t_prev: f64, t: f64, detail: String },
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("bound certification failed: {0}")]
    Certification(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate point: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Time of failure for gap-closure and tracking errors.
    pub fn failure_time(&self) -> Option<f64> {
        match self {
            Error::GapClosure { t, .. } => Some(*t),
            Error::LevelTracking { t, .. } => Some(*t),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
