use thiserror::Error;

use therblig_core::record::ReportView;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] therblig_core::Error),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unknown {kind} {id:?}")]
    NotFound { kind: &'static str, id: String },
    #[error("stage-1 incomplete: contact consensus for {0} is not resolved")]
    Stage1Incomplete(String),
    #[error("worker {worker:?} already responded to {task}")]
    DuplicateResponse { task: String, worker: String },
    #[error("segment {0} is already annotated")]
    TaskClosed(String),
    #[error("partial sequence already violates the contact rules")]
    InconsistentPartial(Box<ReportView>),
    #[error("store configuration mismatch: {0}")]
    ConfigMismatch(String),
    #[error("store log line {line}: {message}")]
    CorruptLog { line: usize, message: String },
    #[error("store i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Core(_) | ServiceError::BadRequest(_) => "bad_request",
            ServiceError::NotFound { .. } => "not_found",
            ServiceError::Stage1Incomplete(_) => "stage1_incomplete",
            ServiceError::DuplicateResponse { .. } => "duplicate_response",
            ServiceError::TaskClosed(_) => "task_closed",
            ServiceError::InconsistentPartial(_) => "inconsistent_partial",
            ServiceError::ConfigMismatch(_) => "config_mismatch",
            ServiceError::CorruptLog { .. } => "corrupt_log",
            ServiceError::Io(_) => "io",
        }
    }
}
