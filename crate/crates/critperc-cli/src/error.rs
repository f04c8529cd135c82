use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Sim(#[from] critperc::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{failed} of {total} tasks failed (first: {first})")]
    Tasks { failed: usize, total: usize, capped: bool, first: String },

    #[error("criteria failed: {0}")]
    Criteria(String),
}

impl CliError {
    /// 1 for failed criteria and tasks, 2 for usage errors, 3 for cap aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Sim(e) if is_cap(e) => 3,
            CliError::Tasks { capped: true, .. } => 3,
            _ => 1,
        }
    }
}

pub fn is_cap(e: &critperc::Error) -> bool {
    matches!(e, critperc::Error::StepCap { .. } | critperc::Error::RejectionCap { .. })
}
