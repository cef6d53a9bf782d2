use thiserror::Error;

/// State of a walk at the moment its step cap was hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PartialWalk {
    pub steps: u64,
    pub visited: u64,
    pub returns_to_root: u64,
    pub cover_time: Option<u64>,
}

#[derive(Debug, Error)]
pub enum LabError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("capacity error: {0}")]
    Capacity(String),
    #[error("step cap of {cap} exceeded after visiting {} sites", partial.visited)]
    CapExceeded { cap: u64, partial: PartialWalk },
    #[error("singular linear system (pivot below {0:e})")]
    Singular(f64),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        LabError::Usage(msg.into())
    }

    pub(crate) fn capacity(msg: impl Into<String>) -> Self {
        LabError::Capacity(msg.into())
    }

    /// Process exit code for the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Usage(_) | LabError::Json(_) => 2,
            LabError::Capacity(_) | LabError::CapExceeded { .. } | LabError::Singular(_) => 3,
            LabError::Io(_) => 1,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
