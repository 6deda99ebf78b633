use thiserror::Error;

use crate::engine::SessionStatus;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("decision references transfer {found}, but the pending transfer is {expected}")]
    StaleTransfer { expected: u64, found: u64 },
    #[error("session is not awaiting a decision (status {0:?})")]
    SessionNotAwaiting(SessionStatus),
    #[error("invalid rubric: {0}")]
    InvalidRubric(String),
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("audit log is inconsistent: {0}")]
    Replay(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl BridgeError {
    /// Stable machine-readable code for API responses.
    pub fn code(&self) -> &'static str {
        match self {
            BridgeError::ConfigInvalid(_) => "config_invalid",
            BridgeError::UnknownSession(_) => "unknown_session",
            BridgeError::StaleTransfer { .. } => "stale_transfer",
            BridgeError::SessionNotAwaiting(_) => "session_not_awaiting",
            BridgeError::InvalidRubric(_) => "invalid_rubric",
            BridgeError::InvalidDecision(_) => "invalid_decision",
            BridgeError::Replay(_) => "replay_mismatch",
            BridgeError::Io(_) => "io",
            BridgeError::Json(_) => "json",
        }
    }
}
