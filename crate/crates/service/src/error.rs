use revkit_core::Error as CoreError;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("no classifier model has been trained yet")]
    NoModel,
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Core(CoreError::Io(e))
    }
}

impl From<serde_json::Error> for ServiceError {
    fn from(e: serde_json::Error) -> Self {
        ServiceError::Core(CoreError::Json(e))
    }
}

impl ServiceError {
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::Core(e) => e.kind(),
            ServiceError::NotFound(_) => "NotFound",
            ServiceError::Conflict(_) => "Conflict",
            ServiceError::NoModel => "NoModel",
            ServiceError::Validation(_) => "Validation",
            ServiceError::Unauthorized => "Unauthorized",
        }
    }

    /// Caller mistakes, reported with exit status 2 by the CLI.
    pub fn is_validation(&self) -> bool {
        match self {
            ServiceError::Core(e) => e.is_validation(),
            ServiceError::Validation(_) => true,
            _ => false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_validation() {
            2
        } else {
            1
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() })
    }
}
