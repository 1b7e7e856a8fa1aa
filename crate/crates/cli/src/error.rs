use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("no sequences found under {0}")]
    NoSequencesFound(PathBuf),
    #[error("unrecognized source layout: {0}")]
    UnrecognizedLayout(String),
    #[error("missing labels: {0}")]
    MissingLabels(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Core(#[from] skelact::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 2 for data errors, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(skelact::Error::NumericFailure(_)) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(
            HarnessError::Core(skelact::Error::NumericFailure(3)).exit_code(),
            3
        );
        assert_eq!(
            HarnessError::NoSequencesFound("x".into()).exit_code(),
            2
        );
        assert_eq!(
            HarnessError::Core(skelact::Error::UnknownTopology("x".into())).exit_code(),
            2
        );
    }
}
