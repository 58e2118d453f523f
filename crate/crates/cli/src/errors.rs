//! Error classification and exit codes.
//!
//! Exit codes: 0 success, 2 config error, 3 input format error, 4 internal
//! invariant violation. Failures print a machine-readable JSON object to
//! stderr.

use ropescope_core::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or flags (exit 2).
    Config(String),
    /// Unreadable or malformed input files (exit 3).
    Input(String),
    /// Broken internal invariant (exit 4).
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Input(_) => "input",
            CliError::Internal(_) => "internal",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Input(m) | CliError::Internal(m) => m,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "kind": self.kind(), "message": self.message() }
        })
        .to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match &e {
            CoreError::BadMagic(_)
            | CoreError::UnsupportedVersion(_)
            | CoreError::Truncated(_)
            | CoreError::UnknownDtype(_)
            | CoreError::ShapeInconsistency(_)
            | CoreError::Manifest(_)
            | CoreError::WeightShape { .. }
            | CoreError::MissingWeight(_)
            | CoreError::Io(_)
            | CoreError::Json(_) => CliError::Input(e.to_string()),
            CoreError::InvalidFreqSpec(_)
            | CoreError::InvalidScaling(_)
            | CoreError::InvalidModelConfig(_)
            | CoreError::FractionOutOfRange(_)
            | CoreError::MaskOutOfBounds { .. }
            | CoreError::ContextTooShort { .. }
            | CoreError::SequenceTooShort { .. }
            | CoreError::TooFewTokens { .. }
            | CoreError::UnknownTokenId { .. }
            | CoreError::UnsupportedForward(_) => CliError::Config(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}
