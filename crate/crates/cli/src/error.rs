//! CLI error type with the stable exit-code contract:
//! 0 success, 2 configuration error, 3 numerical error.

use std::fmt;

use bandopt::Error as CoreError;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn numeric(err: impl fmt::Display) -> Self {
        CliError::Numeric(err.to_string())
    }

    /// Classify a core error raised while building inputs: validation-style
    /// failures are configuration errors, the rest are numerical.
    pub fn from_config_stage(err: CoreError) -> Self {
        use CoreError::*;
        match err {
            InvalidInterval { .. }
            | EmptyBasis { .. }
            | OutOfInterval { .. }
            | InvalidCorrelation { .. }
            | InvalidSigma { .. }
            | NonPositiveTime { .. }
            | UnsortedPoints
            | TooFewPoints { .. }
            | EndpointMismatch { .. }
            | GridTooCoarse { .. }
            | LengthMismatch { .. }
            | InvalidAlpha { .. }
            | TooFewDraws { .. }
            | InvalidConfig(_) => CliError::Config(err.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        CliError::Numeric(err.to_string())
    }
}
