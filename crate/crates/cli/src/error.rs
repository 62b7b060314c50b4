use std::fmt;

use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    /// schema violation or unusable path
    Config(String),
    /// positivity or trace violation
    Numerical(String),
    NonConvergence(String),
    Io(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::NonConvergence(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "invalid-config",
            CliError::Numerical(_) => "numerical-failure",
            CliError::NonConvergence(_) => "non-convergence",
            CliError::Io(_) => "io",
            CliError::Other(_) => "internal",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::NonConvergence(m) | CliError::Io(m) | CliError::Other(m) => m,
        }
    }

    /// One-line JSON written to stderr on failure.
    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "exit_code": self.exit_code(), "message": self.message() }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

impl std::error::Error for CliError {}

impl From<fracsync::Error> for CliError {
    fn from(e: fracsync::Error) -> Self {
        use fracsync::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidSpec(_) | E::SiteOutOfRange { .. } => CliError::Config(msg),
            E::TraceDrift { .. } | E::PositivityViolation { .. } | E::Truncation { .. } | E::Aliasing(_) => CliError::Numerical(msg),
            E::NonConvergence(_) | E::FitFailed(_) => CliError::NonConvergence(msg),
            _ => CliError::Other(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
