use std::fmt;

/// CLI failure, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, flags or inputs (exit 2).
    Config(String),
    /// A numerical module failed (exit 3).
    Numerical(String),
    /// A `report` check failed (exit 4).
    Acceptance(String),
    /// Reading or writing files (exit 1).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::Acceptance(_) => 4,
        }
    }

    /// Wrap a module error with the name of the step that raised it.
    pub fn numerical(context: &str, e: frontlab::Error) -> Self {
        match e {
            frontlab::Error::Parameter(_) | frontlab::Error::Validation(_) => {
                Self::Config(format!("{context}: {e}"))
            }
            _ => Self::Numerical(format!("{context}: {e}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numerical(m) => write!(f, "numerical failure: {m}"),
            Self::Acceptance(m) => write!(f, "acceptance check failed: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.to_string())
    }
}
