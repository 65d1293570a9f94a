use prism_core::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Io(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Numeric(m) => m,
        }
    }

    /// One line, prefixed with the failure class.
    pub fn diagnostic(&self) -> String {
        let kind = match self {
            CliError::Config(_) => "config error",
            CliError::Io(_) => "i/o error",
            CliError::Numeric(_) => "numeric error",
        };
        format!("prism: {kind}: {}", self.message().replace('\n', " "))
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Parse(_) => CliError::Io(msg),
            Error::InvalidConfig(_)
            | Error::InvalidArgument(_)
            | Error::ShapeMismatch { .. }
            | Error::Empty(_) => CliError::Config(msg),
            _ => CliError::Numeric(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
