use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{key}: {msg}")]
    Config { key: String, msg: String },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    CheckFailed(String),
    #[error(transparent)]
    Core(#[from] nejunction_core::Error),
    #[error("{what}: {source}")]
    Context { what: String, source: Box<CliError> },
}

impl CliError {
    /// Stable tag for the `error[<kind>]: ...` line on stderr.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Parse(_) => "parse",
            CliError::Usage(_) => "usage",
            CliError::Io(_) => "io",
            CliError::CheckFailed(_) => "check",
            CliError::Core(e) => e.kind(),
            CliError::Context { source, .. } => source.kind(),
        }
    }

    pub fn context(self, what: &str) -> Self {
        CliError::Context {
            what: what.to_string(),
            source: Box::new(self),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::CheckFailed(_) => 1,
            CliError::Context { source, .. } => source.exit_code(),
            _ => 2,
        }
    }

    /// Single-line rendering for stderr.
    pub fn line(&self) -> String {
        let msg = self
            .to_string()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        format!("error[{}]: {msg}", self.kind())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
