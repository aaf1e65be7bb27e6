use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{origin}:{line}: `{key}`: {message}")]
    ConfigFile {
        origin: String,
        line: usize,
        key: String,
        message: String,
    },
    #[error("`{key}`: {message}")]
    Value { key: String, message: String },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::ConfigFile { .. } | CliError::Value { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 1,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

impl From<cvqkd_lab::Error> for CliError {
    fn from(e: cvqkd_lab::Error) -> Self {
        match e {
            // Bad user input surfaced by the library.
            cvqkd_lab::Error::InvalidParameter { name, .. } => CliError::Value {
                key: name.to_string(),
                message: e.to_string(),
            },
            cvqkd_lab::Error::LengthMismatch { what, .. } => CliError::Value {
                key: what.to_string(),
                message: e.to_string(),
            },
            other => CliError::Solver(other.to_string()),
        }
    }
}
