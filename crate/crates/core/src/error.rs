use std::path::PathBuf;

/// Errors surfaced by the library and mapped onto CLI exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Bad configuration: a value out of range, an unknown key, a shape mismatch.
    #[error("configuration error: {0}")]
    Config(String),
    /// Invalid arguments to a pure function (e.g. probabilities that do not sum to at most 1).
    #[error("invalid input: {0}")]
    Input(String),
    /// A numerical failure during training or evaluation.
    #[error("run error: {0}")]
    Run(String),
    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn run(msg: impl Into<String>) -> Self {
        Error::Run(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the CLI: 2 configuration, 3 run, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Input(_) => 2,
            Error::Run(_) => 3,
            Error::Io { .. } => 4,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
