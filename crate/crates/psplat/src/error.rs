use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Error taxonomy shared by the library and the CLI.
///
/// The CLI maps variants to stable exit codes: `MissingArtifact`/`Stale` -> 2,
/// `Format` -> 3, `Config` -> 4, everything else -> 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path} at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("missing upstream artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("stale upstream artifact {path}: {message}")]
    Stale { path: PathBuf, message: String },

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("unknown query label: {0}")]
    UnknownQuery(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    /// Exit code contract used by the CLI and checked by integration tests.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::MissingArtifact(_) | Error::Stale { .. } => 2,
            Error::Format { .. } => 3,
            Error::Config(_) => 4,
            _ => 1,
        }
    }
}
