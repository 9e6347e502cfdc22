use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("planning error: {0}")]
    Planning(String),

    #[error("no window of length {horizon} exists in the dataset")]
    EmptySupport { horizon: usize },

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("missing artifact `{name}` (expected at {path})")]
    MissingArtifact { name: String, path: PathBuf },

    #[error("{path}: format version {found} is not supported (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },

    #[error("{path}: checksum mismatch (manifest {expected:08x}, file {found:08x})")]
    Checksum { path: PathBuf, expected: u32, found: u32 },

    #[error("{path}: truncated ({found} bytes, expected {expected})")]
    Truncated { path: PathBuf, expected: u64, found: u64 },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("io error on {path}: {source}")]
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

    pub fn malformed(msg: impl Into<String>) -> Self {
        Error::Malformed(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingArtifact { .. } => 3,
            Error::Io { .. } => 4,
            Error::VersionMismatch { .. }
            | Error::Checksum { .. }
            | Error::Truncated { .. }
            | Error::Malformed(_) => 5,
            Error::Planning(_) => 6,
            Error::EmptySupport { .. } => 7,
            Error::Divergence(_) => 8,
        }
    }
}
