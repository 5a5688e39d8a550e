use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CapslidError {
    #[error(transparent)]
    Core(#[from] capslid_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("non-finite loss at epoch {epoch}, step {step} (example {example}): {detail}")]
    NonFiniteLoss { epoch: usize, step: u64, example: usize, detail: String },
    #[error("manifest {}: line {line}: {message}", path.display())]
    Manifest { path: PathBuf, line: usize, message: String },
    #[error("{}: expected {expected} Hz audio, found {found} Hz", path.display())]
    SampleRate { path: PathBuf, expected: u32, found: u32 },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CapslidError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CapslidError {
    let path = path.into();
    move |source| CapslidError::Io { path, source }
}
