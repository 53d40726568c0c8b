//! Crate-wide error type.

use thiserror::Error;

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input is degenerate (e.g. an all-zero block cannot be power-normalized).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A loss or gradient stopped being finite during training.
    #[error("numerical divergence in {what}{}", batch_index.map(|i| format!(" (batch index {i})")).unwrap_or_default())]
    NumericalDivergence {
        what: String,
        batch_index: Option<usize>,
    },

    /// The replay buffer does not yet hold enough transitions to sample a
    /// batch; the training loop skips network updates for this step.
    #[error("replay buffer not ready: holds {size} transitions, batch needs {batch}")]
    BufferNotReady { size: usize, batch: usize },

    /// Config file contains a key the schema does not define.
    #[error("unknown config key `{0}`")]
    UnknownConfigKey(String),

    /// Config value is outside its permitted range.
    #[error("config value out of range: {key}: {message}")]
    ConfigOutOfRange { key: String, message: String },

    /// Config file could not be parsed as TOML.
    #[error("config syntax error: {0}")]
    ConfigSyntax(String),

    /// A checkpoint was written by an incompatible schema version.
    #[error("checkpoint schema version mismatch: file has {found}, this build reads {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    /// A checkpoint file is truncated or fails its checksum.
    #[error("checkpoint corrupted: {0}")]
    CheckpointCorrupt(String),

    /// A checkpoint disagrees with the requested configuration (block length,
    /// network shapes, system kind).
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    /// CSV file being loaded does not match the expected schema.
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
