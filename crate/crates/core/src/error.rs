use std::io;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
///
/// Variants are grouped by what went wrong rather than which module raised
/// them, so callers (and the CLI exit-code mapping) can react uniformly.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid metadata: {0}")]
    InvalidMetadata(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular matrix (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("degenerate latent pair: |{name}1 - {name}2| = {gap:e} <= eps")]
    DegeneratePair { name: &'static str, gap: f64 },

    #[error("channel ordering violation: {channel} requires {missing} to be decoded first")]
    OrderingViolation {
        channel: &'static str,
        missing: &'static str,
    },

    #[error("corrupt input: {0}")]
    CorruptInput(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),

    #[error("stream truncated inside scale {scale}")]
    Truncated { scale: usize },

    #[error("checksum mismatch in scale {scale}: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { scale: usize, stored: u32, computed: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
