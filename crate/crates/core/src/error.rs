use thiserror::Error;

/// Errors produced anywhere in the codec.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScrError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("quality level {q} outside [1, {n_levels}]")]
    QualityOutOfRange { q: f64, n_levels: usize },
    #[error("zero divisor in channel {0}")]
    ZeroDivisor(usize),

    #[error("coded stream is truncated")]
    StreamTruncated,
    #[error("coded stream is malformed: {0}")]
    StreamCorrupt(&'static str),

    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("container truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("{0} trailing bytes after container")]
    TrailingBytes(usize),

    #[error("weight digest mismatch")]
    DigestMismatch,
    #[error("invalid weight container: {0}")]
    InvalidWeights(String),

    #[error("report output failed: {0}")]
    Output(String),
}

impl ScrError {
    /// True for errors caused by malformed bitstream or weight files.
    pub fn is_format_error(&self) -> bool {
        matches!(
            self,
            ScrError::StreamTruncated
                | ScrError::StreamCorrupt(_)
                | ScrError::BadMagic(_)
                | ScrError::UnsupportedVersion(_)
                | ScrError::Truncated
                | ScrError::ChecksumMismatch { .. }
                | ScrError::InvalidHeader(_)
                | ScrError::TrailingBytes(_)
                | ScrError::InvalidWeights(_)
        )
    }
}

pub type Result<T, E = ScrError> = std::result::Result<T, E>;
