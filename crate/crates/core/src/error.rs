use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate homogeneous denominator {denominator:e} at point index {index}")]
    DegenerateDenominator { index: usize, denominator: f64 },

    #[error("singular transformation matrix (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("no transform satisfying the ranges after {attempts} attempts")]
    RangeUnsatisfiable { attempts: usize },

    #[error("invalid transform ranges: {0}")]
    InvalidRanges(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image dimensions {h}x{w} are not divisible by {factor}")]
    DimensionNotDivisible { h: usize, w: usize, factor: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("manifest parse error at line {line}: {reason}")]
    ManifestParse { line: usize, reason: String },

    #[error("missing file referenced by manifest: {0}")]
    MissingFile(PathBuf),

    #[error("checkpoint checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("checkpoint version mismatch: file has v{found}, expected v{expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("non-finite gradient encountered")]
    NumericalOverflow,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
