use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping of errors, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data.
    Data,
    /// A metric is mathematically undefined for the given input.
    MetricUndefined,
    /// Invalid configuration value.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    // EMB1 decoding
    #[error("bad magic {found:?}, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),
    #[error("truncated EMB1 data: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("EMB1 shape {rows}x{dims} overflows addressable size")]
    ShapeOverflow { rows: u64, dims: u64 },
    #[error("EMB1 payload followed by {0} trailing bytes")]
    TrailingBytes(u64),

    // matrix shape and content
    #[error("matrix must have at least one row and one column, got {rows}x{dims}")]
    EmptyShape { rows: usize, dims: usize },
    #[error("data length {len} does not match shape {rows}x{dims}")]
    DataLength { len: usize, rows: usize, dims: usize },
    #[error("row {row} has zero norm")]
    ZeroNormRow { row: usize },
    #[error("row {row} contains a non-finite value")]
    NonFiniteRow { row: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("row count mismatch: {left} vs {right}")]
    RowMismatch { left: usize, right: usize },
    #[error("{what} must be L2-normalized")]
    NotNormalized { what: &'static str },
    #[error("k = {k} out of range [1, {max}]")]
    InvalidK { k: usize, max: usize },

    // descriptor sets and labels
    #[error("descriptor file is not valid JSON of the expected shape: {0}")]
    DescriptorJson(String),
    #[error("duplicate class name {0:?}")]
    DuplicateClass(String),
    #[error("class {0:?} has no descriptors")]
    EmptyClass(String),
    #[error("class {class:?} has an empty descriptor at position {position}")]
    EmptyDescriptor { class: String, position: usize },
    #[error("descriptor set has no classes")]
    NoClasses,
    #[error("labels line {line}: {message}")]
    Labels { line: usize, message: String },
    #[error("label {label} at row {row} is not below num_classes = {num_classes}")]
    LabelOutOfRange {
        row: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("class set of {path} does not match the first checkpoint")]
    ClassMismatch { path: PathBuf },
    #[error("caption texts count {texts} does not match corpus rows {rows}")]
    TextCount { texts: usize, rows: usize },

    // generators and configuration
    #[error("invalid configuration: {0}")]
    Config(String),

    // undefined metrics
    #[error("similarity undefined: descriptor {0:?} matched no captions")]
    UndefinedSim(String),
    #[error("CLIP similarity undefined: none of {0} descriptors matched any caption")]
    UndefinedAggregate(usize),
    #[error("frequency profile undefined: no descriptor has a defined similarity")]
    EmptyProfile,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::UndefinedSim(_) | Error::UndefinedAggregate(_) | Error::EmptyProfile => {
                ErrorClass::MetricUndefined
            }
            Error::Config(_) | Error::InvalidK { .. } => ErrorClass::Config,
            _ => ErrorClass::Data,
        }
    }
}
