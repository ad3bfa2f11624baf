use thiserror::Error;

use crate::ClassId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not positive definite (pivot {pivot} is {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("row {row} is not unit norm (norm {norm})")]
    NotNormalized { row: usize, norm: f64 },
    #[error("anchor of class {class} has no negative proxies")]
    NoNegativeProxies { class: ClassId },
    #[error("no proxy for class {class}")]
    MissingProxy { class: ClassId },
    #[error("duplicate proxy for class {class}")]
    DuplicateProxy { class: ClassId },
    #[error("proxy selection is empty")]
    EmptySelection,
    #[error("K = {k} is too large for {n} items")]
    KTooLarge { k: usize, n: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("{classes} classes cannot have orthonormal means in dimension {dim}")]
    TooManyClasses { classes: usize, dim: usize },
    #[error("class {class} has {have} samples, batch plan needs {need}")]
    ClassTooSmall { class: ClassId, have: usize, need: usize },
    #[error("{have} classes available, batch plan needs {need}")]
    TooFewClasses { have: usize, need: usize },
    #[error("bad magic bytes in embedding file")]
    BadMagic,
    #[error("unsupported embedding file version {0}")]
    UnsupportedVersion(u8),
    #[error("embedding file is truncated")]
    TruncatedFile,
    #[error("embedding file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("non-finite value in file at row {row}")]
    NonFiniteValue { row: usize },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("non-finite gradient in {operand} at row {row} after {steps} steps")]
    NonFiniteGradient { operand: &'static str, row: usize, steps: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{}: {source}", path.display())]
    File { path: std::path::PathBuf, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps an I/O error with the path it concerns.
    pub fn file(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::File { path: path.to_path_buf(), source }
    }
}
