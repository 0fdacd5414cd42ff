use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum PrismError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic {found:?}, expected \"PRSM\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported matrix file version {0}")]
    UnsupportedVersion(u16),

    #[error("unknown dtype code {0}")]
    UnknownDtype(u32),

    #[error("truncated payload: header declares {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("trailing data: header declares {expected} payload bytes, found {found}")]
    TrailingData { expected: u64, found: u64 },

    #[error("shape {rows}x{cols} overflows addressable size")]
    ShapeOverflow { rows: u64, cols: u64 },

    #[error("manifest parse error: {0}")]
    ManifestParse(String),

    #[error("duplicate variant_id {0:?} in manifest")]
    DuplicateVariant(String),

    #[error("variant {id:?} has negative empirical_gap {value}")]
    NegativeGap { id: String, value: f64 },

    #[error("variant {0:?} is missing feature_path")]
    MissingFeaturePath(String),

    #[error("{what} contains a non-finite entry at ({row}, {col})")]
    NonFinite {
        what: &'static str,
        row: usize,
        col: usize,
    },

    #[error("shape mismatch: {left} is {left_shape:?}, {right} is {right_shape:?}")]
    ShapeMismatch {
        left: &'static str,
        left_shape: (usize, usize),
        right: &'static str,
        right_shape: (usize, usize),
    },

    #[error("{0} has no rows")]
    EmptyRows(&'static str),

    #[error("{0} has no columns")]
    EmptyColumns(&'static str),

    #[error("{0} has zero Frobenius norm")]
    ZeroNorm(&'static str),

    #[error("alignment is not orthogonal: max |W^T W - I| = {0:e}")]
    NotOrthogonal(f64),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("covariance eigenvalue {value:e} is below the clamping floor {floor:e}")]
    NegativeEigenvalue { value: f64, floor: f64 },

    #[error("vocabulary size {vocab} exceeds the exact-mode ceiling {ceiling}; use spectral mode")]
    VocabCeiling { vocab: usize, ceiling: usize },

    #[error("label {label} at row {row} is outside vocabulary of size {vocab}")]
    LabelOutOfRange { row: usize, label: usize, vocab: usize },

    #[error("length mismatch: {left} has {left_len}, {right} has {right_len}")]
    LengthMismatch {
        left: &'static str,
        left_len: usize,
        right: &'static str,
        right_len: usize,
    },

    #[error("constant input: {0} has no rank variation")]
    ConstantInput(&'static str),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("training diverged at step {step}")]
    Diverged { step: usize },
}

pub type Result<T> = std::result::Result<T, PrismError>;

impl PrismError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PrismError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        PrismError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
