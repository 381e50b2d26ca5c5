use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A point handed to a ball kernel lies on or outside the unit sphere.
    #[error("point with norm {norm} is not strictly inside the unit ball")]
    PointOutsideBall { norm: f64 },

    /// A spec or parameter failed validation before any work started.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Cost matrix handed to the assignment solver is not square.
    #[error("cost matrix is not square: {rows} rows, {cols} cols in row {bad_row}")]
    NonSquareCost {
        rows: usize,
        cols: usize,
        bad_row: usize,
    },

    /// Cost matrix contains NaN or infinite entries.
    #[error("cost matrix entry ({row},{col}) is not finite")]
    NonFiniteCost { row: usize, col: usize },

    /// An IDX file starts with the wrong magic number.
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },

    /// An IDX file ended before the payload promised by its header.
    #[error("truncated IDX payload: expected {expected} bytes, found {found}")]
    TruncatedIdx { expected: usize, found: usize },

    /// Image and label files disagree about the number of items.
    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    /// Vector dimensions disagree (dataset vs encoder, features vs particles, ...).
    #[error("shape mismatch: {context} (expected {expected}, found {found})")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// A persisted document failed semantic validation after parsing.
    #[error("bad document {path}: {reason}")]
    BadDocument { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
