//! Error type shared across the library.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("duplicate record for ({exporter}, {importer}) at {time}")]
    DuplicateRecord {
        exporter: String,
        importer: String,
        time: String,
    },

    #[error("missing cell ({exporter}, {importer}) at {time}")]
    MissingCell {
        exporter: String,
        importer: String,
        time: String,
    },

    #[error("no records for month {time}; panel months must be contiguous")]
    NonContiguousMonths { time: String },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("non-finite accumulation at lag {lag}")]
    NonFinite { lag: usize },

    #[error(
        "eigendecomposition failed to converge after {sweeps} sweeps \
         (off-diagonal norm {off_norm:e}, max |entry| {max_entry:e})"
    )]
    EigenNoConverge {
        sweeps: usize,
        off_norm: f64,
        max_entry: f64,
    },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("sign convention failure: column {column} has no strictly positive entry")]
    SignConvention { column: usize },

    #[error("zero denominator: {0}")]
    ZeroDenominator(String),

    #[error("unknown export kind: {0}")]
    UnknownExportKind(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI's single-line error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "PARSE",
            Error::DuplicateRecord { .. } => "DUPLICATE_RECORD",
            Error::MissingCell { .. } => "MISSING_CELL",
            Error::NonContiguousMonths { .. } => "NON_CONTIGUOUS_MONTHS",
            Error::ShapeMismatch(_) => "SHAPE_MISMATCH",
            Error::InvalidParameter(_) => "INVALID_PARAMETER",
            Error::OutOfRange(_) => "OUT_OF_RANGE",
            Error::NonFinite { .. } => "NON_FINITE",
            Error::EigenNoConverge { .. } => "EIGEN_NO_CONVERGE",
            Error::DegenerateSpectrum(_) => "DEGENERATE_SPECTRUM",
            Error::SignConvention { .. } => "SIGN_CONVENTION",
            Error::ZeroDenominator(_) => "ZERO_DENOMINATOR",
            Error::UnknownExportKind(_) => "UNKNOWN_EXPORT_KIND",
            Error::Io(_) => "IO",
            Error::Csv(_) => "CSV",
            Error::Json(_) => "JSON",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
