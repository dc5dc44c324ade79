use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file for asset `{asset}`: {path}")]
    MissingFile { asset: String, path: PathBuf },

    #[error("asset `{asset}` is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        asset: String,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("asset `{asset}` has non-positive depth {value} at pixel ({u}, {v})")]
    NonPositiveDepth {
        asset: String,
        u: usize,
        v: usize,
        value: f64,
    },

    #[error("bad .flo magic {0}")]
    BadMagic(f32),

    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("fluid region is empty")]
    EmptyFluidRegion,

    #[error("no motion hints supplied")]
    NoHints,

    #[error("degenerate triangle {0}")]
    DegenerateTriangle(usize),

    #[error("pressure solve diverged after {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("pressure system is singular: {0}")]
    SingularSystem(String),

    #[error("every pixel is a hole")]
    AllHoles,

    #[error("inserted object does not project into the frame")]
    ObjectOutOfFrame,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier used in API error payloads and FFI error codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingFile { .. } => "MissingFile",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonPositiveDepth { .. } => "NonPositiveDepth",
            Error::BadMagic(_) => "BadMagic",
            Error::TruncatedFile { .. } => "TruncatedFile",
            Error::EmptySequence => "EmptySequence",
            Error::EmptyFluidRegion => "EmptyFluidRegion",
            Error::NoHints => "NoHints",
            Error::DegenerateTriangle(_) => "DegenerateTriangle",
            Error::SolverDiverged { .. } => "SolverDiverged",
            Error::SingularSystem(_) => "SingularSystem",
            Error::AllHoles => "AllHoles",
            Error::ObjectOutOfFrame => "ObjectOutOfFrame",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::InvalidInput(_) => "InvalidInput",
            Error::Format { .. } => "Format",
            Error::Io(_) => "Io",
            Error::Image(_) => "Image",
            Error::Json(_) => "Json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
