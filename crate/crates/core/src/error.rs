use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not expansive: smallest eigenvalue modulus {min_modulus} is not > 1")]
    NotExpansive { min_modulus: f64 },

    #[error("matrix is singular (|det| = {det})")]
    Singular { det: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite entry in {what}")]
    NonFinite { what: &'static str },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("ellipsoid series did not converge within {terms} terms (delta = {delta})")]
    SeriesDivergence { delta: f64, terms: usize },

    #[error("quasi-norm index leaves range [{min}, {max}] ({direction})")]
    IndexSaturation {
        min: i32,
        max: i32,
        direction: Saturation,
    },

    #[error("ball membership is not monotone in the scale index at i = {index}")]
    NonMonotoneMembership { index: i32 },

    #[error("grid shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("moment projection degenerate after {retries} retries")]
    DegenerateProjection { retries: usize },

    #[error("phase under-resolved at {count} point(s); residual phase {max_residual} rad/cell")]
    PhaseUnderResolved { count: usize, max_residual: f64 },

    #[error("tail estimate {tail} exceeds 10% of shell integral {total}")]
    TailDominant { tail: f64, total: f64 },

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),

    #[error("io: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Saturation {
    /// The point lies inside the smallest ball of the search range.
    TooSmall,
    /// The point lies outside the largest ball of the search range.
    TooLarge,
}

impl std::fmt::Display for Saturation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Saturation::TooSmall => f.write_str("too small"),
            Saturation::TooLarge => f.write_str("too large"),
        }
    }
}

impl Error {
    /// Variant name, used as a stable diagnostic tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotExpansive { .. } => "NotExpansive",
            Error::Singular { .. } => "Singular",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFinite { .. } => "NonFinite",
            Error::InvalidParameter { .. } => "InvalidParameter",
            Error::SeriesDivergence { .. } => "SeriesDivergence",
            Error::IndexSaturation { .. } => "IndexSaturation",
            Error::NonMonotoneMembership { .. } => "NonMonotoneMembership",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::DegenerateProjection { .. } => "DegenerateProjection",
            Error::PhaseUnderResolved { .. } => "PhaseUnderResolved",
            Error::TailDominant { .. } => "TailDominant",
            Error::GridTooCoarse(_) => "GridTooCoarse",
            Error::Io(_) => "Io",
            Error::Format(_) => "Format",
        }
    }

    /// True for errors caused by insufficient numerical resolution rather
    /// than invalid input.
    pub fn is_resolution(&self) -> bool {
        matches!(
            self,
            Error::PhaseUnderResolved { .. }
                | Error::TailDominant { .. }
                | Error::GridTooCoarse(_)
                | Error::SeriesDivergence { .. }
                | Error::IndexSaturation { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}
