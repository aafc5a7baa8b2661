//! Error types shared across the toolkit.

use thiserror::Error;

use crate::variogram::SphericalFit;

/// All fallible operations in this crate return this error type.
#[derive(Debug, Error)]
pub enum Error {
    /// CSV header does not match the expected schema.
    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },

    /// A cell could not be parsed as a number.
    #[error("parse error in {path} at data row {row}, column `{column}`: {message}")]
    Parse {
        path: String,
        row: usize,
        column: String,
        message: String,
    },

    /// Timestamps in a sensor stream are not strictly increasing.
    #[error("timestamps in {stream} not strictly increasing at index {index}")]
    Ordering { stream: String, index: usize },

    /// No EMI readings fell inside the averaging window around a radar sweep.
    #[error("no EMI readings within the averaging window around sweep time {sweep_time_s} s")]
    EmiGap { sweep_time_s: f64 },

    /// A radar sweep time lies outside the usable GPS time span.
    #[error("radar time {radar_time_s} s outside GPS coverage [{gps_start_s}, {gps_end_s}] s")]
    GpsCoverage {
        radar_time_s: f64,
        gps_start_s: f64,
        gps_end_s: f64,
    },

    /// Invalid parameter combination supplied by the caller.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Target values have zero variance; standardization is impossible.
    #[error("degenerate target: zero variance, cannot standardize")]
    DegenerateTarget,

    /// Pearson correlation is undefined because one input is constant.
    #[error("degenerate correlation: {side} values have zero variance")]
    DegenerateCorrelation { side: &'static str },

    /// Feature dimension differs between fit and predict (or config).
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// No point pairs fall within the requested maximum lag.
    #[error("empty variogram: no point pairs within max lag {max_lag_m} m")]
    EmptyVariogram { max_lag_m: f64 },

    /// Spherical fit failed to converge; carries the best parameters found.
    #[error("spherical fit did not converge within budget (best rss {rss})")]
    FitNonConvergence { best: Box<SphericalFit>, rss: f64 },

    /// Covariance matrix could not be factorized even with maximum jitter.
    #[error("covariance factorization failed after maximum diagonal jitter")]
    IllConditioned,

    /// Nugget-to-sill ratio is undefined for a zero sill.
    #[error("NSR undefined: sill is zero")]
    UndefinedNsr,

    /// An error raised inside one cross-validation cell, annotated with its position.
    #[error("cv cell (repeat {repeat}, fold {fold}): {source}")]
    CvCell {
        repeat: usize,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    /// A pipeline-level failure (e.g. empty dataset after filtering).
    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wrap an error with the (repeat, fold) cell it occurred in.
    pub fn in_cv_cell(self, repeat: usize, fold: usize) -> Self {
        Error::CvCell {
            repeat,
            fold,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
