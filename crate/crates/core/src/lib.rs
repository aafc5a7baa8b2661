//! Survey-analysis toolkit for multi-sensor soil measurements: multi-rate
//! co-registration of GPS / EMI / stepped-frequency radar streams,
//! spatio-temporal filtering, regression under repeated and nested
//! cross-validation, and variogram-based evaluation through the
//! nugget-to-sill ratio — with a synthetic-survey generator providing
//! known ground truth for verification.

pub mod error;
pub mod evaluate;
pub mod preprocess;
pub mod regress;
pub mod seeding;
pub mod survey_data;
pub mod synth;
pub mod variogram;

pub use error::{Error, Result};
