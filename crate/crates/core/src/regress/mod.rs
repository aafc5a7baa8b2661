//! Regression models: ridge-stabilized linear least squares, k-nearest
//! neighbours, bagged CART regression forests, and the constant-mean
//! baseline. All are trained under squared-error loss; fitting and
//! prediction are deterministic given the spec (forests derive every
//! random decision from their seed).

mod forest;
mod knn;
mod linear;

use serde::{Deserialize, Serialize};

pub use forest::{ForestParams, Tree};
pub use knn::{KnnParams, Weighting};
pub use linear::LinearParams;

use crate::error::{Error, Result};

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
}

impl FeatureMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch { expected: n_cols, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, n_rows, n_cols })
    }

    pub fn from_flat(data: Vec<f64>, n_rows: usize, n_cols: usize) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_rows * n_cols,
                got: data.len(),
            });
        }
        Ok(Self { data, n_rows, n_cols })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Which model to fit, with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Baseline,
    Linear(LinearParams),
    Knn(KnnParams),
    Forest(ForestParams),
}

/// Model family, without hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Linear,
    Knn,
    Forest,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Linear => "linear",
            ModelKind::Knn => "knn",
            ModelKind::Forest => "forest",
        };
        f.write_str(s)
    }
}

impl ModelSpec {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelSpec::Baseline => ModelKind::Baseline,
            ModelSpec::Linear(_) => ModelKind::Linear,
            ModelSpec::Knn(_) => ModelKind::Knn,
            ModelSpec::Forest(_) => ModelKind::Forest,
        }
    }

    /// Re-derive the forest seed for one cross-validation cell so that
    /// every (repeat, fold) cell trains on an independent random stream.
    /// Non-forest specs are returned unchanged.
    pub fn reseeded(&self, tag: u64) -> ModelSpec {
        match self {
            ModelSpec::Forest(p) => {
                let mut p = p.clone();
                p.seed = crate::seeding::derive(p.seed, &[tag]);
                ModelSpec::Forest(p)
            }
            other => other.clone(),
        }
    }
}

/// Diagnostics recorded during fitting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Set when an unregularized linear system was rank deficient and the
    /// minimum-norm least-squares solution was used.
    pub rank_deficient: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum ModelState {
    Baseline { mean: f64 },
    Linear { coefficients: Vec<f64>, intercept: f64 },
    Knn { x: FeatureMatrix, y: Vec<f64> },
    Forest { trees: Vec<Tree> },
}

/// A trained regressor. `predict` is deterministic given the fitted state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub diagnostics: FitDiagnostics,
    pub(crate) state: ModelState,
}

/// Fit a model to an `n x d` feature matrix and an `n`-vector of targets.
pub fn fit(spec: &ModelSpec, x: &FeatureMatrix, y: &[f64]) -> Result<FittedModel> {
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::Config("fit: empty training set".to_string()));
    }
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    let (state, diagnostics) = match spec {
        ModelSpec::Baseline => {
            let mean = y.iter().sum::<f64>() / n as f64;
            (ModelState::Baseline { mean }, FitDiagnostics::default())
        }
        ModelSpec::Linear(params) => linear::fit(params, x, y)?,
        ModelSpec::Knn(params) => knn::fit(params, x, y)?,
        ModelSpec::Forest(params) => forest::fit(params, x, y)?,
    };
    Ok(FittedModel { spec: spec.clone(), diagnostics, state })
}

impl FittedModel {
    /// Feature dimension the model was trained on.
    pub fn n_features(&self) -> usize {
        match &self.state {
            ModelState::Baseline { .. } => 0,
            ModelState::Linear { coefficients, .. } => coefficients.len(),
            ModelState::Knn { x, .. } => x.n_cols(),
            ModelState::Forest { .. } => 0,
        }
    }

    /// Predict a batch of rows.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        match &self.state {
            ModelState::Baseline { mean } => Ok(vec![*mean; x.n_rows()]),
            ModelState::Linear { coefficients, intercept } => {
                if x.n_cols() != coefficients.len() {
                    return Err(Error::DimensionMismatch {
                        expected: coefficients.len(),
                        got: x.n_cols(),
                    });
                }
                Ok((0..x.n_rows())
                    .map(|i| {
                        let row = x.row(i);
                        intercept
                            + row
                                .iter()
                                .zip(coefficients)
                                .map(|(a, b)| a * b)
                                .sum::<f64>()
                    })
                    .collect())
            }
            ModelState::Knn { x: train_x, y } => {
                let ModelSpec::Knn(params) = &self.spec else {
                    return Err(Error::Config("knn state with non-knn spec".to_string()));
                };
                knn::predict(params, train_x, y, x)
            }
            ModelState::Forest { trees } => forest::predict(trees, x),
        }
    }
}
