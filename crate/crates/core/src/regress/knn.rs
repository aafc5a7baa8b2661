//! k-nearest-neighbour regression with Euclidean distances.
//!
//! Neighbour ties are broken by the lower training index, so predictions
//! are fully deterministic. Inverse-distance weighting uses
//! `w = 1 / (eps + dist)` with `eps = 1e-12`.

use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, FitDiagnostics, ModelState};
use crate::error::{Error, Result};

const INVERSE_DISTANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    InverseDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
    pub weighting: Weighting,
}

pub(super) fn fit(
    params: &KnnParams,
    x: &FeatureMatrix,
    y: &[f64],
) -> Result<(ModelState, FitDiagnostics)> {
    if params.k == 0 {
        return Err(Error::Config("knn: k must be at least 1".to_string()));
    }
    if params.k > x.n_rows() {
        return Err(Error::Config(format!(
            "knn: k = {} exceeds training size n = {}",
            params.k,
            x.n_rows()
        )));
    }
    Ok((
        ModelState::Knn { x: x.clone(), y: y.to_vec() },
        FitDiagnostics::default(),
    ))
}

pub(super) fn predict(
    params: &KnnParams,
    train_x: &FeatureMatrix,
    train_y: &[f64],
    queries: &FeatureMatrix,
) -> Result<Vec<f64>> {
    if queries.n_cols() != train_x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: train_x.n_cols(),
            got: queries.n_cols(),
        });
    }
    let n = train_x.n_rows();
    let k = params.k;
    let mut out = Vec::with_capacity(queries.n_rows());
    let mut dist2: Vec<(f64, usize)> = Vec::with_capacity(n);
    for qi in 0..queries.n_rows() {
        let q = queries.row(qi);
        dist2.clear();
        for ti in 0..n {
            let row = train_x.row(ti);
            let d2: f64 = row
                .iter()
                .zip(q)
                .map(|(a, b)| {
                    let d = a - b;
                    d * d
                })
                .sum();
            dist2.push((d2, ti));
        }
        // ties in distance resolve to the lowest training index
        dist2.sort_unstable_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.1.cmp(&b.1))
        });
        let neighbours = &dist2[..k];
        let value = match params.weighting {
            Weighting::Uniform => {
                neighbours.iter().map(|&(_, i)| train_y[i]).sum::<f64>() / k as f64
            }
            Weighting::InverseDistance => {
                let mut num = 0.0;
                let mut den = 0.0;
                for &(d2, i) in neighbours {
                    let w = 1.0 / (INVERSE_DISTANCE_EPS + d2.sqrt());
                    num += w * train_y[i];
                    den += w;
                }
                num / den
            }
        };
        out.push(value);
    }
    Ok(out)
}
