//! Linear least squares with optional ridge penalty.
//!
//! Minimizes `||X b + b0 - y||^2 + lambda ||b||^2` with the intercept
//! unpenalized: columns and targets are centred, then the centred system is
//! solved through an orthogonal decomposition (QR reduction followed by an
//! SVD of the triangular factor). With `lambda = 0` and a rank-deficient
//! system the minimum-norm least-squares solution is returned and the
//! deficiency is flagged in the diagnostics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, FitDiagnostics, ModelState};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearParams {
    pub ridge_lambda: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self { ridge_lambda: 0.0 }
    }
}

pub(super) fn fit(
    params: &LinearParams,
    x: &FeatureMatrix,
    y: &[f64],
) -> Result<(ModelState, FitDiagnostics)> {
    if params.ridge_lambda < 0.0 {
        return Err(Error::Config(format!(
            "ridge lambda must be non-negative, got {}",
            params.ridge_lambda
        )));
    }
    let n = x.n_rows();
    let d = x.n_cols();

    let mut col_means = vec![0.0f64; d];
    for i in 0..n {
        for (m, v) in col_means.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    for m in &mut col_means {
        *m /= n as f64;
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;

    let mut centred = DMatrix::<f64>::zeros(n, d);
    for i in 0..n {
        let row = x.row(i);
        for j in 0..d {
            centred[(i, j)] = row[j] - col_means[j];
        }
    }
    let yc = nalgebra::DVector::from_iterator(n, y.iter().map(|v| v - y_mean));

    // Reduce tall systems with QR first; the SVD then runs on a d x d
    // triangular factor instead of the full n x d matrix.
    let (reduced, rhs) = if n > d {
        let qr = centred.qr();
        let q = qr.q();
        let r = qr.r();
        let qty = q.transpose() * &yc;
        (r, qty)
    } else {
        (centred, yc)
    };

    let svd = reduced.svd(true, true);
    let u = svd.u.as_ref().expect("svd with u");
    let v_t = svd.v_t.as_ref().expect("svd with v_t");
    let sigma = &svd.singular_values;

    let sigma_max = sigma.iter().cloned().fold(0.0f64, f64::max);
    let cutoff = sigma_max * (n.max(d) as f64) * f64::EPSILON;

    let uty = u.transpose() * &rhs;
    let mut beta = nalgebra::DVector::<f64>::zeros(d);
    let mut rank = 0usize;
    for k in 0..sigma.len() {
        let s = sigma[k];
        if s <= cutoff {
            continue; // dropped direction: minimum-norm solution
        }
        rank += 1;
        let factor = if params.ridge_lambda > 0.0 {
            s / (s * s + params.ridge_lambda)
        } else {
            1.0 / s
        };
        let scale = factor * uty[k];
        for j in 0..d {
            beta[j] += scale * v_t[(k, j)];
        }
    }

    let rank_deficient = rank < d.min(n.saturating_sub(1).max(1));
    let intercept = y_mean
        - col_means
            .iter()
            .zip(beta.iter())
            .map(|(m, b)| m * b)
            .sum::<f64>();

    Ok((
        ModelState::Linear {
            coefficients: beta.iter().copied().collect(),
            intercept,
        },
        FitDiagnostics {
            rank_deficient,
            rank: Some(rank),
        },
    ))
}
