//! Empirical semivariogram estimation, spherical model fitting and the
//! nugget-to-sill ratio (NSR).
//!
//! The empirical semivariance in a lag bin is
//! `gamma(bin) = sum_{pairs in bin} (v_i - v_j)^2 / (2 * N_bin)`,
//! pairs binned by Euclidean separation in `(0, max_lag]`. A spherical
//! model (nugget / sill / range) is fitted by pair-count-weighted least
//! squares: coarse grid search followed by Nelder-Mead refinement.
//!
//! NSR = nugget / sill. Lower values mean stronger spatial structure; for
//! model predictions the nugget is bounded below by the prediction noise,
//! which makes NSR usable as a ground-truth-free performance measure.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::ScenarioReport;

/// Binned lag distances, semivariances and pair counts.
///
/// Only populated bins are stored; `bin_centers_m` is strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalVariogram {
    pub bin_centers_m: Vec<f64>,
    pub semivariances: Vec<f64>,
    pub pair_counts: Vec<u64>,
    pub bin_width_m: f64,
    pub max_lag_m: f64,
}

/// Diagnostics attached to a spherical fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFlag {
    /// The fitted curve is flat (pure nugget); the range is not
    /// identifiable and is reported as the smallest candidate value.
    RangeUnidentifiable,
    /// All semivariances were zero (constant input values).
    ZeroVariance,
}

/// Spherical variogram parameters with fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalFit {
    pub nugget: f64,
    pub sill: f64,
    pub range_m: f64,
    /// Pair-count-weighted residual sum of squares at the fitted parameters.
    pub rss: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<FitFlag>,
}

impl SphericalFit {
    pub fn nsr(&self) -> Result<f64> {
        nugget_to_sill_ratio(self)
    }
}

/// Variogram estimation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariogramConfig {
    pub bin_width_m: f64,
    /// Maximum lag; `None` uses half the extent of the point cloud
    /// (bounding-box diagonal).
    pub max_lag_m: Option<f64>,
    /// Accumulate pairs through a uniform grid index instead of the
    /// all-pairs scan. Produces identical results; faster when the max lag
    /// is small relative to the extent.
    pub use_spatial_index: bool,
}

impl Default for VariogramConfig {
    fn default() -> Self {
        Self {
            bin_width_m: 1.0,
            max_lag_m: None,
            use_spatial_index: false,
        }
    }
}

/// Half the bounding-box diagonal of the point cloud.
pub fn default_max_lag(points: &[(f64, f64)]) -> f64 {
    let mut min_x = f64::INFINITY;
    let mut max_x = f64::NEG_INFINITY;
    let mut min_y = f64::INFINITY;
    let mut max_y = f64::NEG_INFINITY;
    for &(x, y) in points {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let dx = max_x - min_x;
    let dy = max_y - min_y;
    (dx * dx + dy * dy).sqrt() / 2.0
}

/// Bin index for a separation `h` under bins `(b*w, (b+1)*w]`.
#[inline]
fn bin_of(h: f64, bin_width: f64) -> usize {
    let q = h / bin_width;
    let b = q.ceil() as i64 - 1;
    b.max(0) as usize
}

struct BinAccumulator {
    sums: Vec<f64>,
    counts: Vec<u64>,
    bin_width: f64,
    max_lag: f64,
}

impl BinAccumulator {
    fn new(bin_width: f64, max_lag: f64) -> Self {
        let n_bins = (max_lag / bin_width).ceil() as usize;
        Self {
            sums: vec![0.0; n_bins.max(1)],
            counts: vec![0; n_bins.max(1)],
            bin_width,
            max_lag,
        }
    }

    #[inline]
    fn add_pair(&mut self, dx: f64, dy: f64, dv: f64) {
        let h2 = dx * dx + dy * dy;
        if h2 == 0.0 {
            return; // zero-distance pairs excluded
        }
        let h = h2.sqrt();
        if h > self.max_lag {
            return;
        }
        let b = bin_of(h, self.bin_width).min(self.sums.len() - 1);
        self.sums[b] += dv * dv;
        self.counts[b] += 1;
    }

    fn finish(self) -> Result<EmpiricalVariogram> {
        let mut bin_centers_m = Vec::new();
        let mut semivariances = Vec::new();
        let mut pair_counts = Vec::new();
        for (b, (&sum, &count)) in self.sums.iter().zip(&self.counts).enumerate() {
            if count > 0 {
                bin_centers_m.push((b as f64 + 0.5) * self.bin_width);
                semivariances.push(sum / (2.0 * count as f64));
                pair_counts.push(count);
            }
        }
        if bin_centers_m.is_empty() {
            return Err(Error::EmptyVariogram { max_lag_m: self.max_lag });
        }
        Ok(EmpiricalVariogram {
            bin_centers_m,
            semivariances,
            pair_counts,
            bin_width_m: self.bin_width,
            max_lag_m: self.max_lag,
        })
    }
}

/// Compute the empirical semivariogram over geo-located values.
pub fn empirical_variogram(
    points: &[(f64, f64)],
    values: &[f64],
    bin_width_m: f64,
    max_lag_m: f64,
) -> Result<EmpiricalVariogram> {
    empirical_variogram_opts(points, values, bin_width_m, max_lag_m, false)
}

/// [`empirical_variogram`] with an explicit accumulation strategy.
pub fn empirical_variogram_opts(
    points: &[(f64, f64)],
    values: &[f64],
    bin_width_m: f64,
    max_lag_m: f64,
    use_spatial_index: bool,
) -> Result<EmpiricalVariogram> {
    if points.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: values.len(),
        });
    }
    if points.len() < 2 {
        return Err(Error::Config(
            "empirical_variogram: need at least 2 points".to_string(),
        ));
    }
    if !(bin_width_m > 0.0) || !(max_lag_m > 0.0) {
        return Err(Error::Config(format!(
            "empirical_variogram: bin width and max lag must be positive, got ({bin_width_m}, {max_lag_m})"
        )));
    }

    let mut acc = BinAccumulator::new(bin_width_m, max_lag_m);
    if use_spatial_index {
        accumulate_indexed(&mut acc, points, values);
    } else {
        accumulate_all_pairs(&mut acc, points, values);
    }
    acc.finish()
}

fn accumulate_all_pairs(acc: &mut BinAccumulator, points: &[(f64, f64)], values: &[f64]) {
    for i in 0..points.len() {
        let (xi, yi) = points[i];
        let vi = values[i];
        for j in i + 1..points.len() {
            let (xj, yj) = points[j];
            acc.add_pair(xi - xj, yi - yj, vi - values[j]);
        }
    }
}

/// Grid-indexed accumulation with cell size = max lag. Candidate partners
/// for each point are gathered from the 3x3 neighbourhood and visited in
/// ascending index order, so the accumulation order — and therefore every
/// floating-point sum — matches the all-pairs scan exactly.
fn accumulate_indexed(acc: &mut BinAccumulator, points: &[(f64, f64)], values: &[f64]) {
    let cell = acc.max_lag;
    let key = |x: f64, y: f64| -> (i64, i64) {
        ((x / cell).floor() as i64, (y / cell).floor() as i64)
    };
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &(x, y)) in points.iter().enumerate() {
        grid.entry(key(x, y)).or_default().push(i);
    }
    let mut candidates: Vec<usize> = Vec::new();
    for i in 0..points.len() {
        let (xi, yi) = points[i];
        let (cx, cy) = key(xi, yi);
        candidates.clear();
        for nx in cx - 1..=cx + 1 {
            for ny in cy - 1..=cy + 1 {
                if let Some(cell_points) = grid.get(&(nx, ny)) {
                    candidates.extend(cell_points.iter().copied().filter(|&j| j > i));
                }
            }
        }
        candidates.sort_unstable();
        for &j in candidates.iter() {
            let (xj, yj) = points[j];
            acc.add_pair(xi - xj, yi - yj, values[i] - values[j]);
        }
    }
}

/// The spherical variogram model.
///
/// `gamma(0) = 0`; for `0 < h <= a`:
/// `nugget + (sill - nugget) * (1.5 h/a - 0.5 (h/a)^3)`; `sill` beyond `a`.
pub fn spherical_gamma(h: f64, nugget: f64, sill: f64, range_m: f64) -> f64 {
    if h == 0.0 {
        return 0.0;
    }
    if h >= range_m {
        return sill;
    }
    let r = h / range_m;
    nugget + (sill - nugget) * (1.5 * r - 0.5 * r * r * r)
}

/// Nugget-to-sill ratio of a fit; errors when the sill is zero.
pub fn nugget_to_sill_ratio(fit: &SphericalFit) -> Result<f64> {
    if fit.sill <= 0.0 {
        return Err(Error::UndefinedNsr);
    }
    Ok(fit.nugget / fit.sill)
}

// ── Spherical fitting ─────────────────────────────────────────────────────

/// Weighted residual sum of squares of the spherical model against the
/// empirical bins; weights are pair counts.
fn weighted_rss(ev: &EmpiricalVariogram, nugget: f64, sill: f64, range_m: f64) -> f64 {
    let mut rss = 0.0;
    for ((&h, &g), &c) in ev
        .bin_centers_m
        .iter()
        .zip(&ev.semivariances)
        .zip(&ev.pair_counts)
    {
        let r = g - spherical_gamma(h, nugget, sill, range_m);
        rss += c as f64 * r * r;
    }
    rss
}

/// Nelder-Mead on an unconstrained 3-vector. Returns (best x, best f,
/// converged flag).
fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(
    f: F,
    start: [f64; 3],
    initial_step: f64,
    max_iter: usize,
    f_tol_abs: f64,
) -> ([f64; 3], f64, bool) {
    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let mut simplex: Vec<[f64; 3]> = vec![start];
    for k in 0..3 {
        let mut v = start;
        let step = if v[k].abs() > 1e-12 { 0.1 * v[k].abs() } else { initial_step };
        v[k] += step;
        simplex.push(v);
    }
    let mut fv: Vec<f64> = simplex.iter().map(|x| f(x)).collect();

    let mut converged = false;
    for _ in 0..max_iter {
        // order ascending by objective
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| fv[a].partial_cmp(&fv[b]).unwrap_or(std::cmp::Ordering::Equal));
        let simplex_sorted: Vec<[f64; 3]> = order.iter().map(|&i| simplex[i]).collect();
        let fv_sorted: Vec<f64> = order.iter().map(|&i| fv[i]).collect();
        simplex = simplex_sorted;
        fv = fv_sorted;

        let f_spread = fv[3] - fv[0];
        let x_spread = (0..3)
            .map(|k| (simplex[3][k] - simplex[0][k]).abs())
            .fold(0.0f64, f64::max);
        if f_spread <= f_tol_abs.max(1e-12 * fv[0].abs()) && x_spread <= 1e-9 * (1.0 + simplex[0][0].abs() + simplex[0][1].abs() + simplex[0][2].abs())
        {
            converged = true;
            break;
        }

        let mut centroid = [0.0f64; 3];
        for v in simplex.iter().take(3) {
            for k in 0..3 {
                centroid[k] += v[k] / 3.0;
            }
        }
        let worst = simplex[3];
        let reflect = std::array::from_fn(|k| centroid[k] + ALPHA * (centroid[k] - worst[k]));
        let f_reflect = f(&reflect);

        if f_reflect < fv[0] {
            let expand = std::array::from_fn(|k| centroid[k] + GAMMA * (reflect[k] - centroid[k]));
            let f_expand = f(&expand);
            if f_expand < f_reflect {
                simplex[3] = expand;
                fv[3] = f_expand;
            } else {
                simplex[3] = reflect;
                fv[3] = f_reflect;
            }
        } else if f_reflect < fv[2] {
            simplex[3] = reflect;
            fv[3] = f_reflect;
        } else {
            let contract_base = if f_reflect < fv[3] { reflect } else { worst };
            let f_base = if f_reflect < fv[3] { f_reflect } else { fv[3] };
            let contract =
                std::array::from_fn(|k| centroid[k] + RHO * (contract_base[k] - centroid[k]));
            let f_contract = f(&contract);
            if f_contract < f_base {
                simplex[3] = contract;
                fv[3] = f_contract;
            } else {
                for i in 1..4 {
                    for k in 0..3 {
                        simplex[i][k] = simplex[0][k] + SIGMA * (simplex[i][k] - simplex[0][k]);
                    }
                    fv[i] = f(&simplex[i]);
                }
            }
        }
    }

    let mut best = 0;
    for i in 1..4 {
        if fv[i] < fv[best] {
            best = i;
        }
    }
    (simplex[best], fv[best], converged)
}

/// Fit a spherical model to an empirical variogram by pair-count-weighted
/// least squares: coarse grid over (nugget, sill, range), then Nelder-Mead
/// refinement in a square-root parameterization that keeps
/// `0 <= nugget <= sill` and `range > 0` by construction.
pub fn fit_spherical(ev: &EmpiricalVariogram, init: Option<&SphericalFit>) -> Result<SphericalFit> {
    let n_bins = ev.bin_centers_m.len();
    if n_bins < 3 {
        return Err(Error::Config(format!(
            "fit_spherical: need at least 3 populated bins, got {n_bins}"
        )));
    }

    let max_sv = ev.semivariances.iter().copied().fold(0.0f64, f64::max);
    let min_center = ev.bin_centers_m[0];
    let max_center = *ev.bin_centers_m.last().unwrap();

    if max_sv <= 0.0 {
        // constant input values: gamma is zero in every bin
        return Ok(SphericalFit {
            nugget: 0.0,
            sill: 0.0,
            range_m: min_center,
            rss: 0.0,
            flags: vec![FitFlag::ZeroVariance, FitFlag::RangeUnidentifiable],
        });
    }

    // coarse grid
    let mut starts: Vec<([f64; 3], f64)> = Vec::new();
    let mut push_start = |nugget: f64, sill: f64, range: f64| {
        let rss = weighted_rss(ev, nugget, sill, range);
        starts.push(([nugget, sill, range], rss));
    };
    let range_candidates: Vec<f64> = (0..16)
        .map(|i| {
            let t = i as f64 / 15.0;
            // geometric sweep from half the first bin to 2x the last bin
            (min_center * 0.5) * ((4.0 * max_center / min_center).powf(t))
        })
        .collect();
    for i_n in 0..=8 {
        let nugget = max_sv * i_n as f64 / 8.0;
        for i_s in 0..=8 {
            let sill = max_sv * (0.25 + 1.25 * i_s as f64 / 8.0);
            if sill < nugget {
                continue;
            }
            for &range in &range_candidates {
                push_start(nugget, sill, range);
            }
        }
    }
    if let Some(f) = init {
        push_start(f.nugget, f.sill.max(f.nugget), f.range_m.max(1e-9));
    }
    starts.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));

    // objective in sqrt-parameterization: x = [sqrt(nugget), sqrt(partial sill), sqrt(range)]
    let objective = |x: &[f64; 3]| -> f64 {
        let nugget = x[0] * x[0];
        let psill = x[1] * x[1];
        let range = x[2] * x[2];
        if range < 1e-12 {
            return f64::INFINITY;
        }
        weighted_rss(ev, nugget, nugget + psill, range)
    };

    let scale: f64 = ev
        .semivariances
        .iter()
        .zip(&ev.pair_counts)
        .map(|(&g, &c)| c as f64 * g * g)
        .sum();
    let f_tol = 1e-15 * scale.max(f64::MIN_POSITIVE);

    let mut best: Option<([f64; 3], f64)> = None;
    let mut any_converged = false;
    for (params, _) in starts.iter().take(3) {
        let start = [
            params[0].max(0.0).sqrt(),
            (params[1] - params[0]).max(0.0).sqrt(),
            params[2].sqrt(),
        ];
        let (x1, _f1, c1) = nelder_mead(objective, start, 0.1 * max_sv.sqrt().max(1e-6), 2000, f_tol);
        // polish with a restart from the found point
        let (x2, f2, c2) = nelder_mead(objective, x1, 1e-4 * (1.0 + x1[2].abs()), 2000, f_tol);
        any_converged |= c1 || c2;
        if best.as_ref().is_none_or(|(_, fb)| f2 < *fb) {
            best = Some((x2, f2));
        }
    }
    let (x, rss) = best.expect("at least one start");
    let mut nugget = x[0] * x[0];
    let mut sill = nugget + x[1] * x[1];
    let mut range_m = x[2] * x[2];
    let mut flags = Vec::new();

    // pure-nugget limit: flat curve, range not identifiable
    if sill - nugget <= 1e-9 * sill.max(1e-300) {
        let w_sum: f64 = ev.pair_counts.iter().map(|&c| c as f64).sum();
        let level: f64 = ev
            .semivariances
            .iter()
            .zip(&ev.pair_counts)
            .map(|(&g, &c)| c as f64 * g)
            .sum::<f64>()
            / w_sum;
        nugget = level;
        sill = level;
        range_m = range_candidates[0];
        flags.push(FitFlag::RangeUnidentifiable);
        let rss = weighted_rss(ev, nugget, sill, range_m);
        return Ok(SphericalFit { nugget, sill, range_m, rss, flags });
    }

    let fit = SphericalFit { nugget, sill, range_m, rss, flags };
    if !any_converged {
        return Err(Error::FitNonConvergence { best: Box::new(fit), rss });
    }
    Ok(fit)
}

// ── Variograms of model predictions ───────────────────────────────────────

/// Plain parameter bundle used for per-model statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalParams {
    pub range_m: f64,
    pub nugget: f64,
    pub sill: f64,
    pub nsr: f64,
}

/// Mean and one-sigma of the fitted parameters over evaluation records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamStats {
    pub mean: SphericalParams,
    pub sigma: SphericalParams,
    pub n_records: usize,
}

/// Per-model variogram statistics over the evaluation records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVariogramSummary {
    pub model: String,
    /// `None` when every record was degenerate (e.g. constant predictions).
    pub stats: Option<ParamStats>,
    pub n_degenerate: usize,
}

/// Output of [`variogram_of_predictions`]: one summary per model plus the
/// ground-truth variogram of the measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionVariograms {
    pub per_model: Vec<ModelVariogramSummary>,
    pub ground_truth: SphericalFit,
    pub ground_truth_nsr: Option<f64>,
}

fn mean_sigma(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Fit a spherical variogram to every evaluation record's test-set
/// predictions and summarize parameters per model (mean plus one-sigma),
/// alongside the ground-truth variogram computed once from the measured
/// values of the full test set.
///
/// Records whose predictions are constant produce a degenerate pure-nugget
/// variogram with no defined NSR; they are counted in `n_degenerate` and
/// excluded from the statistics. The baseline model is degenerate by
/// construction and reported that way.
pub fn variogram_of_predictions(
    report: &ScenarioReport,
    cfg: &VariogramConfig,
) -> Result<PredictionVariograms> {
    let gt_points = report.ground_truth_points();
    let gt_values = report.ground_truth_values();
    let max_lag = cfg.max_lag_m.unwrap_or_else(|| default_max_lag(&gt_points));
    let gt_ev = empirical_variogram_opts(
        &gt_points,
        &gt_values,
        cfg.bin_width_m,
        max_lag,
        cfg.use_spatial_index,
    )?;
    let ground_truth = fit_spherical(&gt_ev, None)?;
    let ground_truth_nsr = ground_truth.nsr().ok();

    let mut per_model = Vec::new();
    for model in report.all_model_reports() {
        let mut fits: Vec<(SphericalFit, f64)> = Vec::new();
        let mut n_degenerate = 0usize;
        for record in &model.records {
            let points: Vec<(f64, f64)> =
                record.predictions.iter().map(|p| (p.x_m, p.y_m)).collect();
            let values: Vec<f64> = record.predictions.iter().map(|p| p.y_pred).collect();
            let ev = empirical_variogram_opts(
                &points,
                &values,
                cfg.bin_width_m,
                max_lag,
                cfg.use_spatial_index,
            )
            .map_err(|e| e.in_cv_cell(record.repeat_index, record.fold_index))?;
            let fit = fit_spherical(&ev, None)
                .map_err(|e| e.in_cv_cell(record.repeat_index, record.fold_index))?;
            match fit.nsr() {
                Ok(nsr) => fits.push((fit, nsr)),
                Err(_) => n_degenerate += 1,
            }
        }
        let stats = if fits.is_empty() {
            None
        } else {
            let ranges: Vec<f64> = fits.iter().map(|(f, _)| f.range_m).collect();
            let nuggets: Vec<f64> = fits.iter().map(|(f, _)| f.nugget).collect();
            let sills: Vec<f64> = fits.iter().map(|(f, _)| f.sill).collect();
            let nsrs: Vec<f64> = fits.iter().map(|(_, nsr)| *nsr).collect();
            let (range_m, range_s) = mean_sigma(&ranges);
            let (nugget_m, nugget_s) = mean_sigma(&nuggets);
            let (sill_m, sill_s) = mean_sigma(&sills);
            let (nsr_m, nsr_s) = mean_sigma(&nsrs);
            Some(ParamStats {
                mean: SphericalParams { range_m, nugget: nugget_m, sill: sill_m, nsr: nsr_m },
                sigma: SphericalParams {
                    range_m: range_s,
                    nugget: nugget_s,
                    sill: sill_s,
                    nsr: nsr_s,
                },
                n_records: fits.len(),
            })
        };
        per_model.push(ModelVariogramSummary {
            model: model.model.clone(),
            stats,
            n_degenerate,
        });
    }

    Ok(PredictionVariograms { per_model, ground_truth, ground_truth_nsr })
}
