//! Spatio-temporal filtering and normalization.
//!
//! The raw co-registered dataset carries instrument-response artifacts from
//! tractor turns, lane entries/exits and speed changes. Filters remove the
//! affected samples; they never mutate retained ones. Each filter records a
//! provenance entry `{step, params, removed_count}` and skips itself when an
//! identical entry is already present, which makes every filter idempotent.
//!
//! Normalization centres each frequency step on its training mean and
//! standardizes the target to zero mean / unit standard deviation on the
//! training set only (see the cross-validation harness for fold scoping).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survey_data::{ProvenanceRecord, Sample, SurveyDataset};

/// Runs of samples are split where the inter-sample time gap exceeds this
/// multiple of the median gap; removed samples leave exactly such gaps.
const SEGMENT_GAP_FACTOR: f64 = 1.5;

/// Filter parameters. Defaults hold for the 10 Hz / ~1.5 m lane geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Samples whose track-bearing change rate exceeds this are turn samples.
    pub heading_rate_max_deg_per_s: f64,
    /// Lower speed quantile of the retained band.
    pub speed_quantile_low: f64,
    /// Upper speed quantile of the retained band.
    pub speed_quantile_high: f64,
    /// Samples within this arc-length of a segment end are removed.
    pub path_end_trim_m: f64,
    /// Fraction trimmed from each tail of the target distribution.
    pub outlier_fraction: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            heading_rate_max_deg_per_s: 15.0,
            speed_quantile_low: 0.02,
            speed_quantile_high: 0.98,
            path_end_trim_m: 2.0,
            outlier_fraction: 0.005,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.speed_quantile_low)
            || !(0.0..=1.0).contains(&self.speed_quantile_high)
            || self.speed_quantile_low >= self.speed_quantile_high
        {
            return Err(Error::Config(format!(
                "speed quantiles must satisfy 0 <= low < high <= 1, got ({}, {})",
                self.speed_quantile_low, self.speed_quantile_high
            )));
        }
        if !(0.0..0.5).contains(&self.outlier_fraction) {
            return Err(Error::Config(format!(
                "outlier fraction must lie in [0, 0.5), got {}",
                self.outlier_fraction
            )));
        }
        if self.heading_rate_max_deg_per_s <= 0.0 {
            return Err(Error::Config(
                "heading rate threshold must be positive".to_string(),
            ));
        }
        if self.path_end_trim_m < 0.0 {
            return Err(Error::Config("path end trim must be non-negative".to_string()));
        }
        Ok(())
    }
}

/// Empirical quantile with linear interpolation between order statistics:
/// `Q(p) = x[k] + frac * (x[k+1] - x[k])` where `k = floor((n-1) p)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let k = h.floor() as usize;
    if k + 1 >= n {
        return sorted[n - 1];
    }
    sorted[k] + (h - k as f64) * (sorted[k + 1] - sorted[k])
}

fn sorted_copy(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite values"));
    v
}

/// Indices where a new contiguous run starts, based on the time-gap rule.
/// Returns run boundaries as (start, end) half-open index ranges.
fn contiguous_runs(samples: &[Sample]) -> Vec<(usize, usize)> {
    let n = samples.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![(0, 1)];
    }
    let gaps: Vec<f64> = (1..n)
        .map(|i| samples[i].time_s - samples[i - 1].time_s)
        .collect();
    let median_gap = {
        let s = sorted_copy(gaps.iter().copied());
        quantile(&s, 0.5)
    };
    let threshold = SEGMENT_GAP_FACTOR * median_gap;
    let mut runs = Vec::new();
    let mut start = 0usize;
    for (i, &g) in gaps.iter().enumerate() {
        if g > threshold {
            runs.push((start, i + 1));
            start = i + 1;
        }
    }
    runs.push((start, n));
    runs
}

/// Retain the samples whose indices satisfy `keep`, appending a provenance
/// record. No-op when the identical record already exists.
fn apply_filter(
    dataset: &SurveyDataset,
    step: &str,
    params: serde_json::Value,
    keep: &[bool],
) -> SurveyDataset {
    let samples: Vec<Sample> = dataset
        .samples()
        .iter()
        .zip(keep)
        .filter(|(_, &k)| k)
        .map(|(s, _)| s.clone())
        .collect();
    let removed = dataset.len() - samples.len();
    let mut out = dataset.derive(samples);
    out.push_provenance(ProvenanceRecord::with_removed(step, params, removed));
    out
}

fn wrap_angle_deg(a: f64) -> f64 {
    let mut a = a % 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a < -180.0 {
        a += 360.0;
    }
    a
}

/// Remove samples taken during turns: those whose track-bearing change rate
/// exceeds `heading_rate_max_deg_per_s`. Bearings are finite differences of
/// the local track within a contiguous run; run boundary samples have no
/// two-sided bearing and are kept (the path-end filter handles them).
pub fn filter_turns(dataset: &SurveyDataset, cfg: &FilterConfig) -> Result<SurveyDataset> {
    cfg.validate()?;
    require_local(dataset, "filter_turns")?;
    let params =
        serde_json::json!({ "heading_rate_max_deg_per_s": cfg.heading_rate_max_deg_per_s });
    if dataset.has_provenance("filter_turns", &params) {
        return Ok(dataset.clone());
    }
    let s = dataset.samples();
    let mut keep = vec![true; s.len()];
    for (start, end) in contiguous_runs(s) {
        if end - start < 3 {
            continue;
        }
        // bearing of the segment leaving sample i, degrees
        let bearing = |i: usize| -> f64 {
            (s[i + 1].y_m - s[i].y_m)
                .atan2(s[i + 1].x_m - s[i].x_m)
                .to_degrees()
        };
        for i in start + 1..end - 1 {
            let d_bearing = wrap_angle_deg(bearing(i) - bearing(i - 1)).abs();
            let dt = (s[i + 1].time_s - s[i - 1].time_s) / 2.0;
            if d_bearing / dt > cfg.heading_rate_max_deg_per_s {
                keep[i] = false;
            }
        }
    }
    Ok(apply_filter(dataset, "filter_turns", params, &keep))
}

/// Remove samples within `path_end_trim_m` (arc length) of either end of
/// each contiguous run.
pub fn filter_path_ends(dataset: &SurveyDataset, cfg: &FilterConfig) -> Result<SurveyDataset> {
    cfg.validate()?;
    require_local(dataset, "filter_path_ends")?;
    let params = serde_json::json!({ "path_end_trim_m": cfg.path_end_trim_m });
    if dataset.has_provenance("filter_path_ends", &params) {
        return Ok(dataset.clone());
    }
    let s = dataset.samples();
    let mut keep = vec![true; s.len()];
    if cfg.path_end_trim_m > 0.0 {
        for (start, end) in contiguous_runs(s) {
            let mut arc = vec![0.0f64; end - start];
            for i in start + 1..end {
                let dx = s[i].x_m - s[i - 1].x_m;
                let dy = s[i].y_m - s[i - 1].y_m;
                arc[i - start] = arc[i - start - 1] + (dx * dx + dy * dy).sqrt();
            }
            let total = *arc.last().unwrap();
            for i in start..end {
                let from_start = arc[i - start];
                let from_end = total - arc[i - start];
                if from_start < cfg.path_end_trim_m || from_end < cfg.path_end_trim_m {
                    keep[i] = false;
                }
            }
        }
    }
    Ok(apply_filter(dataset, "filter_path_ends", params, &keep))
}

/// Remove samples whose speed lies outside the configured empirical
/// quantile band (inclusive bounds).
pub fn filter_velocity(dataset: &SurveyDataset, cfg: &FilterConfig) -> Result<SurveyDataset> {
    cfg.validate()?;
    let params = serde_json::json!({
        "speed_quantile_low": cfg.speed_quantile_low,
        "speed_quantile_high": cfg.speed_quantile_high,
    });
    if dataset.has_provenance("filter_velocity", &params) {
        return Ok(dataset.clone());
    }
    if dataset.is_empty() {
        return Ok(apply_filter(dataset, "filter_velocity", params, &[]));
    }
    let sorted = sorted_copy(dataset.samples().iter().map(|s| s.speed_mps));
    let lo = quantile(&sorted, cfg.speed_quantile_low);
    let hi = quantile(&sorted, cfg.speed_quantile_high);
    let keep: Vec<bool> = dataset
        .samples()
        .iter()
        .map(|s| s.speed_mps >= lo && s.speed_mps <= hi)
        .collect();
    Ok(apply_filter(dataset, "filter_velocity", params, &keep))
}

/// Remove samples whose target lies below the `fraction` quantile or above
/// the `1 - fraction` quantile of the target distribution.
pub fn trim_target_outliers(dataset: &SurveyDataset, fraction: f64) -> Result<SurveyDataset> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::Config(format!(
            "outlier fraction must lie in [0, 0.5), got {fraction}"
        )));
    }
    let params = serde_json::json!({ "fraction": fraction });
    if dataset.has_provenance("trim_target_outliers", &params) {
        return Ok(dataset.clone());
    }
    if dataset.is_empty() {
        return Ok(apply_filter(dataset, "trim_target_outliers", params, &[]));
    }
    let sorted = sorted_copy(dataset.samples().iter().map(|s| s.ecar));
    let lo = quantile(&sorted, fraction);
    let hi = quantile(&sorted, 1.0 - fraction);
    let keep: Vec<bool> = dataset
        .samples()
        .iter()
        .map(|s| s.ecar >= lo && s.ecar <= hi)
        .collect();
    Ok(apply_filter(dataset, "trim_target_outliers", params, &keep))
}

/// Apply the full filter chain in the fixed order
/// turns -> path ends -> velocity -> target outlier trim.
pub fn apply_filters(dataset: &SurveyDataset, cfg: &FilterConfig) -> Result<SurveyDataset> {
    let ds = filter_turns(dataset, cfg)?;
    let ds = filter_path_ends(&ds, cfg)?;
    let ds = filter_velocity(&ds, cfg)?;
    trim_target_outliers(&ds, cfg.outlier_fraction)
}

fn require_local(dataset: &SurveyDataset, op: &str) -> Result<()> {
    if !dataset.local_projected {
        return Err(Error::Config(format!(
            "{op}: local coordinates not set (run project_to_local first)"
        )));
    }
    Ok(())
}

// ── Normalization ─────────────────────────────────────────────────────────

/// Per-step feature means and target moments fitted on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub feature_means: Vec<f64>,
    pub target_mean: f64,
    /// Sample standard deviation (1/(n-1) denominator); always positive.
    pub target_std: f64,
}

/// Fit feature means and target moments on the training set.
pub fn fit_normalizer(train: &SurveyDataset) -> Result<Normalizer> {
    if train.is_empty() {
        return Err(Error::Config("fit_normalizer: empty training set".to_string()));
    }
    let n = train.len();
    if n < 2 {
        return Err(Error::DegenerateTarget);
    }
    let d = train.n_steps();
    let mut feature_means = vec![0.0f64; d];
    let mut target_mean = 0.0f64;
    for s in train.samples() {
        for (m, v) in feature_means.iter_mut().zip(&s.features) {
            *m += v;
        }
        target_mean += s.ecar;
    }
    let n_f = n as f64;
    for m in &mut feature_means {
        *m /= n_f;
    }
    target_mean /= n_f;
    let ss: f64 = train
        .samples()
        .iter()
        .map(|s| (s.ecar - target_mean).powi(2))
        .sum();
    let var = ss / (n_f - 1.0);
    if var <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    Ok(Normalizer {
        feature_means,
        target_mean,
        target_std: var.sqrt(),
    })
}

impl Normalizer {
    /// Centre features and standardize the target of every sample.
    pub fn transform(&self, dataset: &SurveyDataset) -> Result<SurveyDataset> {
        if dataset.n_steps() != 0 && dataset.n_steps() != self.feature_means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_means.len(),
                got: dataset.n_steps(),
            });
        }
        let samples: Vec<Sample> = dataset
            .samples()
            .iter()
            .map(|s| {
                let mut out = s.clone();
                for (v, m) in out.features.iter_mut().zip(&self.feature_means) {
                    *v -= m;
                }
                out.ecar = (out.ecar - self.target_mean) / self.target_std;
                out
            })
            .collect();
        let mut out = dataset.derive(samples);
        out.push_provenance(ProvenanceRecord::new(
            "normalize",
            serde_json::json!({
                "target_mean": self.target_mean,
                "target_std": self.target_std,
            }),
        ));
        Ok(out)
    }

    /// Transform a feature row in place (for prediction-time inputs).
    pub fn transform_features(&self, features: &mut [f64]) -> Result<()> {
        if features.len() != self.feature_means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_means.len(),
                got: features.len(),
            });
        }
        for (v, m) in features.iter_mut().zip(&self.feature_means) {
            *v -= m;
        }
        Ok(())
    }

    /// Map a standardized target value back to original units.
    pub fn inverse_target(&self, value: f64) -> f64 {
        value * self.target_std + self.target_mean
    }

    /// Map an original-units target value into standardized units.
    pub fn forward_target(&self, value: f64) -> f64 {
        (value - self.target_mean) / self.target_std
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey_data::{GeoPoint, Sample};
    use approx::assert_abs_diff_eq;

    fn track_dataset(points: &[(f64, f64, f64, f64)]) -> SurveyDataset {
        // (time, x, y, speed)
        let samples: Vec<Sample> = points
            .iter()
            .enumerate()
            .map(|(i, &(t, x, y, v))| Sample {
                id: i,
                time_s: t,
                x_m: x,
                y_m: y,
                speed_mps: v,
                ecar: i as f64,
                features: vec![0.0],
                geo: Some(GeoPoint { lat_deg: 48.0, lon_deg: 16.0 }),
            })
            .collect();
        let mut ds = SurveyDataset::new(samples, "test").unwrap();
        ds.local_projected = true;
        ds
    }

    fn straight_track(n: usize, spacing: f64) -> SurveyDataset {
        let pts: Vec<(f64, f64, f64, f64)> = (0..n)
            .map(|i| (i as f64, i as f64 * spacing, 0.0, spacing))
            .collect();
        track_dataset(&pts)
    }

    #[test]
    fn straight_track_keeps_everything() {
        let ds = straight_track(50, 1.0);
        let out = filter_turns(&ds, &FilterConfig::default()).unwrap();
        assert_eq!(out.len(), 50);
    }

    #[test]
    fn u_turn_samples_removed() {
        // straight in +x, then a 180-degree turn over 2 s (90 deg/s), then straight in -x
        let mut pts = Vec::new();
        let dt = 0.1;
        let speed = 1.0;
        let mut t = 0.0;
        for i in 0..30 {
            pts.push((t, i as f64 * speed * dt, 0.0, speed));
            t += dt;
        }
        let r = speed * 2.0 / std::f64::consts::PI; // radius for a 180-deg turn in 2 s
        let (cx, cy) = (pts.last().unwrap().1, r);
        let n_turn = 20; // 2 s of samples
        for i in 1..=n_turn {
            let phi = -std::f64::consts::FRAC_PI_2 + std::f64::consts::PI * i as f64 / n_turn as f64;
            pts.push((t, cx + r * phi.cos(), cy + r * phi.sin(), speed));
            t += dt;
        }
        let (ex, ey) = (pts.last().unwrap().1, pts.last().unwrap().2);
        for i in 1..30 {
            pts.push((t, ex - i as f64 * speed * dt, ey, speed));
            t += dt;
        }
        let ds = track_dataset(&pts);
        let out = filter_turns(&ds, &FilterConfig::default()).unwrap();
        // all interior turn samples flagged: heading rate 90 deg/s >> 15 deg/s
        assert!(out.len() <= ds.len() - (n_turn - 1));
        // lane interiors retained
        assert!(out.samples().iter().any(|s| s.y_m == 0.0 && s.x_m > 1.0));
    }

    #[test]
    fn filters_are_idempotent() {
        let ds = straight_track(100, 1.0);
        let cfg = FilterConfig::default();
        let once = apply_filters(&ds, &cfg).unwrap();
        let twice = apply_filters(&once, &cfg).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn path_end_trim_removes_band() {
        // 101 samples, 1 m apart: arc length 0..100
        let ds = straight_track(101, 1.0);
        let cfg = FilterConfig { path_end_trim_m: 2.0, ..FilterConfig::default() };
        let out = filter_path_ends(&ds, &cfg).unwrap();
        // samples at arc 0, 1 and 99, 100 removed
        assert_eq!(out.len(), 97);
        assert_eq!(out.samples()[0].x_m, 2.0);
        assert_eq!(out.samples().last().unwrap().x_m, 98.0);
    }

    #[test]
    fn short_segment_removed_entirely() {
        let ds = straight_track(4, 1.0); // 3 m long < 2 * 2 m
        let cfg = FilterConfig { path_end_trim_m: 2.0, ..FilterConfig::default() };
        let out = filter_path_ends(&ds, &cfg).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn zero_trim_is_identity() {
        let ds = straight_track(10, 1.0);
        let cfg = FilterConfig { path_end_trim_m: 0.0, ..FilterConfig::default() };
        let out = filter_path_ends(&ds, &cfg).unwrap();
        assert_eq!(out.samples(), ds.samples());
    }

    #[test]
    fn equal_speeds_keep_everything() {
        let ds = straight_track(20, 1.0);
        let out = filter_velocity(&ds, &FilterConfig::default()).unwrap();
        assert_eq!(out.len(), 20);
    }

    #[test]
    fn full_quantile_band_is_identity() {
        let pts: Vec<(f64, f64, f64, f64)> = (0..20)
            .map(|i| (i as f64, i as f64, 0.0, (i % 7) as f64))
            .collect();
        let ds = track_dataset(&pts);
        let cfg = FilterConfig {
            speed_quantile_low: 0.0,
            speed_quantile_high: 1.0,
            ..FilterConfig::default()
        };
        let out = filter_velocity(&ds, &cfg).unwrap();
        assert_eq!(out.len(), 20);
    }

    #[test]
    fn velocity_quantiles_trim_extremes() {
        // speeds 1..=100; Q(0.02) = 2.98, Q(0.98) = 98.02 under the
        // linear-interpolation quantile rule, so speeds {1,2,99,100} go.
        let pts: Vec<(f64, f64, f64, f64)> = (0..100)
            .map(|i| (i as f64, i as f64, 0.0, (i + 1) as f64))
            .collect();
        let ds = track_dataset(&pts);
        let out = filter_velocity(&ds, &FilterConfig::default()).unwrap();
        assert_eq!(out.len(), 96);
        let speeds: Vec<f64> = out.samples().iter().map(|s| s.speed_mps).collect();
        assert_eq!(*speeds.first().unwrap(), 3.0);
        assert_eq!(*speeds.last().unwrap(), 98.0);
    }

    fn ecar_dataset(values: &[f64]) -> SurveyDataset {
        let samples: Vec<Sample> = values
            .iter()
            .enumerate()
            .map(|(i, &e)| Sample {
                id: i,
                time_s: i as f64,
                x_m: i as f64,
                y_m: 0.0,
                speed_mps: 1.0,
                ecar: e,
                features: vec![i as f64, 2.0 * i as f64],
                geo: None,
            })
            .collect();
        let mut ds = SurveyDataset::new(samples, "test").unwrap();
        ds.local_projected = true;
        ds
    }

    #[test]
    fn zero_fraction_trim_is_identity() {
        let ds = ecar_dataset(&[1.0, 5.0, 3.0]);
        let out = trim_target_outliers(&ds, 0.0).unwrap();
        assert_eq!(out.samples(), ds.samples());
    }

    #[test]
    fn outlier_trim_keeps_990_of_1000() {
        let values: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let ds = ecar_dataset(&values);
        let out = trim_target_outliers(&ds, 0.005).unwrap();
        assert_eq!(out.len(), 990);
    }

    #[test]
    fn filters_do_not_mutate_retained_samples() {
        let values: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).sin() * 10.0).collect();
        let ds = ecar_dataset(&values);
        let out = trim_target_outliers(&ds, 0.05).unwrap();
        for s in out.samples() {
            assert_eq!(s, &ds.samples()[s.id]);
        }
    }

    #[test]
    fn normalizer_rejects_constant_target() {
        let ds = ecar_dataset(&[4.0, 4.0, 4.0]);
        assert!(matches!(fit_normalizer(&ds), Err(Error::DegenerateTarget)));
    }

    #[test]
    fn normalizer_moments_match_hand_computation() {
        let ds = ecar_dataset(&[1.0, 3.0]);
        let norm = fit_normalizer(&ds).unwrap();
        assert_abs_diff_eq!(norm.target_mean, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(norm.target_std, 2f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn zero_features_give_zero_means() {
        let samples: Vec<Sample> = (0..3)
            .map(|i| Sample {
                id: i,
                time_s: i as f64,
                x_m: 0.0,
                y_m: 0.0,
                speed_mps: 0.0,
                ecar: i as f64,
                features: vec![0.0, 0.0],
                geo: None,
            })
            .collect();
        let ds = SurveyDataset::new(samples, "test").unwrap();
        let norm = fit_normalizer(&ds).unwrap();
        assert_eq!(norm.feature_means, vec![0.0, 0.0]);
    }

    #[test]
    fn transform_standardizes_training_set() {
        let values: Vec<f64> = (0..50).map(|i| 3.0 + (i as f64 * 1.3).cos() * 4.0).collect();
        let ds = ecar_dataset(&values);
        let norm = fit_normalizer(&ds).unwrap();
        let out = norm.transform(&ds).unwrap();
        let n = out.len() as f64;
        let mean: f64 = out.samples().iter().map(|s| s.ecar).sum::<f64>() / n;
        let var: f64 =
            out.samples().iter().map(|s| (s.ecar - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(var.sqrt(), 1.0, epsilon = 1e-12);
        // per-step feature means ~ 0
        let d = out.n_steps();
        for j in 0..d {
            let m: f64 = out.samples().iter().map(|s| s.features[j]).sum::<f64>() / n;
            assert_abs_diff_eq!(m, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn inverse_target_round_trip() {
        let ds = ecar_dataset(&[1.0, 3.0, 7.0]);
        let norm = fit_normalizer(&ds).unwrap();
        assert_abs_diff_eq!(norm.inverse_target(0.0), norm.target_mean, epsilon = 1e-15);
        for v in [-3.5, 0.0, 1.25, 42.0] {
            assert_abs_diff_eq!(norm.inverse_target(norm.forward_target(v)), v, epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_dimension_mismatch() {
        let ds = ecar_dataset(&[1.0, 3.0]);
        let norm = Normalizer {
            feature_means: vec![0.0; 5],
            target_mean: 0.0,
            target_std: 1.0,
        };
        assert!(matches!(
            norm.transform(&ds),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn quantile_linear_interpolation() {
        let xs: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_abs_diff_eq!(quantile(&xs, 0.02), 2.98, epsilon = 1e-12);
        assert_abs_diff_eq!(quantile(&xs, 0.98), 98.02, epsilon = 1e-12);
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 100.0);
    }
}
