//! Synthetic surveys with known ground truth.
//!
//! Serpentine tracks mimic the parallel-lane survey pattern; target values
//! are drawn from a Gaussian random field whose spatial covariance follows
//! a spherical variogram (dense symmetric factorization, exact at desk
//! scale); radar features are tied to the target through a configurable
//! linear-plus-quadratic linkage with additive noise. Every quantity is a
//! deterministic function of its seeds, so downstream claims — estimator
//! correctness, parameter recovery, metric behaviour — are testable
//! without field data.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;
use crate::survey_data::{local_to_geo, GeoPoint, ProvenanceRecord, Sample, SurveyDataset};
use crate::variogram::spherical_gamma;

/// Largest point count for the dense covariance factorization.
pub const DEFAULT_DENSE_CAP: usize = 5000;

/// Nominal tractor speed used to assign timestamps to track points.
const TRACK_SPEED_MPS: f64 = 3.0;

/// WGS84 anchor used when emitting simulated surveys in the merged CSV
/// format (local coordinates are authoritative).
pub const SYNTH_ORIGIN: GeoPoint = GeoPoint { lat_deg: 48.0, lon_deg: 16.0 };

/// Spherical-covariance field parameters plus the draw seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub nugget: f64,
    pub sill: f64,
    pub range_m: f64,
    pub mean: f64,
    pub seed: u64,
}

impl FieldSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.nugget && self.nugget <= self.sill) {
            return Err(Error::Config(format!(
                "field spec: need 0 <= nugget <= sill, got ({}, {})",
                self.nugget, self.sill
            )));
        }
        if !(self.range_m > 0.0) {
            return Err(Error::Config(format!(
                "field spec: range must be positive, got {}",
                self.range_m
            )));
        }
        Ok(())
    }
}

/// How radar features are tied to the target.
///
/// Active step `s` carries `w_s * e + q_s * e^2` plus Gaussian noise,
/// where `e = ecar - reference` (reference defaults to the field mean);
/// inactive steps carry distractor noise only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkageSpec {
    pub n_steps: usize,
    pub active_steps: Vec<usize>,
    /// Linear weight per active step.
    pub weights: Vec<f64>,
    /// Quadratic weight per active step; empty for a purely linear linkage.
    #[serde(default)]
    pub quad_weights: Vec<f64>,
    /// Operating point of the linkage; `None` uses the field mean.
    #[serde(default)]
    pub reference: Option<f64>,
    pub noise_std: f64,
    pub distractor_std: f64,
    pub noise_seed: u64,
}

impl LinkageSpec {
    pub fn validate(&self) -> Result<()> {
        if self.active_steps.len() != self.weights.len() {
            return Err(Error::Config(format!(
                "linkage: {} active steps but {} weights",
                self.active_steps.len(),
                self.weights.len()
            )));
        }
        if !self.quad_weights.is_empty() && self.quad_weights.len() != self.active_steps.len() {
            return Err(Error::Config(
                "linkage: quad_weights must be empty or match active_steps".to_string(),
            ));
        }
        for &s in &self.active_steps {
            if s >= self.n_steps {
                return Err(Error::Config(format!(
                    "linkage: active step {s} outside [0, {})",
                    self.n_steps
                )));
            }
        }
        if !self.weights.iter().all(|w| w.is_finite()) {
            return Err(Error::Config("linkage: weights must be finite".to_string()));
        }
        if self.noise_std < 0.0 || self.distractor_std < 0.0 {
            return Err(Error::Config("linkage: noise levels must be non-negative".to_string()));
        }
        Ok(())
    }
}

/// One sampled position on the survey track.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub x_m: f64,
    pub y_m: f64,
    pub time_s: f64,
    pub speed_mps: f64,
}

// ── Track generation ──────────────────────────────────────────────────────

enum PathSegment {
    Line { x0: f64, y0: f64, dx: f64, dy: f64, len: f64 },
    /// Circular arc: centre, radius, start angle, signed sweep.
    Arc { cx: f64, cy: f64, r: f64, phi0: f64, sweep: f64 },
}

impl PathSegment {
    fn len(&self) -> f64 {
        match self {
            PathSegment::Line { len, .. } => *len,
            PathSegment::Arc { r, sweep, .. } => r * sweep.abs(),
        }
    }

    fn point_at(&self, s: f64) -> (f64, f64) {
        match self {
            PathSegment::Line { x0, y0, dx, dy, len } => {
                let t = s / len;
                (x0 + t * dx, y0 + t * dy)
            }
            PathSegment::Arc { cx, cy, r, phi0, sweep } => {
                let phi = phi0 + sweep.signum() * s / r;
                (cx + r * phi.cos(), cy + r * phi.sin())
            }
        }
    }
}

/// Generate a serpentine survey track: parallel lanes connected by turn
/// arcs (two quarter circles with a straight crosswise piece when the turn
/// radius is below half the lane spacing), sampled at a constant arc-length
/// spacing with constant speed.
pub fn generate_track(
    n_lanes: usize,
    lane_length_m: f64,
    lane_spacing_m: f64,
    sample_spacing_m: f64,
    turn_radius_m: f64,
) -> Vec<TrackPoint> {
    assert!(n_lanes >= 1, "need at least one lane");
    assert!(
        lane_length_m > 0.0 && lane_spacing_m > 0.0 && sample_spacing_m > 0.0 && turn_radius_m > 0.0,
        "track geometry must be positive"
    );

    let r = turn_radius_m.min(lane_spacing_m / 2.0);
    let s = lane_spacing_m;
    let mut segments: Vec<PathSegment> = Vec::new();
    for lane in 0..n_lanes {
        let y = lane as f64 * s;
        let rightward = lane % 2 == 0;
        let (x0, dx) = if rightward { (0.0, lane_length_m) } else { (lane_length_m, -lane_length_m) };
        segments.push(PathSegment::Line { x0, y0: y, dx, dy: 0.0, len: lane_length_m });
        if lane + 1 < n_lanes {
            // turn towards the next lane: quarter arc, optional crosswise
            // line, quarter arc; tangent-continuous with both lanes
            let x_end = x0 + dx;
            if rightward {
                segments.push(PathSegment::Arc {
                    cx: x_end,
                    cy: y + r,
                    r,
                    phi0: -std::f64::consts::FRAC_PI_2,
                    sweep: std::f64::consts::FRAC_PI_2,
                });
                if s > 2.0 * r {
                    segments.push(PathSegment::Line {
                        x0: x_end + r,
                        y0: y + r,
                        dx: 0.0,
                        dy: s - 2.0 * r,
                        len: s - 2.0 * r,
                    });
                }
                segments.push(PathSegment::Arc {
                    cx: x_end,
                    cy: y + s - r,
                    r,
                    phi0: 0.0,
                    sweep: std::f64::consts::FRAC_PI_2,
                });
            } else {
                segments.push(PathSegment::Arc {
                    cx: x_end,
                    cy: y + r,
                    r,
                    phi0: -std::f64::consts::FRAC_PI_2,
                    sweep: -std::f64::consts::FRAC_PI_2,
                });
                if s > 2.0 * r {
                    segments.push(PathSegment::Line {
                        x0: x_end - r,
                        y0: y + r,
                        dx: 0.0,
                        dy: s - 2.0 * r,
                        len: s - 2.0 * r,
                    });
                }
                segments.push(PathSegment::Arc {
                    cx: x_end,
                    cy: y + s - r,
                    r,
                    phi0: std::f64::consts::PI,
                    sweep: -std::f64::consts::FRAC_PI_2,
                });
            }
        }
    }

    let total: f64 = segments.iter().map(PathSegment::len).sum();
    let n_samples = (total / sample_spacing_m).floor() as usize + 1;
    let mut points = Vec::with_capacity(n_samples);
    let mut seg_idx = 0usize;
    let mut seg_start = 0.0f64;
    for i in 0..n_samples {
        let arc = i as f64 * sample_spacing_m;
        while seg_idx + 1 < segments.len() && arc > seg_start + segments[seg_idx].len() + 1e-12 {
            seg_start += segments[seg_idx].len();
            seg_idx += 1;
        }
        let local = (arc - seg_start).clamp(0.0, segments[seg_idx].len());
        let (x, y) = segments[seg_idx].point_at(local);
        points.push(TrackPoint {
            x_m: x,
            y_m: y,
            time_s: arc / TRACK_SPEED_MPS,
            speed_mps: TRACK_SPEED_MPS,
        });
    }
    points
}

/// Default survey geometry: ~3600 samples over ~6400 m^2, matching the
/// scale of a single-fairway field campaign.
pub fn default_survey_track() -> Vec<TrackPoint> {
    generate_track(40, 110.0, 1.5, 1.25, 0.75)
}

// ── Gaussian random fields ────────────────────────────────────────────────

/// Lower-triangular factor of the spherical covariance over a fixed point
/// set. Factor once, draw many times.
pub struct GaussianFieldFactor {
    lower: DMatrix<f64>,
    n: usize,
}

impl GaussianFieldFactor {
    /// Build the covariance `C(h) = sill - gamma(h)` (so `C(0) = sill`)
    /// over the points and factorize it, escalating a diagonal jitter up
    /// to `1e-8 * sill` if the matrix is numerically semidefinite.
    pub fn new(points: &[(f64, f64)], nugget: f64, sill: f64, range_m: f64) -> Result<Self> {
        let spec = FieldSpec { nugget, sill, range_m, mean: 0.0, seed: 0 };
        spec.validate()?;
        let n = points.len();
        if n == 0 {
            return Err(Error::Config("field factor: no points".to_string()));
        }
        if sill == 0.0 {
            // zero-covariance field: constant draws
            return Ok(Self { lower: DMatrix::zeros(n, n), n });
        }

        let mut cov = vec![0.0f64; n * n];
        cov.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let (xi, yi) = points[i];
            for (j, value) in row.iter_mut().enumerate() {
                if i == j {
                    *value = sill;
                } else {
                    let dx = xi - points[j].0;
                    let dy = yi - points[j].1;
                    let h = (dx * dx + dy * dy).sqrt();
                    *value = sill - spherical_gamma(h, nugget, sill, range_m);
                }
            }
        });
        // symmetric, so row-major data can feed the column-major constructor
        let base = DMatrix::from_vec(n, n, cov);

        for jitter in [0.0, 1e-12, 1e-10, 1e-8] {
            let mut attempt = base.clone();
            if jitter > 0.0 {
                for i in 0..n {
                    attempt[(i, i)] += jitter * sill;
                }
            }
            if let Some(chol) = attempt.cholesky() {
                return Ok(Self { lower: chol.unpack(), n });
            }
        }
        Err(Error::IllConditioned)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Draw one field realization: `mean + L z` with `z ~ N(0, I)` from
    /// the given seed.
    pub fn draw(&self, mean: f64, seed: u64) -> Vec<f64> {
        let mut rng = seeding::rng(seed, &[0xF1E1D]);
        let z: Vec<f64> = (0..self.n).map(|_| rng.sample(StandardNormal)).collect();
        let mut out = vec![mean; self.n];
        // lower-triangular multiply
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += self.lower[(i, j)] * z[j];
            }
            out[i] += acc;
        }
        out
    }
}

/// Draw a Gaussian field over the points with the given spec
/// (deterministic in `(points, spec.seed)`). Point counts above
/// [`DEFAULT_DENSE_CAP`] are refused; use [`simulate_gaussian_field_with_cap`]
/// to raise the cap deliberately.
pub fn simulate_gaussian_field(points: &[(f64, f64)], spec: &FieldSpec) -> Result<Vec<f64>> {
    simulate_gaussian_field_with_cap(points, spec, DEFAULT_DENSE_CAP)
}

pub fn simulate_gaussian_field_with_cap(
    points: &[(f64, f64)],
    spec: &FieldSpec,
    cap: usize,
) -> Result<Vec<f64>> {
    if points.len() > cap {
        return Err(Error::Config(format!(
            "simulate_gaussian_field: {} points exceed the dense factorization cap {cap}",
            points.len()
        )));
    }
    let factor = GaussianFieldFactor::new(points, spec.nugget, spec.sill, spec.range_m)?;
    Ok(factor.draw(spec.mean, spec.seed))
}

// ── Survey simulation ─────────────────────────────────────────────────────

/// Simulate a survey: draw the field over the track and derive radar
/// features through the linkage. Fully determined by
/// `(track, field_spec.seed, linkage.noise_seed)`.
pub fn simulate_survey(
    track: &[TrackPoint],
    field_spec: &FieldSpec,
    linkage: &LinkageSpec,
) -> Result<SurveyDataset> {
    field_spec.validate()?;
    linkage.validate()?;
    let points: Vec<(f64, f64)> = track.iter().map(|p| (p.x_m, p.y_m)).collect();
    let values = simulate_gaussian_field(&points, field_spec)?;
    simulate_survey_with_values(track, field_spec, linkage, &values)
}

/// As [`simulate_survey`] but with pre-drawn field values (lets callers
/// reuse one covariance factorization across many seeds).
pub fn simulate_survey_with_values(
    track: &[TrackPoint],
    field_spec: &FieldSpec,
    linkage: &LinkageSpec,
    values: &[f64],
) -> Result<SurveyDataset> {
    linkage.validate()?;
    if values.len() != track.len() {
        return Err(Error::DimensionMismatch { expected: track.len(), got: values.len() });
    }
    let reference = linkage.reference.unwrap_or(field_spec.mean);
    let d = linkage.n_steps;

    let mut step_weights = vec![None::<(f64, f64)>; d];
    for (idx, &s) in linkage.active_steps.iter().enumerate() {
        let q = linkage.quad_weights.get(idx).copied().unwrap_or(0.0);
        step_weights[s] = Some((linkage.weights[idx], q));
    }

    let mut rng = seeding::rng(linkage.noise_seed, &[0x11A15]);
    let mut samples = Vec::with_capacity(track.len());
    for (i, (point, &ecar)) in track.iter().zip(values).enumerate() {
        let e = ecar - reference;
        let mut features = Vec::with_capacity(d);
        for weights in &step_weights {
            let z: f64 = rng.sample(StandardNormal);
            let value = match weights {
                Some((w, q)) => w * e + q * e * e + linkage.noise_std * z,
                None => linkage.distractor_std * z,
            };
            features.push(value);
        }
        samples.push(Sample {
            id: i,
            time_s: point.time_s,
            x_m: point.x_m,
            y_m: point.y_m,
            speed_mps: point.speed_mps,
            ecar,
            features,
            geo: Some(local_to_geo(SYNTH_ORIGIN, point.x_m, point.y_m)),
        });
    }

    let mut ds = SurveyDataset::new(samples, "synthetic")?;
    ds.local_projected = true;
    ds.push_provenance(ProvenanceRecord::new(
        "simulate_survey",
        serde_json::json!({
            "field": field_spec,
            "linkage": {
                "n_steps": linkage.n_steps,
                "active_steps": linkage.active_steps,
                "noise_std": linkage.noise_std,
                "distractor_std": linkage.distractor_std,
                "noise_seed": linkage.noise_seed,
            },
        }),
    ));
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::{design_matrix, pearson_r};
    use crate::regress::{fit, LinearParams, ModelSpec};
    use crate::variogram::{empirical_variogram, fit_spherical};
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_lane_sample_count() {
        let track = generate_track(1, 10.0, 1.0, 1.0, 0.5);
        assert_eq!(track.len(), 11);
        for p in &track {
            assert_eq!(p.y_m, 0.0);
        }
        assert_abs_diff_eq!(track.last().unwrap().x_m, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn second_lane_is_offset_and_reversed() {
        let track = generate_track(2, 20.0, 2.0, 0.5, 1.0);
        let lane2: Vec<&TrackPoint> = track.iter().filter(|p| p.y_m == 2.0).collect();
        assert!(lane2.len() > 10);
        // reversed direction: x decreases along lane 2
        assert!(lane2.first().unwrap().x_m > lane2.last().unwrap().x_m);
        // times strictly increasing along the whole track
        for w in track.windows(2) {
            assert!(w[1].time_s > w[0].time_s);
        }
    }

    #[test]
    fn default_track_matches_survey_scale() {
        let track = default_survey_track();
        assert!((3000..=4200).contains(&track.len()), "got {}", track.len());
        let (mut min_x, mut max_x, mut min_y, mut max_y) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &track {
            min_x = min_x.min(p.x_m);
            max_x = max_x.max(p.x_m);
            min_y = min_y.min(p.y_m);
            max_y = max_y.max(p.y_m);
        }
        let area = (max_x - min_x) * (max_y - min_y);
        assert!((5000.0..=8500.0).contains(&area), "area {area}");
    }

    #[test]
    fn zero_sill_field_is_constant_mean() {
        let points: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 0.0)).collect();
        let spec = FieldSpec { nugget: 0.0, sill: 0.0, range_m: 5.0, mean: 3.25, seed: 1 };
        let values = simulate_gaussian_field(&points, &spec).unwrap();
        assert!(values.iter().all(|&v| v == 3.25));
    }

    #[test]
    fn field_draw_is_deterministic() {
        let points: Vec<(f64, f64)> = (0..30).map(|i| ((i % 6) as f64, (i / 6) as f64)).collect();
        let spec = FieldSpec { nugget: 0.5, sill: 2.0, range_m: 3.0, mean: 10.0, seed: 4 };
        let a = simulate_gaussian_field(&points, &spec).unwrap();
        let b = simulate_gaussian_field(&points, &spec).unwrap();
        assert_eq!(a, b);
        let other = simulate_gaussian_field(
            &points,
            &FieldSpec { seed: 5, ..spec.clone() },
        )
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn pure_nugget_field_variance_approaches_sill() {
        let n = 1500usize;
        let points: Vec<(f64, f64)> = (0..n).map(|i| ((i % 50) as f64, (i / 50) as f64)).collect();
        let sill = 4.0;
        let spec = FieldSpec { nugget: sill, sill, range_m: 1.0, mean: 0.0, seed: 2 };
        let values = simulate_gaussian_field(&points, &spec).unwrap();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // var(sample variance) ~ 2 sill^2 / n -> 3 standard errors
        let tol = 3.0 * (2.0 / n as f64).sqrt() * sill;
        assert_abs_diff_eq!(var, sill, epsilon = tol);
    }

    #[test]
    fn field_mean_within_statistical_tolerance() {
        let track = generate_track(10, 40.0, 1.5, 2.0, 0.75);
        let points: Vec<(f64, f64)> = track.iter().map(|p| (p.x_m, p.y_m)).collect();
        let spec = FieldSpec { nugget: 1.0, sill: 5.0, range_m: 8.0, mean: 20.0, seed: 3 };
        let factor = GaussianFieldFactor::new(&points, spec.nugget, spec.sill, spec.range_m).unwrap();
        // exact variance of the field mean: 1' C 1 / n^2, via C = L L'
        let n = points.len();
        let mut col_sums = vec![0.0f64; n];
        for j in 0..n {
            for i in j..n {
                col_sums[j] += factor.lower[(i, j)];
            }
        }
        let var_mean: f64 = col_sums.iter().map(|s| s * s).sum::<f64>() / (n as f64).powi(2);
        let values = factor.draw(spec.mean, spec.seed);
        let mean = values.iter().sum::<f64>() / n as f64;
        assert_abs_diff_eq!(mean, spec.mean, epsilon = 3.0 * var_mean.sqrt());
    }

    #[test]
    fn sample_covariance_matches_model() {
        // covariance oracle: 200 draws at 50 fixed points
        let points: Vec<(f64, f64)> = (0..50)
            .map(|i| (((i * 7) % 25) as f64 * 2.0, ((i * 13) % 20) as f64 * 2.5))
            .collect();
        let (nugget, sill, range_m) = (0.8, 3.0, 12.0);
        let factor = GaussianFieldFactor::new(&points, nugget, sill, range_m).unwrap();
        let m = 200usize;
        let draws: Vec<Vec<f64>> = (0..m as u64).map(|s| factor.draw(0.0, s)).collect();
        let n = points.len();
        let means: Vec<f64> = (0..n)
            .map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / m as f64)
            .collect();
        let mut failures = 0usize;
        for i in 0..n {
            for j in i..n {
                let sample_cov: f64 = draws
                    .iter()
                    .map(|d| (d[i] - means[i]) * (d[j] - means[j]))
                    .sum::<f64>()
                    / (m - 1) as f64;
                let dx = points[i].0 - points[j].0;
                let dy = points[i].1 - points[j].1;
                let h = (dx * dx + dy * dy).sqrt();
                let model = if i == j { sill } else { sill - spherical_gamma(h, nugget, sill, range_m) };
                let se = ((model * model + sill * sill) / m as f64).sqrt();
                if (sample_cov - model).abs() > 4.0 * se {
                    failures += 1;
                }
            }
        }
        assert_eq!(failures, 0, "{failures} covariance entries beyond 4 standard errors");
    }

    #[test]
    fn simulated_field_refits_its_variogram() {
        // moderate-size recovery check; the full-scale version is in the
        // acceptance suite
        let track = generate_track(20, 60.0, 1.5, 1.5, 0.75);
        let points: Vec<(f64, f64)> = track.iter().map(|p| (p.x_m, p.y_m)).collect();
        let spec = FieldSpec { nugget: 1.51, sill: 9.71, range_m: 15.82, mean: 20.0, seed: 8 };
        let values = simulate_gaussian_field(&points, &spec).unwrap();
        let max_lag = crate::variogram::default_max_lag(&points);
        let ev = empirical_variogram(&points, &values, 1.0, max_lag).unwrap();
        let fit = fit_spherical(&ev, None).unwrap();
        assert!((fit.nugget - spec.nugget).abs() / spec.nugget < 0.5, "nugget {}", fit.nugget);
        assert!((fit.sill - spec.sill).abs() / spec.sill < 0.5, "sill {}", fit.sill);
        assert!((fit.range_m - spec.range_m).abs() / spec.range_m < 0.5, "range {}", fit.range_m);
    }

    #[test]
    fn noiseless_linear_linkage_is_exactly_recoverable() {
        let track = generate_track(6, 30.0, 1.5, 1.5, 0.75);
        let field = FieldSpec { nugget: 0.5, sill: 3.0, range_m: 10.0, mean: 15.0, seed: 6 };
        let linkage = LinkageSpec {
            n_steps: 8,
            active_steps: vec![2],
            weights: vec![1.0],
            quad_weights: vec![],
            reference: None,
            noise_std: 0.0,
            distractor_std: 0.0,
            noise_seed: 1,
        };
        let ds = simulate_survey(&track, &field, &linkage).unwrap();
        let dm = design_matrix(&ds).unwrap();
        let model = fit(&ModelSpec::Linear(LinearParams { ridge_lambda: 0.0 }), &dm.x, &dm.y).unwrap();
        let pred = model.predict(&dm.x).unwrap();
        let r = pearson_r(&dm.y, &pred).unwrap();
        assert!(r > 1.0 - 1e-6, "r = {r}");
    }

    #[test]
    fn zero_weights_carry_no_signal() {
        // with all weights zero the held-out correlation must be
        // statistically indistinguishable from zero
        let track = generate_track(8, 40.0, 1.5, 1.0, 0.75);
        let field = FieldSpec { nugget: 0.5, sill: 3.0, range_m: 10.0, mean: 15.0, seed: 16 };
        let mut rs = Vec::new();
        let mut n_test_total = 0usize;
        for noise_seed in [21, 22, 23] {
            let linkage = LinkageSpec {
                n_steps: 6,
                active_steps: vec![0, 1, 2],
                weights: vec![0.0, 0.0, 0.0],
                quad_weights: vec![],
                reference: None,
                noise_std: 1.0,
                distractor_std: 1.0,
                noise_seed,
            };
            let ds = simulate_survey(&track, &field, &linkage).unwrap();
            let dm = design_matrix(&ds).unwrap();
            let n = ds.len();
            let half = n / 2;
            let train_rows: Vec<usize> = (0..half).collect();
            let test_rows: Vec<usize> = (half..n).collect();
            let norm = crate::evaluate::fit_normalizer_rows(&dm.x, &dm.y, &train_rows).unwrap();
            let x_train = {
                let rows: Vec<Vec<f64>> = train_rows
                    .iter()
                    .map(|&i| {
                        dm.x.row(i)
                            .iter()
                            .zip(&norm.feature_means)
                            .map(|(v, m)| v - m)
                            .collect()
                    })
                    .collect();
                crate::regress::FeatureMatrix::from_rows(&rows).unwrap()
            };
            let y_train: Vec<f64> =
                train_rows.iter().map(|&i| norm.forward_target(dm.y[i])).collect();
            let x_test = {
                let rows: Vec<Vec<f64>> = test_rows
                    .iter()
                    .map(|&i| {
                        dm.x.row(i)
                            .iter()
                            .zip(&norm.feature_means)
                            .map(|(v, m)| v - m)
                            .collect()
                    })
                    .collect();
                crate::regress::FeatureMatrix::from_rows(&rows).unwrap()
            };
            let model =
                fit(&ModelSpec::Linear(LinearParams { ridge_lambda: 1e-2 }), &x_train, &y_train)
                    .unwrap();
            let pred = model.predict(&x_test).unwrap();
            let y_test: Vec<f64> = test_rows.iter().map(|&i| dm.y[i]).collect();
            rs.push(pearson_r(&y_test, &pred).unwrap());
            n_test_total += test_rows.len();
        }
        let mean_r = rs.iter().sum::<f64>() / rs.len() as f64;
        let bound = 3.0 / (n_test_total as f64).sqrt();
        assert!(mean_r.abs() < bound, "mean r {mean_r} exceeds {bound}");
    }

    #[test]
    fn survey_is_deterministic_in_seeds() {
        let track = generate_track(3, 10.0, 1.5, 1.0, 0.75);
        let field = FieldSpec { nugget: 0.2, sill: 1.0, range_m: 4.0, mean: 5.0, seed: 11 };
        let linkage = LinkageSpec {
            n_steps: 4,
            active_steps: vec![0, 3],
            weights: vec![0.5, -0.25],
            quad_weights: vec![],
            reference: None,
            noise_std: 0.1,
            distractor_std: 0.2,
            noise_seed: 9,
        };
        let a = simulate_survey(&track, &field, &linkage).unwrap();
        let b = simulate_survey(&track, &field, &linkage).unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn dense_cap_is_enforced() {
        let points: Vec<(f64, f64)> = (0..12).map(|i| (i as f64, 0.0)).collect();
        let spec = FieldSpec { nugget: 0.0, sill: 1.0, range_m: 2.0, mean: 0.0, seed: 0 };
        assert!(matches!(
            simulate_gaussian_field_with_cap(&points, &spec, 10),
            Err(Error::Config(_))
        ));
    }
}
