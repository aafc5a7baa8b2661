//! Raw sensor stream parsing, multi-rate co-registration, and local
//! coordinate projection.
//!
//! Three instruments record on independent clocks and rates: GPS fixes
//! (~1 Hz), raw apparent-conductivity readings from the EMI coil (~5 kHz)
//! and stepped-frequency radar sweeps (~10 Hz, 400 readings per sweep).
//! Co-registration resamples everything onto the radar timeline: GPS is
//! linearly interpolated, EMI is averaged over a window centred on each
//! sweep, and tractor speed is estimated from the interpolated track.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of frequency steps per radar sweep.
pub const DEFAULT_N_STEPS: usize = 400;

/// Default EMI averaging window, matching the 10 Hz radar sampling period.
pub const DEFAULT_EMI_WINDOW_S: f64 = 0.1;

/// Metres per degree of latitude (WGS84 mean); also scales longitude after
/// the cos(latitude) correction in the local tangent-plane projection.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

/// A WGS84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

/// One GPS fix on the receiver's clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix {
    pub time_s: f64,
    pub lat_deg: f64,
    pub lon_deg: f64,
}

/// One raw EMI apparent-conductivity reading (instrument units; the
/// conductive-frame baseline offset is deliberately not removed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmiReading {
    pub time_s: f64,
    pub ecar_raw: f64,
}

/// One radar sweep: a reading per frequency step.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarSweep {
    pub time_s: f64,
    pub features: Vec<f64>,
}

/// One co-registered, geo-located observation.
///
/// `id` is assigned at creation in stream order and preserved by all
/// filters, so predictions can be mapped back to their samples. It is not
/// part of the merged CSV format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: usize,
    pub time_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub speed_mps: f64,
    pub ecar: f64,
    pub features: Vec<f64>,
    /// WGS84 position, retained so the local frame can be (re)projected.
    pub geo: Option<GeoPoint>,
}

/// A structured record of one transform applied to a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub step: String,
    pub params: serde_json::Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub removed_count: Option<usize>,
}

impl ProvenanceRecord {
    pub fn new(step: &str, params: serde_json::Value) -> Self {
        Self {
            step: step.to_string(),
            params,
            removed_count: None,
        }
    }

    pub fn with_removed(step: &str, params: serde_json::Value, removed: usize) -> Self {
        Self {
            step: step.to_string(),
            params,
            removed_count: Some(removed),
        }
    }
}

/// Immutable ordered collection of samples plus provenance metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyDataset {
    samples: Vec<Sample>,
    pub fairway_id: String,
    pub provenance: Vec<ProvenanceRecord>,
    /// True once `x_m`/`y_m` hold metric tangent-plane coordinates
    /// (set by `project_to_local`, or natively for simulated surveys).
    pub local_projected: bool,
}

impl SurveyDataset {
    /// Build a dataset, enforcing the ordering invariants: sample times
    /// strictly increasing (non-decreasing with no duplicates) and a
    /// consistent feature dimension.
    pub fn new(samples: Vec<Sample>, fairway_id: &str) -> Result<Self> {
        if let Some(first) = samples.first() {
            let dim = first.features.len();
            for (i, s) in samples.iter().enumerate() {
                if s.features.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: s.features.len(),
                    });
                }
                if i > 0 && s.time_s <= samples[i - 1].time_s {
                    return Err(Error::Ordering {
                        stream: format!("fairway {fairway_id}"),
                        index: i,
                    });
                }
            }
        }
        Ok(Self {
            samples,
            fairway_id: fairway_id.to_string(),
            provenance: Vec::new(),
            local_projected: false,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of frequency steps per sample (0 for an empty dataset).
    pub fn n_steps(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    /// Derive a new dataset with the given samples, keeping fairway id,
    /// provenance and projection state. Used by filters and transforms;
    /// ordering invariants are preserved because samples stay in order.
    pub fn derive(&self, samples: Vec<Sample>) -> Self {
        Self {
            samples,
            fairway_id: self.fairway_id.clone(),
            provenance: self.provenance.clone(),
            local_projected: self.local_projected,
        }
    }

    pub fn push_provenance(&mut self, record: ProvenanceRecord) {
        self.provenance.push(record);
    }

    /// Whether a provenance record with this step name and exact params
    /// already exists (used by filters to stay idempotent).
    pub fn has_provenance(&self, step: &str, params: &serde_json::Value) -> bool {
        self.provenance
            .iter()
            .any(|r| r.step == step && &r.params == params)
    }

    pub fn ecar_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.ecar).collect()
    }

    pub fn positions(&self) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.x_m, s.y_m)).collect()
    }
}

// ── CSV schemas ───────────────────────────────────────────────────────────

fn feature_column_name(step: usize) -> String {
    format!("f{step:03}")
}

fn parse_cell(path: &str, row: usize, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        path: path.to_string(),
        row,
        column: column.to_string(),
        message: format!("`{cell}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            path: path.to_string(),
            row,
            column: column.to_string(),
            message: format!("`{cell}` is not finite"),
        });
    }
    Ok(v)
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

/// Parse a merged survey CSV with the default 400-step schema.
///
/// Header: `time_s,lat_deg,lon_deg,speed_mps,ecar,f000..f399`, where the
/// `speed_mps` column is optional. The fairway id is taken from the file
/// name stem. Local coordinates stay unset until `project_to_local`.
pub fn parse_merged_csv(path: &Path) -> Result<SurveyDataset> {
    parse_merged_csv_with(path, DEFAULT_N_STEPS)
}

/// Same as [`parse_merged_csv`] but with a configurable step count.
pub fn parse_merged_csv_with(path: &Path, n_steps: usize) -> Result<SurveyDataset> {
    let path_str = path.display().to_string();
    let mut reader = open_reader(path)?;

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema {
            path: path_str.clone(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let fixed = ["time_s", "lat_deg", "lon_deg"];
    for (i, name) in fixed.iter().enumerate() {
        if headers.get(i).map(String::as_str) != Some(*name) {
            return Err(Error::Schema {
                path: path_str,
                message: format!(
                    "expected column {i} to be `{name}`, found `{}`",
                    headers.get(i).map_or("<missing>", |h| h.as_str())
                ),
            });
        }
    }
    let has_speed = headers.get(3).map(String::as_str) == Some("speed_mps");
    let ecar_idx = if has_speed { 4 } else { 3 };
    if headers.get(ecar_idx).map(String::as_str) != Some("ecar") {
        return Err(Error::Schema {
            path: path_str,
            message: format!(
                "expected column {ecar_idx} to be `ecar`, found `{}`",
                headers.get(ecar_idx).map_or("<missing>", |h| h.as_str())
            ),
        });
    }
    let feature_start = ecar_idx + 1;
    let feature_headers = &headers[feature_start.min(headers.len())..];
    if feature_headers.len() != n_steps {
        return Err(Error::Schema {
            path: path_str,
            message: format!(
                "expected {n_steps} features, found {} (feature columns start at `{}`)",
                feature_headers.len(),
                feature_headers.first().map_or("<none>", |h| h.as_str())
            ),
        });
    }
    for (s, h) in feature_headers.iter().enumerate() {
        let expected = feature_column_name(s);
        if h != &expected {
            return Err(Error::Schema {
                path: path_str,
                message: format!("expected feature column `{expected}`, found `{h}`"),
            });
        }
    }

    let n_cols = headers.len();
    let mut samples = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1; // 1-based data row, matching user expectations
        let record = record.map_err(|e| Error::Parse {
            path: path_str.clone(),
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != n_cols {
            return Err(Error::Schema {
                path: path_str,
                message: format!(
                    "data row {row} has {} cells, header has {n_cols}",
                    record.len()
                ),
            });
        }
        let cell = |i: usize| -> Result<f64> { parse_cell(&path_str, row, &headers[i], &record[i]) };
        let time_s = cell(0)?;
        let lat_deg = cell(1)?;
        let lon_deg = cell(2)?;
        if lat_deg.abs() > 90.0 || lon_deg.abs() > 180.0 {
            return Err(Error::Parse {
                path: path_str,
                row,
                column: "lat_deg/lon_deg".to_string(),
                message: format!("position ({lat_deg}, {lon_deg}) outside WGS84 bounds"),
            });
        }
        let speed_mps = if has_speed { cell(3)? } else { 0.0 };
        if speed_mps < 0.0 {
            return Err(Error::Parse {
                path: path_str,
                row,
                column: "speed_mps".to_string(),
                message: format!("negative speed {speed_mps}"),
            });
        }
        let ecar = cell(ecar_idx)?;
        let mut features = Vec::with_capacity(n_steps);
        for s in 0..n_steps {
            features.push(cell(feature_start + s)?);
        }
        samples.push(Sample {
            id: row_idx,
            time_s,
            x_m: 0.0,
            y_m: 0.0,
            speed_mps,
            ecar,
            features,
            geo: Some(GeoPoint { lat_deg, lon_deg }),
        });
    }

    let fairway_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "survey".to_string());
    let mut ds = SurveyDataset::new(samples, &fairway_id)?;
    ds.push_provenance(ProvenanceRecord::new(
        "parse_merged_csv",
        serde_json::json!({ "path": path_str, "n_steps": n_steps, "has_speed_column": has_speed }),
    ));
    Ok(ds)
}

/// Write a dataset in the merged CSV format.
///
/// Floats use Rust's shortest round-trip formatting, so
/// `parse(emit(dataset))` reproduces every value bit-for-bit.
pub fn emit_merged_csv(dataset: &SurveyDataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let n_steps = dataset.n_steps();
    out.push_str("time_s,lat_deg,lon_deg,speed_mps,ecar");
    for s in 0..n_steps {
        let _ = write!(out, ",{}", feature_column_name(s));
    }
    out.push('\n');
    for sample in dataset.samples() {
        let geo = sample.geo.ok_or_else(|| {
            Error::Pipeline("cannot emit merged CSV: sample has no lat/lon".to_string())
        })?;
        let _ = write!(
            out,
            "{},{},{},{},{}",
            sample.time_s, geo.lat_deg, geo.lon_deg, sample.speed_mps, sample.ecar
        );
        for v in &sample.features {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// Parse the three raw sensor streams.
///
/// Schemas: gps `time_s,lat_deg,lon_deg`; emi `time_s,ecar`;
/// radar `time_s,f000..f399` (step count configurable via
/// [`parse_raw_streams_with`]). Each stream must have strictly
/// increasing timestamps.
pub fn parse_raw_streams(
    gps_path: &Path,
    emi_path: &Path,
    radar_path: &Path,
) -> Result<(Vec<GpsFix>, Vec<EmiReading>, Vec<RadarSweep>)> {
    parse_raw_streams_with(gps_path, emi_path, radar_path, DEFAULT_N_STEPS)
}

pub fn parse_raw_streams_with(
    gps_path: &Path,
    emi_path: &Path,
    radar_path: &Path,
    n_steps: usize,
) -> Result<(Vec<GpsFix>, Vec<EmiReading>, Vec<RadarSweep>)> {
    let gps = parse_gps_stream(gps_path)?;
    let emi = parse_emi_stream(emi_path)?;
    let radar = parse_radar_stream(radar_path, n_steps)?;
    Ok((gps, emi, radar))
}

fn check_header(path: &str, headers: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::Schema {
            path: path.to_string(),
            message: format!("expected header `{}`, found `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn ensure_strictly_increasing(stream: &str, times: &[f64]) -> Result<()> {
    for i in 1..times.len() {
        if times[i] <= times[i - 1] {
            return Err(Error::Ordering {
                stream: stream.to_string(),
                index: i,
            });
        }
    }
    Ok(())
}

fn parse_gps_stream(path: &Path) -> Result<Vec<GpsFix>> {
    let path_str = path.display().to_string();
    let mut reader = open_reader(path)?;
    check_header(&path_str, reader.headers().map_err(io_as_schema(&path_str))?, &[
        "time_s", "lat_deg", "lon_deg",
    ])?;
    let mut fixes = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path_str.clone(),
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let time_s = parse_cell(&path_str, row, "time_s", &record[0])?;
        let lat_deg = parse_cell(&path_str, row, "lat_deg", &record[1])?;
        let lon_deg = parse_cell(&path_str, row, "lon_deg", &record[2])?;
        if lat_deg.abs() > 90.0 || lon_deg.abs() > 180.0 {
            return Err(Error::Parse {
                path: path_str,
                row,
                column: "lat_deg/lon_deg".to_string(),
                message: format!("position ({lat_deg}, {lon_deg}) outside WGS84 bounds"),
            });
        }
        fixes.push(GpsFix { time_s, lat_deg, lon_deg });
    }
    let times: Vec<f64> = fixes.iter().map(|f| f.time_s).collect();
    ensure_strictly_increasing("gps", &times)?;
    Ok(fixes)
}

fn parse_emi_stream(path: &Path) -> Result<Vec<EmiReading>> {
    let path_str = path.display().to_string();
    let mut reader = open_reader(path)?;
    check_header(&path_str, reader.headers().map_err(io_as_schema(&path_str))?, &[
        "time_s", "ecar",
    ])?;
    let mut readings = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path_str.clone(),
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        readings.push(EmiReading {
            time_s: parse_cell(&path_str, row, "time_s", &record[0])?,
            ecar_raw: parse_cell(&path_str, row, "ecar", &record[1])?,
        });
    }
    let times: Vec<f64> = readings.iter().map(|r| r.time_s).collect();
    ensure_strictly_increasing("emi", &times)?;
    Ok(readings)
}

fn parse_radar_stream(path: &Path, n_steps: usize) -> Result<Vec<RadarSweep>> {
    let path_str = path.display().to_string();
    let mut reader = open_reader(path)?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(io_as_schema(&path_str))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if headers.first().map(String::as_str) != Some("time_s") {
        return Err(Error::Schema {
            path: path_str,
            message: "expected first column `time_s`".to_string(),
        });
    }
    if headers.len() - 1 != n_steps {
        return Err(Error::Schema {
            path: path_str,
            message: format!("expected {n_steps} features, found {}", headers.len() - 1),
        });
    }
    for (s, h) in headers[1..].iter().enumerate() {
        let expected = feature_column_name(s);
        if h != &expected {
            return Err(Error::Schema {
                path: path_str,
                message: format!("expected feature column `{expected}`, found `{h}`"),
            });
        }
    }
    let mut sweeps = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let row = row_idx + 1;
        let record = record.map_err(|e| Error::Parse {
            path: path_str.clone(),
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != n_steps + 1 {
            return Err(Error::Schema {
                path: path_str,
                message: format!(
                    "data row {row} has {} cells, expected {}",
                    record.len(),
                    n_steps + 1
                ),
            });
        }
        let time_s = parse_cell(&path_str, row, "time_s", &record[0])?;
        let mut features = Vec::with_capacity(n_steps);
        for s in 0..n_steps {
            features.push(parse_cell(&path_str, row, &headers[s + 1], &record[s + 1])?);
        }
        sweeps.push(RadarSweep { time_s, features });
    }
    let times: Vec<f64> = sweeps.iter().map(|s| s.time_s).collect();
    ensure_strictly_increasing("radar", &times)?;
    Ok(sweeps)
}

fn io_as_schema(path: &str) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Schema {
        path: path.to_string(),
        message: e.to_string(),
    }
}

// ── Co-registration ───────────────────────────────────────────────────────

/// Linear interpolation of the GPS track at time `t`.
///
/// Extrapolation beyond the first/last fix is allowed up to one adjacent
/// GPS interval; anything further is a coverage error.
fn interpolate_gps(gps: &[GpsFix], t: f64) -> Result<GeoPoint> {
    let first = gps.first().expect("non-empty gps");
    let last = gps.last().expect("non-empty gps");
    let lead = if gps.len() >= 2 { gps[1].time_s - gps[0].time_s } else { 0.0 };
    let trail = if gps.len() >= 2 {
        gps[gps.len() - 1].time_s - gps[gps.len() - 2].time_s
    } else {
        0.0
    };
    if t < first.time_s - lead || t > last.time_s + trail {
        return Err(Error::GpsCoverage {
            radar_time_s: t,
            gps_start_s: first.time_s,
            gps_end_s: last.time_s,
        });
    }
    if gps.len() == 1 {
        return Ok(GeoPoint { lat_deg: first.lat_deg, lon_deg: first.lon_deg });
    }
    // Segment index: last fix with time <= t, clamped to a valid segment so
    // the end segments also serve for the tolerated extrapolation.
    let seg = match gps.partition_point(|f| f.time_s <= t) {
        0 => 0,
        p => (p - 1).min(gps.len() - 2),
    };
    let a = &gps[seg];
    let b = &gps[seg + 1];
    let w = (t - a.time_s) / (b.time_s - a.time_s);
    Ok(GeoPoint {
        lat_deg: a.lat_deg + w * (b.lat_deg - a.lat_deg),
        lon_deg: a.lon_deg + w * (b.lon_deg - a.lon_deg),
    })
}

/// Mean of the EMI readings with time in `[t - w/2, t + w/2]` (inclusive).
fn emi_window_mean(emi: &[EmiReading], t: f64, window_s: f64) -> Result<f64> {
    let lo = t - window_s / 2.0;
    let hi = t + window_s / 2.0;
    let start = emi.partition_point(|r| r.time_s < lo);
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in &emi[start..] {
        if r.time_s > hi {
            break;
        }
        sum += r.ecar_raw;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmiGap { sweep_time_s: t });
    }
    Ok(sum / count as f64)
}

/// Co-register the three streams onto the radar timeline.
///
/// Produces one sample per radar sweep: position is the linear GPS
/// interpolation at the sweep time, the target is the windowed EMI mean,
/// local coordinates come from `project_to_local` with the default origin
/// and speed from `estimate_velocity`.
pub fn coregister(
    gps: &[GpsFix],
    emi: &[EmiReading],
    radar: &[RadarSweep],
    emi_window_s: f64,
) -> Result<SurveyDataset> {
    if radar.is_empty() {
        return Err(Error::Config("coregister: radar stream is empty".to_string()));
    }
    if gps.is_empty() {
        return Err(Error::Config("coregister: gps stream is empty".to_string()));
    }
    if !(emi_window_s > 0.0) {
        return Err(Error::Config(format!(
            "coregister: emi window must be positive, got {emi_window_s}"
        )));
    }

    let mut samples = Vec::with_capacity(radar.len());
    for (i, sweep) in radar.iter().enumerate() {
        let geo = interpolate_gps(gps, sweep.time_s)?;
        let ecar = emi_window_mean(emi, sweep.time_s, emi_window_s)?;
        samples.push(Sample {
            id: i,
            time_s: sweep.time_s,
            x_m: 0.0,
            y_m: 0.0,
            speed_mps: 0.0,
            ecar,
            features: sweep.features.clone(),
            geo: Some(geo),
        });
    }

    let mut ds = SurveyDataset::new(samples, "survey")?;
    ds.push_provenance(ProvenanceRecord::new(
        "coregister",
        serde_json::json!({
            "emi_window_s": emi_window_s,
            "gps_fixes": gps.len(),
            "emi_readings": emi.len(),
            "radar_sweeps": radar.len(),
        }),
    ));
    let ds = project_to_local(&ds, None)?;
    estimate_velocity(&ds)
}

// ── Local projection and velocity ─────────────────────────────────────────

/// Project WGS84 positions onto a local equirectangular tangent plane.
///
/// `x_m = (lon - lon0) * cos(lat0) * 111320`, `y_m = (lat - lat0) * 111320`.
/// The origin defaults to the first sample. Over survey-sized extents the
/// distance distortion of this plane is far below the GPS accuracy.
pub fn project_to_local(dataset: &SurveyDataset, origin: Option<GeoPoint>) -> Result<SurveyDataset> {
    let origin = match origin.or_else(|| dataset.samples().first().and_then(|s| s.geo)) {
        Some(o) => o,
        None => {
            if dataset.is_empty() {
                let mut out = dataset.clone();
                out.local_projected = true;
                return Ok(out);
            }
            return Err(Error::Pipeline(
                "project_to_local: samples carry no lat/lon".to_string(),
            ));
        }
    };
    let cos_lat0 = (origin.lat_deg.to_radians()).cos();
    let mut samples = Vec::with_capacity(dataset.len());
    for s in dataset.samples() {
        let geo = s.geo.ok_or_else(|| {
            Error::Pipeline("project_to_local: samples carry no lat/lon".to_string())
        })?;
        let mut out = s.clone();
        out.x_m = (geo.lon_deg - origin.lon_deg) * cos_lat0 * METERS_PER_DEGREE;
        out.y_m = (geo.lat_deg - origin.lat_deg) * METERS_PER_DEGREE;
        samples.push(out);
    }
    let mut out = dataset.derive(samples);
    out.local_projected = true;
    out.push_provenance(ProvenanceRecord::new(
        "project_to_local",
        serde_json::json!({ "origin_lat_deg": origin.lat_deg, "origin_lon_deg": origin.lon_deg }),
    ));
    Ok(out)
}

/// Inverse of [`project_to_local`] for a single point; used when emitting
/// simulated surveys in the merged CSV format.
pub fn local_to_geo(origin: GeoPoint, x_m: f64, y_m: f64) -> GeoPoint {
    let cos_lat0 = (origin.lat_deg.to_radians()).cos();
    GeoPoint {
        lat_deg: origin.lat_deg + y_m / METERS_PER_DEGREE,
        lon_deg: origin.lon_deg + x_m / (METERS_PER_DEGREE * cos_lat0),
    }
}

/// Estimate tractor speed from the local track by finite differences:
/// central differences of position over time in the interior, one-sided at
/// the ends. Overwrites any previously stored speed.
pub fn estimate_velocity(dataset: &SurveyDataset) -> Result<SurveyDataset> {
    if !dataset.local_projected {
        return Err(Error::Config(
            "estimate_velocity: local coordinates not set (run project_to_local first)".to_string(),
        ));
    }
    let n = dataset.len();
    if n == 0 {
        return Ok(dataset.clone());
    }
    let mut out = dataset.clone();
    if n == 1 {
        let mut samples = dataset.samples().to_vec();
        samples[0].speed_mps = 0.0;
        out = dataset.derive(samples);
        out.push_provenance(ProvenanceRecord::new(
            "estimate_velocity",
            serde_json::json!({ "warning": "single-sample dataset, speed set to 0" }),
        ));
        return Ok(out);
    }
    let s = dataset.samples();
    let speed_between = |i: usize, j: usize| -> f64 {
        let dx = s[j].x_m - s[i].x_m;
        let dy = s[j].y_m - s[i].y_m;
        let dt = s[j].time_s - s[i].time_s;
        (dx * dx + dy * dy).sqrt() / dt
    };
    let mut samples = s.to_vec();
    samples[0].speed_mps = speed_between(0, 1);
    samples[n - 1].speed_mps = speed_between(n - 2, n - 1);
    for i in 1..n - 1 {
        samples[i].speed_mps = speed_between(i - 1, i + 1);
    }
    let mut out2 = out.derive(samples);
    out2.push_provenance(ProvenanceRecord::new(
        "estimate_velocity",
        serde_json::json!({ "method": "central difference" }),
    ));
    Ok(out2)
}
