//! Canonical on-disk formats for the pipeline.
//!
//! Every format is language-neutral, diff-able text:
//!
//! | file             | format | columns / layout                              |
//! |------------------|--------|-----------------------------------------------|
//! | IMU stream       | CSV    | `t,ax,ay,az,gx,gy,gz,mx,my,mz` (SI units)     |
//! | ground truth     | CSV    | `t,px,py,pz,qw,qx,qy,qz`                      |
//! | orientation log  | CSV    | `t,qw,qx,qy,qz`                               |
//! | interval list    | text   | one `t0,t1` pair per line, no header          |
//! | predictions      | CSV    | `t0,t1,dpx,dpy,bx,by`                         |
//! | belief trace     | CSV    | `t,px,py,cxx,cxy,cyy` (covariance upper tri)  |
//! | observations     | CSV    | `t,zx,zy,rxx,rxy,ryy` (direct position obs)   |
//! | ellipse polyline | CSV    | `t,vertex,x,y` (64 vertices per belief)       |
//! | manifest         | TOML   | dataset root plus per-sequence entries        |
//!
//! Magnetometer columns may be left empty on streams without a
//! magnetometer, but must then be empty on every row.  Values are written
//! with shortest-round-trip decimal rendering, so a write→read cycle
//! reproduces the numbers bit-for-bit.
//!
//! Readers map malformed content to [`Error::Schema`] with the offending
//! path (and line where known), and filesystem failures to [`Error::Io`],
//! which the command-line tool translates into its documented exit codes.

use crate::bayes::PositionBelief;
use crate::data::ImuSequence;
use crate::geom::{Quaternion, Vector3};
use crate::synthimu::PoseSample;
use crate::{Error, Result};
use nalgebra::{Matrix2, Vector2};
use std::fs;
use std::path::{Path, PathBuf};

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<fs::File>, expected: &[&str]) -> Result<()> {
    let headers = reader
        .headers()
        .map_err(|e| Error::schema(path, format!("unreadable header: {e}")))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::schema(
            path,
            format!("expected header {expected:?}, got {got:?}"),
        ));
    }
    Ok(())
}

fn parse_field(path: &Path, line: u64, name: &str, raw: &str) -> Result<f64> {
    let value: f64 = raw.trim().parse().map_err(|_| {
        Error::schema(path, format!("line {line}: field '{name}' is not a number: {raw:?}"))
    })?;
    if !value.is_finite() {
        return Err(Error::schema(
            path,
            format!("line {line}: field '{name}' must be finite, got {raw:?}"),
        ));
    }
    Ok(value)
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Writes an f64 with shortest-round-trip rendering.
fn fmt(v: f64) -> String {
    v.to_string()
}

// ---------------------------------------------------------------------------
// IMU stream CSV
// ---------------------------------------------------------------------------

const IMU_HEADER: [&str; 10] = ["t", "ax", "ay", "az", "gx", "gy", "gz", "mx", "my", "mz"];

/// Writes an IMU stream as `t,ax,ay,az,gx,gy,gz,mx,my,mz`.  Streams without
/// a magnetometer leave the three `m*` fields empty.  Ground-truth poses are
/// not part of this format (see [`write_truth_csv`]).
pub fn write_imu_csv(path: impl AsRef<Path>, seq: &ImuSequence<f64>) -> Result<()> {
    let path = path.as_ref();
    seq.validate()?;
    let mut w = csv_writer(path)?;
    w.write_record(IMU_HEADER)
        .map_err(|e| Error::schema(path, e.to_string()))?;
    for (i, &t) in seq.timestamps.iter().enumerate() {
        let a = seq.accel[i];
        let g = seq.gyro[i];
        let mut record = vec![
            fmt(t),
            fmt(a.x),
            fmt(a.y),
            fmt(a.z),
            fmt(g.x),
            fmt(g.y),
            fmt(g.z),
        ];
        match &seq.mag {
            Some(mag) => {
                let m = mag[i];
                record.extend([fmt(m.x), fmt(m.y), fmt(m.z)]);
            }
            None => record.extend([String::new(), String::new(), String::new()]),
        }
        w.write_record(&record)
            .map_err(|e| Error::schema(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads an IMU stream written by [`write_imu_csv`].  The sample rate is
/// inferred from the median timestamp gap; timestamps must be uniform.
pub fn read_imu_csv(path: impl AsRef<Path>) -> Result<ImuSequence<f64>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &IMU_HEADER)?;
    let mut timestamps = Vec::new();
    let mut accel = Vec::new();
    let mut gyro = Vec::new();
    let mut mag: Vec<Vector3<f64>> = Vec::new();
    let mut mag_rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| Error::schema(path, e.to_string()))?;
        let line = record_line(&record);
        let get = |idx: usize| -> &str { record.get(idx).unwrap_or("") };
        timestamps.push(parse_field(path, line, "t", get(0))?);
        accel.push(Vector3::new(
            parse_field(path, line, "ax", get(1))?,
            parse_field(path, line, "ay", get(2))?,
            parse_field(path, line, "az", get(3))?,
        ));
        gyro.push(Vector3::new(
            parse_field(path, line, "gx", get(4))?,
            parse_field(path, line, "gy", get(5))?,
            parse_field(path, line, "gz", get(6))?,
        ));
        let m_raw = [get(7).trim(), get(8).trim(), get(9).trim()];
        let filled = m_raw.iter().filter(|s| !s.is_empty()).count();
        match filled {
            0 => {}
            3 => {
                mag.push(Vector3::new(
                    parse_field(path, line, "mx", m_raw[0])?,
                    parse_field(path, line, "my", m_raw[1])?,
                    parse_field(path, line, "mz", m_raw[2])?,
                ));
                mag_rows += 1;
            }
            _ => {
                return Err(Error::schema(
                    path,
                    format!("line {line}: magnetometer fields must be all present or all empty"),
                ));
            }
        }
    }
    if timestamps.is_empty() {
        return Err(Error::schema(path, "no data rows"));
    }
    if mag_rows != 0 && mag_rows != timestamps.len() {
        return Err(Error::schema(
            path,
            "magnetometer present on some rows but not all",
        ));
    }
    let rate = infer_rate(path, &timestamps)?;
    let mag = (mag_rows > 0).then_some(mag);
    ImuSequence::new(rate, timestamps, accel, gyro, mag, None)
}

fn infer_rate(path: &Path, timestamps: &[f64]) -> Result<f64> {
    if timestamps.len() < 2 {
        return Err(Error::schema(
            path,
            "need at least two samples to infer the sample rate",
        ));
    }
    let mut gaps: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = gaps[gaps.len() / 2];
    if !(median > 0.0) {
        return Err(Error::schema(path, "timestamps must be strictly increasing"));
    }
    Ok(1.0 / median)
}

// ---------------------------------------------------------------------------
// Ground-truth CSV
// ---------------------------------------------------------------------------

const TRUTH_HEADER: [&str; 8] = ["t", "px", "py", "pz", "qw", "qx", "qy", "qz"];

/// Writes ground-truth poses as `t,px,py,pz,qw,qx,qy,qz`.
pub fn write_truth_csv(path: impl AsRef<Path>, poses: &[PoseSample<f64>]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(TRUTH_HEADER)
        .map_err(|e| Error::schema(path, e.to_string()))?;
    for p in poses {
        w.write_record([
            fmt(p.t),
            fmt(p.position.x),
            fmt(p.position.y),
            fmt(p.position.z),
            fmt(p.q.w),
            fmt(p.q.x),
            fmt(p.q.y),
            fmt(p.q.z),
        ])
        .map_err(|e| Error::schema(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads ground-truth poses written by [`write_truth_csv`].
pub fn read_truth_csv(path: impl AsRef<Path>) -> Result<Vec<PoseSample<f64>>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &TRUTH_HEADER)?;
    let mut poses = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::schema(path, e.to_string()))?;
        let line = record_line(&record);
        let mut f = [0.0f64; 8];
        for (i, name) in TRUTH_HEADER.iter().enumerate() {
            f[i] = parse_field(path, line, name, record.get(i).unwrap_or(""))?;
        }
        poses.push(PoseSample {
            t: f[0],
            position: Vector3::new(f[1], f[2], f[3]),
            q: Quaternion::new(f[4], f[5], f[6], f[7]),
        });
    }
    if poses.is_empty() {
        return Err(Error::schema(path, "no data rows"));
    }
    Ok(poses)
}

// ---------------------------------------------------------------------------
// Orientation log CSV
// ---------------------------------------------------------------------------

const QUAT_HEADER: [&str; 5] = ["t", "qw", "qx", "qy", "qz"];

/// Writes an attitude log as `t,qw,qx,qy,qz`.
pub fn write_quaternion_csv(
    path: impl AsRef<Path>,
    timestamps: &[f64],
    quats: &[Quaternion<f64>],
) -> Result<()> {
    let path = path.as_ref();
    if timestamps.len() != quats.len() {
        return Err(Error::invalid(format!(
            "orientation log has {} timestamps but {} quaternions",
            timestamps.len(),
            quats.len()
        )));
    }
    let mut w = csv_writer(path)?;
    w.write_record(QUAT_HEADER)
        .map_err(|e| Error::schema(path, e.to_string()))?;
    for (&t, q) in timestamps.iter().zip(quats) {
        w.write_record([fmt(t), fmt(q.w), fmt(q.x), fmt(q.y), fmt(q.z)])
            .map_err(|e| Error::schema(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads an attitude log written by [`write_quaternion_csv`].
pub fn read_quaternion_csv(path: impl AsRef<Path>) -> Result<(Vec<f64>, Vec<Quaternion<f64>>)> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &QUAT_HEADER)?;
    let mut timestamps = Vec::new();
    let mut quats = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::schema(path, e.to_string()))?;
        let line = record_line(&record);
        let mut f = [0.0f64; 5];
        for (i, name) in QUAT_HEADER.iter().enumerate() {
            f[i] = parse_field(path, line, name, record.get(i).unwrap_or(""))?;
        }
        timestamps.push(f[0]);
        quats.push(Quaternion::new(f[1], f[2], f[3], f[4]));
    }
    if timestamps.is_empty() {
        return Err(Error::schema(path, "no data rows"));
    }
    Ok((timestamps, quats))
}

// ---------------------------------------------------------------------------
// Interval list
// ---------------------------------------------------------------------------

/// Writes a displacement-interval request list: one `t0,t1` pair per line,
/// no header.
pub fn write_interval_list(path: impl AsRef<Path>, intervals: &[(f64, f64)]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for &(t0, t1) in intervals {
        out.push_str(&fmt(t0));
        out.push(',');
        out.push_str(&fmt(t1));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads an interval list written by [`write_interval_list`].  Blank lines
/// are ignored; each interval must satisfy `t1 > t0`.
pub fn read_interval_list(path: impl AsRef<Path>) -> Result<Vec<(f64, f64)>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut intervals = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parts: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::schema(
                path,
                format!("line {line}: expected 't0,t1', got {trimmed:?}"),
            ));
        }
        let t0 = parse_field(path, line as u64, "t0", parts[0])?;
        let t1 = parse_field(path, line as u64, "t1", parts[1])?;
        if t1 <= t0 {
            return Err(Error::schema(
                path,
                format!("line {line}: interval must have t1 > t0"),
            ));
        }
        intervals.push((t0, t1));
    }
    if intervals.is_empty() {
        return Err(Error::schema(path, "no intervals"));
    }
    Ok(intervals)
}

// ---------------------------------------------------------------------------
// Predictions CSV
// ---------------------------------------------------------------------------

/// One displacement prediction: interval, predicted step, per-axis Laplace
/// scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    /// Interval start time, seconds.
    pub t0: f64,
    /// Interval end time, seconds.
    pub t1: f64,
    /// Predicted displacement over the interval, metres.
    pub dp: [f64; 2],
    /// Per-axis Laplace scale of the displacement, metres.
    pub b: [f64; 2],
}

const PRED_HEADER: [&str; 6] = ["t0", "t1", "dpx", "dpy", "bx", "by"];

/// Writes displacement predictions as `t0,t1,dpx,dpy,bx,by`.
pub fn write_predictions_csv(
    path: impl AsRef<Path>,
    records: &[PredictionRecord],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(PRED_HEADER)
        .map_err(|e| Error::schema(path, e.to_string()))?;
    for r in records {
        w.write_record([
            fmt(r.t0),
            fmt(r.t1),
            fmt(r.dp[0]),
            fmt(r.dp[1]),
            fmt(r.b[0]),
            fmt(r.b[1]),
        ])
        .map_err(|e| Error::schema(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads predictions written by [`write_predictions_csv`].  Scales must be
/// strictly positive and intervals non-degenerate.
pub fn read_predictions_csv(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &PRED_HEADER)?;
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::schema(path, e.to_string()))?;
        let line = record_line(&record);
        let mut f = [0.0f64; 6];
        for (i, name) in PRED_HEADER.iter().enumerate() {
            f[i] = parse_field(path, line, name, record.get(i).unwrap_or(""))?;
        }
        if f[1] <= f[0] {
            return Err(Error::schema(
                path,
                format!("line {line}: prediction interval must have t1 > t0"),
            ));
        }
        if !(f[4] > 0.0 && f[5] > 0.0) {
            return Err(Error::schema(
                path,
                format!("line {line}: scales must be strictly positive"),
            ));
        }
        records.push(PredictionRecord {
            t0: f[0],
            t1: f[1],
            dp: [f[2], f[3]],
            b: [f[4], f[5]],
        });
    }
    if records.is_empty() {
        return Err(Error::schema(path, "no data rows"));
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Belief trace CSV
// ---------------------------------------------------------------------------

/// One belief snapshot: mean position and the upper triangle of the
/// covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefRecord {
    /// Belief time, seconds.
    pub t: f64,
    /// Mean position, metres.
    pub mean: [f64; 2],
    /// Covariance upper triangle `[cxx, cxy, cyy]`, m².
    pub cov: [f64; 3],
}

impl BeliefRecord {
    /// Snapshot of a belief.
    pub fn from_belief(b: &PositionBelief) -> Self {
        BeliefRecord {
            t: b.timestamp,
            mean: [b.mean.x, b.mean.y],
            cov: [b.cov[(0, 0)], b.cov[(0, 1)], b.cov[(1, 1)]],
        }
    }

    /// Reconstructs the belief (validating PSD-ness on the way).
    pub fn to_belief(self) -> Result<PositionBelief> {
        PositionBelief::new(
            Vector2::new(self.mean[0], self.mean[1]),
            Matrix2::new(self.cov[0], self.cov[1], self.cov[1], self.cov[2]),
            self.t,
        )
    }
}

const BELIEF_HEADER: [&str; 6] = ["t", "px", "py", "cxx", "cxy", "cyy"];

/// Writes a belief trace as `t,px,py,cxx,cxy,cyy`.
pub fn write_belief_csv(path: impl AsRef<Path>, records: &[BeliefRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(BELIEF_HEADER)
        .map_err(|e| Error::schema(path, e.to_string()))?;
    for r in records {
        w.write_record([
            fmt(r.t),
            fmt(r.mean[0]),
            fmt(r.mean[1]),
            fmt(r.cov[0]),
            fmt(r.cov[1]),
            fmt(r.cov[2]),
        ])
        .map_err(|e| Error::schema(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a belief trace written by [`write_belief_csv`].
pub fn read_belief_csv(path: impl AsRef<Path>) -> Result<Vec<BeliefRecord>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &BELIEF_HEADER)?;
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::schema(path, e.to_string()))?;
        let line = record_line(&record);
        let mut f = [0.0f64; 6];
        for (i, name) in BELIEF_HEADER.iter().enumerate() {
            f[i] = parse_field(path, line, name, record.get(i).unwrap_or(""))?;
        }
        records.push(BeliefRecord {
            t: f[0],
            mean: [f[1], f[2]],
            cov: [f[3], f[4], f[5]],
        });
    }
    if records.is_empty() {
        return Err(Error::schema(path, "no data rows"));
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Observations CSV
// ---------------------------------------------------------------------------

/// One direct position observation `z = p + ε`, `ε ~ N(0, R)`, with the
/// upper triangle of `R`.  File observations always use the identity
/// measurement matrix; richer models are available through the library API.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRecord {
    /// Observation time, seconds.
    pub t: f64,
    /// Observed position, metres.
    pub z: [f64; 2],
    /// Noise covariance upper triangle `[rxx, rxy, ryy]`, m².
    pub r: [f64; 3],
}

const OBS_HEADER: [&str; 6] = ["t", "zx", "zy", "rxx", "rxy", "ryy"];

/// Writes position observations as `t,zx,zy,rxx,rxy,ryy`.
pub fn write_observations_csv(
    path: impl AsRef<Path>,
    records: &[ObservationRecord],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(OBS_HEADER)
        .map_err(|e| Error::schema(path, e.to_string()))?;
    for r in records {
        w.write_record([
            fmt(r.t),
            fmt(r.z[0]),
            fmt(r.z[1]),
            fmt(r.r[0]),
            fmt(r.r[1]),
            fmt(r.r[2]),
        ])
        .map_err(|e| Error::schema(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads observations written by [`write_observations_csv`].
pub fn read_observations_csv(path: impl AsRef<Path>) -> Result<Vec<ObservationRecord>> {
    let path = path.as_ref();
    let mut reader = csv_reader(path)?;
    check_header(path, &mut reader, &OBS_HEADER)?;
    let mut records = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::schema(path, e.to_string()))?;
        let line = record_line(&record);
        let mut f = [0.0f64; 6];
        for (i, name) in OBS_HEADER.iter().enumerate() {
            f[i] = parse_field(path, line, name, record.get(i).unwrap_or(""))?;
        }
        records.push(ObservationRecord {
            t: f[0],
            z: [f[1], f[2]],
            r: [f[3], f[4], f[5]],
        });
    }
    if records.is_empty() {
        return Err(Error::schema(path, "no data rows"));
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Ellipse polylines CSV
// ---------------------------------------------------------------------------

/// Writes confidence-ellipse boundaries as `t,vertex,x,y` rows — one row per
/// polyline vertex — so any plotting tool can render the uncertainty tube.
pub fn write_ellipse_csv(
    path: impl AsRef<Path>,
    polylines: &[(f64, Vec<[f64; 2]>)],
) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["t", "vertex", "x", "y"])
        .map_err(|e| Error::schema(path, e.to_string()))?;
    for (t, points) in polylines {
        for (k, p) in points.iter().enumerate() {
            w.write_record([fmt(*t), k.to_string(), fmt(p[0]), fmt(p[1])])
                .map_err(|e| Error::schema(path, e.to_string()))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Dataset manifest (TOML)
// ---------------------------------------------------------------------------

/// Train/validation/test membership of one sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    /// Used for gradient updates.
    Train,
    /// Used for model selection.
    Val,
    /// Held out for final evaluation.
    Test,
}

/// One recorded sequence in a dataset manifest.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    /// Unique sequence identifier.
    pub id: String,
    /// IMU stream CSV, relative to the dataset root.
    pub imu: PathBuf,
    /// Ground-truth CSV, relative to the dataset root.
    pub truth: PathBuf,
    /// Subject (walker) identifier.
    pub subject: String,
    /// Whether the subject also appears in the training split.
    pub seen: bool,
    /// Split membership.
    pub split: Split,
}

/// Dataset manifest: a root directory plus sequence entries.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    /// Directory all sequence paths are relative to (itself interpreted
    /// relative to the manifest file's location when loaded).
    pub root: PathBuf,
    /// The sequences making up the dataset.
    pub sequences: Vec<SequenceEntry>,
}

impl Manifest {
    /// Parses a manifest file.  TOML or schema violations map to
    /// [`Error::Schema`]; the referenced data files are *not* checked here
    /// (see [`Manifest::validate_files`]).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| Error::schema(path, e.to_string()))?;
        manifest.validate().map_err(|e| match e {
            Error::InvalidInput(msg) => Error::schema(path, msg),
            other => other,
        })?;
        Ok(manifest)
    }

    /// Serializes the manifest to TOML.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.validate().map_err(|e| match e {
            Error::InvalidInput(msg) => Error::schema(path, msg),
            other => other,
        })?;
        let text = toml::to_string(self).map_err(|e| Error::schema(path, e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Structural checks: at least one sequence, unique ids.
    pub fn validate(&self) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(Error::invalid("manifest lists no sequences"));
        }
        let mut ids: Vec<&str> = self.sequences.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("manifest sequence ids must be unique"));
        }
        Ok(())
    }

    /// Checks that every referenced data file exists under `base/root`.
    pub fn validate_files(&self, base: impl AsRef<Path>) -> Result<()> {
        let root = base.as_ref().join(&self.root);
        for seq in &self.sequences {
            for file in [&seq.imu, &seq.truth] {
                let full = root.join(file);
                if !full.is_file() {
                    return Err(Error::io(
                        full,
                        std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            format!("file referenced by sequence '{}' not found", seq.id),
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    /// All sequences in a split, with paths resolved against `base/root`.
    pub fn split_paths(
        &self,
        base: impl AsRef<Path>,
        split: Split,
    ) -> Vec<(String, PathBuf, PathBuf)> {
        let root = base.as_ref().join(&self.root);
        self.sequences
            .iter()
            .filter(|s| s.split == split)
            .map(|s| (s.id.clone(), root.join(&s.imu), root.join(&s.truth)))
            .collect()
    }
}
