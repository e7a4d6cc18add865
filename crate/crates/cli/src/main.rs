//! `pedloc` — the command-line pipeline driver.
//!
//! The subcommands chain into the full localization pipeline:
//!
//! | command   | does                                                        |
//! |-----------|-------------------------------------------------------------|
//! | `synth`   | generate a synthetic walking dataset with known ground truth |
//! | `align`   | run the orientation filter, emit nav-frame measurements      |
//! | `train`   | fit the displacement estimator on a manifest's train split   |
//! | `predict` | estimate displacement + scale over requested intervals       |
//! | `chain`   | dead-reckon a position belief through a prediction file      |
//! | `fuse`    | same, folding in external position observations              |
//! | `eval`    | score an estimated trajectory against ground truth           |
//!
//! File formats are the canonical CSV/TOML layouts of the core `io`
//! module. Every command is deterministic given its inputs and `--seed`,
//! so re-running a command overwrites its outputs with bit-identical
//! bytes.
//!
//! Log verbosity follows the `RUST_LOG` environment variable (`warn` by
//! default). Exit codes: 0 success, 2 schema/usage error, 3 numeric
//! divergence, 4 I/O failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pedloc_core::asle::training::{train, validation, TrainParams};
use pedloc_core::asle::{checkpoint, AsleConfig, Mode, Model};
use pedloc_core::bayes::{
    chain_step, fuse_step, uncertainty_ellipse, AsleControl, ExternalObservation, GibbsConfig,
    PositionBelief,
};
use pedloc_core::data::{derive_seed, patch_batch, sample_windows, ImuSequence, WindowDist};
use pedloc_core::geom::Quaternion;
use pedloc_core::io::{
    read_imu_csv, read_interval_list, read_observations_csv, read_predictions_csv,
    read_quaternion_csv, read_truth_csv, write_belief_csv, write_ellipse_csv, write_imu_csv,
    write_predictions_csv, write_quaternion_csv, write_truth_csv, BeliefRecord, Manifest,
    PredictionRecord, SequenceEntry, Split,
};
use pedloc_core::metrics::{self, TrajectoryEstimate};
use pedloc_core::orient::{filter_step, FilterParams, FilterState, ImuSample};
use pedloc_core::synthimu::{
    add_noise, generate_trajectory, inverse_imu, NoiseSpec, TrajectorySpec,
};
use pedloc_core::{Error, Result};
use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One TOML file configuring every pipeline stage. Sections are optional
/// (defaults apply), but a present section must be complete, and unknown
/// keys anywhere are schema errors.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    /// Orientation-filter parameters for `align`.
    filter: FilterParamsSection,
    /// Network architecture for `train`/`predict`.
    asle: AsleConfig,
    /// Training-loop hyperparameters for `train`.
    training: TrainParams<f64>,
    /// Gibbs fusion settings for `fuse`.
    fusion: GibbsConfig,
    /// Base seed; per-stage seeds are derived from it. `--seed` overrides.
    seed: u64,
}

/// Newtype so the `[filter]` section gets the filter's own defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
struct FilterParamsSection(FilterParams<f64>);

impl Default for FilterParamsSection {
    fn default() -> Self {
        FilterParamsSection(FilterParams::default())
    }
}

impl RunConfig {
    /// Loads a config file, or the all-defaults config when `path` is None.
    fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                toml::from_str(&text).map_err(|e| Error::schema(p, e.to_string()))
            }
        }
    }

    /// Serializes the fully resolved config (for provenance next to outputs).
    fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::schema(path, e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

// ---------------------------------------------------------------------------
// Argument surface
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "pedloc",
    about = "Pedestrian inertial localization pipeline",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic IMU dataset (with manifest) from a spec file.
    Synth(SynthArgs),
    /// Run the orientation filter over a raw IMU file.
    Align(AlignArgs),
    /// Train the displacement estimator on a dataset manifest.
    Train(TrainArgs),
    /// Predict displacements over an interval list with a trained model.
    Predict(PredictArgs),
    /// Dead-reckon a position belief through a prediction file.
    Chain(ChainArgs),
    /// Dead-reckon with external position observations fused in.
    Fuse(FuseArgs),
    /// Score estimated trajectories against ground truth.
    Eval(EvalArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Dataset spec (TOML: seed, noise model, trajectory list).
    spec: PathBuf,
    /// Output directory for CSVs and the manifest.
    #[arg(long)]
    out: PathBuf,
    /// Override the spec's base seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct AlignArgs {
    /// Raw IMU CSV.
    imu: PathBuf,
    /// Output directory for `<stem>_aligned.csv` and `<stem>_quat.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Run config (uses the `[filter]` section).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset manifest.
    #[arg(long)]
    manifest: PathBuf,
    /// Run config (uses `[asle]`, `[training]`, `seed`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for checkpoint, loss curve, and resolved config.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model checkpoint.
    checkpoint: PathBuf,
    /// Nav-frame (aligned) IMU CSV.
    aligned: PathBuf,
    /// Interval list: one `t0,t1` per line.
    intervals: PathBuf,
    /// Output predictions CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ChainArgs {
    /// Predictions CSV (chainable: each interval starts where the previous
    /// ended).
    predictions: PathBuf,
    /// Output directory for `belief.csv` and `ellipse.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Initial position `x,y` in metres.
    #[arg(long, default_value = "0,0", value_parser = parse_xy)]
    start: (f64, f64),
    /// Confidence level of the emitted ellipses.
    #[arg(long, default_value_t = 0.997)]
    confidence: f64,
}

#[derive(Args)]
struct FuseArgs {
    /// Predictions CSV (chainable).
    predictions: PathBuf,
    /// Position observations CSV; each row's time must coincide with some
    /// prediction's end time.
    observations: PathBuf,
    /// Output directory for `belief.csv` and `ellipse.csv`.
    #[arg(long)]
    out: PathBuf,
    /// Run config (uses the `[fusion]` section and `seed`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Initial position `x,y` in metres.
    #[arg(long, default_value = "0,0", value_parser = parse_xy)]
    start: (f64, f64),
    /// Confidence level of the emitted ellipses.
    #[arg(long, default_value_t = 0.997)]
    confidence: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Estimated trajectory: a belief-trace CSV (`t,px,py,...`).
    estimate: PathBuf,
    /// Ground-truth CSV.
    truth: PathBuf,
    /// Optional orientation log to add attitude metrics.
    #[arg(long)]
    quat: Option<PathBuf>,
    /// Write the report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_xy(raw: &str) -> std::result::Result<(f64, f64), String> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err("expected 'x,y'".into());
    }
    let x: f64 = parts[0].parse().map_err(|_| "x is not a number".to_string())?;
    let y: f64 = parts[1].parse().map_err(|_| "y is not a number".to_string())?;
    Ok((x, y))
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Align(args) => cmd_align(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Chain(args) => cmd_chain(args),
        Command::Fuse(args) => cmd_fuse(args),
        Command::Eval(args) => cmd_eval(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Failure-class exit codes: schema/validation 2, numeric divergence 3,
/// I/O 4.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidInput(_) | Error::Schema { .. } => 2,
        Error::Numeric(_) => 3,
        Error::Io { .. } => 4,
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// Spec file for `synth`: a base seed, one noise model, and the trajectory
/// list. Per-trajectory streams are derived from the base seed, so every
/// sequence differs while the whole dataset stays reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SynthSpec {
    seed: u64,
    noise: NoiseSpec<f64>,
    trajectories: Vec<TrajectoryEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryEntry {
    id: String,
    subject: String,
    seen: bool,
    split: Split,
    spec: TrajectorySpec<f64>,
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.spec).map_err(|e| Error::io(&args.spec, e))?;
    let spec: SynthSpec =
        toml::from_str(&text).map_err(|e| Error::schema(&args.spec, e.to_string()))?;
    let seed = args.seed.unwrap_or(spec.seed);
    ensure_dir(&args.out)?;

    let mut entries = Vec::with_capacity(spec.trajectories.len());
    for (i, traj) in spec.trajectories.iter().enumerate() {
        let stream = derive_seed(seed, i as u64);
        let poses = generate_trajectory(&traj.spec, derive_seed(stream, 0))?;
        let clean = inverse_imu(
            &poses,
            pedloc_core::synthimu::default_gravity(),
            pedloc_core::synthimu::default_mag_field(),
        )?;
        let noisy = add_noise(&clean, &spec.noise, derive_seed(stream, 1))?;
        let imu_name = format!("{}_imu.csv", traj.id);
        let truth_name = format!("{}_truth.csv", traj.id);
        write_imu_csv(args.out.join(&imu_name), &noisy)?;
        write_truth_csv(args.out.join(&truth_name), &poses)?;
        entries.push(SequenceEntry {
            id: traj.id.clone(),
            imu: PathBuf::from(imu_name),
            truth: PathBuf::from(truth_name),
            subject: traj.subject.clone(),
            seen: traj.seen,
            split: traj.split,
        });
        log::info!("synthesized sequence '{}'", traj.id);
    }
    let manifest = Manifest { root: PathBuf::from("."), sequences: entries };
    manifest.save(args.out.join("manifest.toml"))
}

// ---------------------------------------------------------------------------
// align
// ---------------------------------------------------------------------------

fn cmd_align(args: AlignArgs) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let params = config.filter.0;
    params.validate()?;
    let seq = read_imu_csv(&args.imu)?;
    ensure_dir(&args.out)?;

    let mut state = FilterState::new(Quaternion::identity(), &params, seq.sample_rate)?;
    let dt = seq.dt();
    let n = seq.len();
    let mut accel = Vec::with_capacity(n);
    let mut gyro = Vec::with_capacity(n);
    let mut mag = seq.mag.as_ref().map(|_| Vec::with_capacity(n));
    let mut quats = Vec::with_capacity(n);
    for i in 0..n {
        let sample = ImuSample {
            accel: seq.accel[i],
            gyro: seq.gyro[i],
            mag: seq.mag.as_ref().map(|m| m[i]),
        };
        let out = filter_step(&mut state, &sample, dt, &params);
        accel.push(out.aligned_accel);
        gyro.push(out.aligned_gyro);
        if let (Some(ms), Some(m)) = (mag.as_mut(), out.aligned_mag) {
            ms.push(m);
        }
        quats.push(out.q_new);
    }
    let aligned =
        ImuSequence::new(seq.sample_rate, seq.timestamps.clone(), accel, gyro, mag, None)?;

    let stem = args
        .imu
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid("IMU path has no usable file name"))?;
    write_imu_csv(args.out.join(format!("{stem}_aligned.csv")), &aligned)?;
    write_quaternion_csv(
        args.out.join(format!("{stem}_quat.csv")),
        &seq.timestamps,
        &quats,
    )
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Loads a manifest split as pose-carrying, truth-aligned sequences (the
/// idealized alignment used to build supervision targets).
fn load_split(manifest: &Manifest, base: &Path, split: Split) -> Result<Vec<ImuSequence<f64>>> {
    let mut out = Vec::new();
    for (id, imu_path, truth_path) in manifest.split_paths(base, split) {
        let seq = read_imu_csv(&imu_path)?;
        let poses = read_truth_csv(&truth_path)?;
        if poses.len() != seq.len() {
            return Err(Error::schema(
                &truth_path,
                format!(
                    "sequence '{id}': {} truth rows for {} IMU rows",
                    poses.len(),
                    seq.len()
                ),
            ));
        }
        let with_poses = ImuSequence::new(
            seq.sample_rate,
            seq.timestamps,
            seq.accel,
            seq.gyro,
            seq.mag,
            Some(poses),
        )?;
        out.push(with_poses.align_with_poses()?);
    }
    Ok(out)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let manifest = Manifest::load(&args.manifest)?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    manifest.validate_files(base)?;
    ensure_dir(&args.out)?;

    let train_seqs = load_split(&manifest, base, Split::Train)?;
    if train_seqs.is_empty() {
        return Err(Error::invalid("manifest has no training sequences"));
    }
    let mut model = Model::<f64>::new(config.asle.clone(), derive_seed(config.seed, 0))?;
    let mut params = config.training.clone();
    params.seed = derive_seed(config.seed, 1);
    log::info!(
        "training {} epochs × {} batches on {} sequences",
        params.epochs,
        params.batches_per_epoch,
        train_seqs.len()
    );
    let history = train(&mut model, &train_seqs, &params)?;

    let mut loss_rows = String::from("epoch,nll,feature_match,total\n");
    for s in &history {
        loss_rows.push_str(&format!(
            "{},{},{},{}\n",
            s.epoch, s.nll, s.feature_match, s.total
        ));
    }
    let loss_path = args.out.join("loss.csv");
    std::fs::write(&loss_path, loss_rows).map_err(|e| Error::io(&loss_path, e))?;

    checkpoint::save(&mut model, &args.out.join("model.ckpt"))?;
    config.save(&args.out.join("config.toml"))?;

    let val_seqs = load_split(&manifest, base, Split::Val)?;
    if !val_seqs.is_empty() {
        let windows = sample_windows(
            &val_seqs,
            &WindowDist::Fixed(5.0),
            64,
            derive_seed(config.seed, 2),
        )?;
        let stats = validation(&model, &val_seqs, &windows)?;
        let report = metrics::format_report([
            ("val_mae_m", stats.mae),
            ("zero_baseline_m", stats.zero_baseline),
        ]);
        let val_path = args.out.join("validation.txt");
        std::fs::write(&val_path, &report).map_err(|e| Error::io(&val_path, e))?;
        print!("{report}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model: Model<f64> = checkpoint::load(&args.checkpoint)?;
    let seq = read_imu_csv(&args.aligned)?;
    let intervals = read_interval_list(&args.intervals)?;
    let rate = seq.sample_rate;
    let t0_seq = seq.timestamps[0];
    let patch_len = model.config().patch_len;

    let mut records = Vec::with_capacity(intervals.len());
    for &(t0, t1) in &intervals {
        let start = ((t0 - t0_seq) * rate).round() as i64;
        let span = ((t1 - t0) * rate).round().max(1.0) as i64;
        let end = start + span;
        if start < 0 || end > seq.len() as i64 {
            return Err(Error::invalid(format!(
                "interval [{t0}, {t1}] s lies outside the recording"
            )));
        }
        let (start, end) = (start as usize, end as usize);
        let window = seq.channels(start, end)?;
        let x = patch_batch(&[window], patch_len, rate)?;
        let duration = span as f64 / rate;
        let pass = model.forward(&x, duration, Mode::Eval)?;
        records.push(PredictionRecord {
            t0,
            t1,
            dp: [pass.prediction.dp_hat[[0, 0]], pass.prediction.dp_hat[[0, 1]]],
            b: [pass.prediction.b_hat[[0, 0]], pass.prediction.b_hat[[0, 1]]],
        });
    }
    write_predictions_csv(&args.out, &records)
}

// ---------------------------------------------------------------------------
// chain / fuse
// ---------------------------------------------------------------------------

/// Checks the prediction list forms one contiguous chain and converts each
/// record into a control input.
fn chain_controls(
    path: &Path,
    records: &[PredictionRecord],
) -> Result<Vec<AsleControl>> {
    for pair in records.windows(2) {
        if (pair[1].t0 - pair[0].t1).abs() > 1e-6 {
            return Err(Error::schema(
                path,
                format!(
                    "predictions do not chain: interval ending at {} s followed by one starting at {} s",
                    pair[0].t1, pair[1].t0
                ),
            ));
        }
    }
    Ok(records
        .iter()
        .map(|r| AsleControl {
            dp: nalgebra_v2(r.dp),
            b: nalgebra_v2(r.b),
            dt: r.t1 - r.t0,
        })
        .collect())
}

fn nalgebra_v2(a: [f64; 2]) -> nalgebra::Vector2<f64> {
    nalgebra::Vector2::new(a[0], a[1])
}

fn initial_belief(start: (f64, f64), t0: f64) -> Result<PositionBelief> {
    PositionBelief::new(
        nalgebra::Vector2::new(start.0, start.1),
        nalgebra::Matrix2::zeros(),
        t0,
    )
}

fn write_belief_outputs(
    out: &Path,
    trace: &[PositionBelief],
    confidence: f64,
) -> Result<()> {
    ensure_dir(out)?;
    let records: Vec<BeliefRecord> = trace.iter().map(BeliefRecord::from_belief).collect();
    write_belief_csv(out.join("belief.csv"), &records)?;
    let mut polylines = Vec::with_capacity(trace.len());
    for belief in trace {
        let ellipse = uncertainty_ellipse(belief, confidence)?;
        polylines.push((belief.timestamp, ellipse.polyline(64)));
    }
    write_ellipse_csv(out.join("ellipse.csv"), &polylines)
}

fn cmd_chain(args: ChainArgs) -> Result<()> {
    let records = read_predictions_csv(&args.predictions)?;
    let controls = chain_controls(&args.predictions, &records)?;
    let mut belief = initial_belief(args.start, records[0].t0)?;
    let mut trace = vec![belief.clone()];
    for u in &controls {
        belief = chain_step(&belief, u)?;
        trace.push(belief.clone());
    }
    write_belief_outputs(&args.out, &trace, args.confidence)
}

fn cmd_fuse(args: FuseArgs) -> Result<()> {
    let config = RunConfig::load(args.config.as_deref())?;
    let seed = args.seed.unwrap_or(config.seed);
    let records = read_predictions_csv(&args.predictions)?;
    let controls = chain_controls(&args.predictions, &records)?;
    let observations = read_observations_csv(&args.observations)?;

    // Every observation must land on some step's end time.
    let mut matched: Vec<Option<ExternalObservation>> = (0..records.len()).map(|_| None).collect();
    for o in &observations {
        let slot = records.iter().position(|r| (r.t1 - o.t).abs() <= 1e-6);
        match slot {
            Some(k) if matched[k].is_none() => {
                matched[k] = Some(ExternalObservation {
                    z: nalgebra::DVector::from_column_slice(&o.z),
                    h: nalgebra::DMatrix::identity(2, 2),
                    r: nalgebra::DMatrix::from_row_slice(
                        2,
                        2,
                        &[o.r[0], o.r[1], o.r[1], o.r[2]],
                    ),
                });
            }
            Some(_) => {
                return Err(Error::schema(
                    &args.observations,
                    format!("multiple observations at {} s", o.t),
                ));
            }
            None => {
                return Err(Error::schema(
                    &args.observations,
                    format!("observation at {} s matches no prediction end time", o.t),
                ));
            }
        }
    }

    let mut belief = initial_belief(args.start, records[0].t0)?;
    let mut trace = vec![belief.clone()];
    for (k, (u, obs)) in controls.iter().zip(&matched).enumerate() {
        belief = match obs {
            None => chain_step(&belief, u)?,
            Some(obs) => {
                let cfg =
                    GibbsConfig { seed: derive_seed(seed, k as u64), ..config.fusion.clone() };
                fuse_step(&belief, u, obs, &cfg)?
            }
        };
        trace.push(belief.clone());
    }
    write_belief_outputs(&args.out, &trace, args.confidence)
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let est_records = pedloc_core::io::read_belief_csv(&args.estimate)?;
    let truth = read_truth_csv(&args.truth)?;

    let est = TrajectoryEstimate::new(
        est_records.iter().map(|r| r.t).collect(),
        est_records.iter().map(|r| r.mean).collect(),
    )?;
    let truth_traj = TrajectoryEstimate::new(
        truth.iter().map(|p| p.t).collect(),
        truth.iter().map(|p| [p.position.x, p.position.y]).collect(),
    )?;

    let mut entries = vec![
        ("mae_m", metrics::mae(&est, &truth_traj)?),
        ("ade_mps", metrics::ade(&est, &truth_traj)?),
        ("he_rad", metrics::he(&est, &truth_traj)?),
    ];
    if let Some(quat_path) = &args.quat {
        let (qt, quats) = read_quaternion_csv(quat_path)?;
        let matches = metrics::match_indices(&qt, &truth.iter().map(|p| p.t).collect::<Vec<_>>())?;
        let est_q: Vec<Quaternion<f64>> = matches.iter().map(|&(i, _)| quats[i]).collect();
        let truth_q: Vec<Quaternion<f64>> = matches.iter().map(|&(_, j)| truth[j].q).collect();
        entries.push(("qae_rad", metrics::qae(&est_q, &truth_q)?));
        entries.push(("cs", metrics::cs(&est_q, &truth_q)?));
    }
    let report = metrics::format_report(entries);
    if let Some(out) = &args.out {
        std::fs::write(out, &report).map_err(|e| Error::io(out, e))?;
    }
    print!("{report}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimal synth spec — `pedloc synth` consumes exactly this layout.
    fn example_synth_spec() -> SynthSpec {
        SynthSpec {
            seed: 1,
            noise: NoiseSpec::clean(),
            trajectories: vec![TrajectoryEntry {
                id: "walk".into(),
                subject: "s1".into(),
                seen: true,
                split: Split::Train,
                spec: TrajectorySpec::straight(10.0, Default::default()),
            }],
        }
    }

    #[test]
    fn run_config_roundtrips_through_toml() {
        let config = RunConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        let text2 = toml::to_string(&back).unwrap();
        assert_eq!(text, text2);
    }

    #[test]
    fn run_config_rejects_unknown_keys_and_accepts_partials() {
        assert!(toml::from_str::<RunConfig>("bogus = 1\n").is_err());
        let partial: RunConfig = toml::from_str("seed = 9\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.training.epochs, TrainParams::<f64>::default().epochs);
    }

    #[test]
    fn synth_spec_roundtrips_through_toml() {
        let spec = example_synth_spec();
        let text = toml::to_string(&spec).unwrap();
        let back: SynthSpec = toml::from_str(&text).unwrap();
        assert_eq!(back.seed, spec.seed);
        assert_eq!(back.trajectories.len(), 1);
        assert_eq!(back.trajectories[0].id, "walk");
    }

    #[test]
    fn xy_parser_accepts_pairs_only() {
        assert_eq!(parse_xy("1.5, -2").unwrap(), (1.5, -2.0));
        assert!(parse_xy("1").is_err());
        assert!(parse_xy("a,b").is_err());
    }

    #[test]
    fn exit_codes_follow_failure_class() {
        assert_eq!(exit_code(&Error::invalid("x")), 2);
        assert_eq!(exit_code(&Error::schema("f", "x")), 2);
        assert_eq!(exit_code(&Error::numeric("x")), 3);
        assert_eq!(
            exit_code(&Error::io("f", std::io::Error::other("x"))),
            4
        );
    }
}
