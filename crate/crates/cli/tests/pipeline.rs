//! End-to-end tests driving the `pedloc` binary itself: dataset synthesis,
//! orientation alignment, a short training run, prediction, belief
//! chaining, and evaluation — plus determinism (bit-identical re-runs) and
//! the documented exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pedloc_core::asle::training::TrainParams;
use pedloc_core::asle::AsleConfig;
use pedloc_core::data::WindowDist;
use pedloc_core::geom::{Quaternion, Vector3};
use pedloc_core::io::{read_quaternion_csv, read_truth_csv, Split};
use pedloc_core::metrics;
use pedloc_core::synthimu::{GaitModel, NoiseSpec, PathKind, TrajectorySpec};

fn pedloc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pedloc"))
}

fn run_ok(cmd: &mut Command) {
    let output = cmd.output().expect("spawn pedloc");
    assert!(
        output.status.success(),
        "command failed ({:?}):\n{}",
        cmd.get_args().collect::<Vec<_>>(),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn run_code(cmd: &mut Command) -> i32 {
    let output = cmd.output().expect("spawn pedloc");
    output.status.code().expect("exit code")
}

/// Mirrors the synth spec layout the binary consumes.
#[derive(serde::Serialize)]
struct SpecFile {
    seed: u64,
    noise: NoiseSpec<f64>,
    trajectories: Vec<SpecEntry>,
}

#[derive(serde::Serialize)]
struct SpecEntry {
    id: String,
    subject: String,
    seen: bool,
    split: Split,
    spec: TrajectorySpec<f64>,
}

/// Mirrors the run-config layout (sections omitted here use defaults).
#[derive(serde::Serialize)]
struct ConfigFile {
    asle: AsleConfig,
    training: TrainParams<f64>,
    seed: u64,
}

fn write_toml(path: &Path, value: &impl serde::Serialize) {
    fs::write(path, toml::to_string(value).unwrap()).unwrap();
}

fn walk_entry(id: &str, split: Split, heading: f64) -> SpecEntry {
    let mut spec = TrajectorySpec::straight(30.0, GaitModel::default());
    spec.sample_rate = 100.0;
    spec.path = PathKind::Straight { heading };
    SpecEntry {
        id: id.into(),
        subject: "s1".into(),
        seen: true,
        split,
        spec,
    }
}

fn tiny_config(seed: u64) -> ConfigFile {
    ConfigFile {
        asle: AsleConfig {
            patch_len: 50,
            embed_channels: 8,
            embed_kernel: 3,
            embed_stride: 3,
            group_size: 4,
            stage_channels: vec![8, 16],
            context_blocks: 1,
            head_hidden: 32,
            dropout: 0.1,
        },
        training: TrainParams {
            epochs: 2,
            batches_per_epoch: 3,
            batch_size: 4,
            learning_rate: 1e-3,
            window: WindowDist::Fixed(2.0),
            ..TrainParams::default()
        },
        seed,
    }
}

/// Synthesize → align → train two epochs → predict → chain → eval: every
/// stage exits 0, emits its artifacts, and a re-run reproduces them byte
/// for byte.
#[test]
fn full_pipeline_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Dataset: two training walks, one validation, one test.
    let spec = SpecFile {
        seed: 11,
        noise: NoiseSpec::consumer_grade(),
        trajectories: vec![
            walk_entry("walk_a", Split::Train, 0.0),
            walk_entry("walk_b", Split::Train, 1.2),
            walk_entry("walk_v", Split::Val, 0.6),
            walk_entry("walk_t", Split::Test, -0.4),
        ],
    };
    let spec_path = root.join("spec.toml");
    write_toml(&spec_path, &spec);
    let data = root.join("data");
    run_ok(pedloc().arg("synth").arg(&spec_path).arg("--out").arg(&data));
    for name in [
        "manifest.toml",
        "walk_a_imu.csv",
        "walk_a_truth.csv",
        "walk_t_imu.csv",
        "walk_t_truth.csv",
    ] {
        assert!(data.join(name).is_file(), "missing {name}");
    }

    // Train.
    let config_path = root.join("config.toml");
    write_toml(&config_path, &tiny_config(5));
    let run = root.join("run");
    run_ok(
        pedloc()
            .arg("train")
            .arg("--manifest")
            .arg(data.join("manifest.toml"))
            .arg("--config")
            .arg(&config_path)
            .arg("--out")
            .arg(&run),
    );
    for name in ["model.ckpt", "loss.csv", "config.toml", "validation.txt"] {
        assert!(run.join(name).is_file(), "missing {name}");
    }
    let loss_text = fs::read_to_string(run.join("loss.csv")).unwrap();
    assert_eq!(loss_text.lines().count(), 3, "header + one row per epoch");
    let validation = fs::read_to_string(run.join("validation.txt")).unwrap();
    assert!(validation.contains("val_mae_m = "));
    assert!(validation.contains("zero_baseline_m = "));

    // The emitted config re-parses and reproduces the run identically.
    let rerun = root.join("rerun");
    run_ok(
        pedloc()
            .arg("train")
            .arg("--manifest")
            .arg(data.join("manifest.toml"))
            .arg("--config")
            .arg(run.join("config.toml"))
            .arg("--out")
            .arg(&rerun),
    );
    assert_eq!(
        fs::read(run.join("model.ckpt")).unwrap(),
        fs::read(rerun.join("model.ckpt")).unwrap(),
        "checkpoint must be bit-identical under the emitted config"
    );
    assert_eq!(loss_text, fs::read_to_string(rerun.join("loss.csv")).unwrap());

    // Align the held-out walk.
    let aligned_dir = root.join("aligned");
    run_ok(
        pedloc()
            .arg("align")
            .arg(data.join("walk_t_imu.csv"))
            .arg("--out")
            .arg(&aligned_dir),
    );
    let aligned_csv = aligned_dir.join("walk_t_imu_aligned.csv");
    assert!(aligned_csv.is_file());
    assert!(aligned_dir.join("walk_t_imu_quat.csv").is_file());

    // Predict over three chained intervals.
    let intervals = root.join("intervals.txt");
    fs::write(&intervals, "0,2\n2,4\n4,6\n").unwrap();
    let predictions = root.join("predictions.csv");
    run_ok(
        pedloc()
            .arg("predict")
            .arg(run.join("model.ckpt"))
            .arg(&aligned_csv)
            .arg(&intervals)
            .arg("--out")
            .arg(&predictions),
    );
    let pred_text = fs::read_to_string(&predictions).unwrap();
    assert_eq!(pred_text.lines().count(), 4, "header + one row per interval");

    // Chain into a belief trace.
    let chain_dir = root.join("chain");
    run_ok(
        pedloc()
            .arg("chain")
            .arg(&predictions)
            .arg("--out")
            .arg(&chain_dir),
    );
    assert!(chain_dir.join("belief.csv").is_file());
    let ellipse_text = fs::read_to_string(chain_dir.join("ellipse.csv")).unwrap();
    // Four beliefs (initial + three steps) × 64 vertices + header.
    assert_eq!(ellipse_text.lines().count(), 1 + 4 * 64);

    // Evaluate against ground truth; the report lists every metric key.
    let report_path = root.join("report.txt");
    run_ok(
        pedloc()
            .arg("eval")
            .arg(chain_dir.join("belief.csv"))
            .arg(data.join("walk_t_truth.csv"))
            .arg("--quat")
            .arg(aligned_dir.join("walk_t_imu_quat.csv"))
            .arg("--out")
            .arg(&report_path),
    );
    let report = fs::read_to_string(&report_path).unwrap();
    for key in ["mae_m = ", "ade_mps = ", "he_rad = ", "qae_rad = ", "cs = "] {
        assert!(report.contains(key), "report missing {key}: {report}");
    }

    // Determinism across full re-runs: synthesis and prediction byte-match.
    let data2 = root.join("data2");
    run_ok(pedloc().arg("synth").arg(&spec_path).arg("--out").arg(&data2));
    assert_eq!(
        fs::read(data.join("walk_a_imu.csv")).unwrap(),
        fs::read(data2.join("walk_a_imu.csv")).unwrap()
    );
    let predictions2 = root.join("predictions2.csv");
    run_ok(
        pedloc()
            .arg("predict")
            .arg(run.join("model.ckpt"))
            .arg(&aligned_csv)
            .arg(&intervals)
            .arg("--out")
            .arg(&predictions2),
    );
    assert_eq!(pred_text, fs::read_to_string(&predictions2).unwrap());
}

/// Clean static recording with a tilted carry pose: the filter starts at
/// identity (30° off) and must converge; past the 5-second mark the
/// orientation log tracks truth to under two degrees.
#[test]
fn align_converges_on_clean_static_data() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let tilt = Quaternion::from_axis_angle(Vector3::unit_x(), 30f64.to_radians());
    let mut spec = TrajectorySpec::straight(8.0, GaitModel::none(0.0));
    spec.sample_rate = 100.0;
    spec.carry = tilt;
    let spec_file = SpecFile {
        seed: 3,
        noise: NoiseSpec::clean(),
        trajectories: vec![SpecEntry {
            id: "static".into(),
            subject: "s1".into(),
            seen: true,
            split: Split::Test,
            spec,
        }],
    };
    let spec_path = root.join("spec.toml");
    write_toml(&spec_path, &spec_file);
    let data = root.join("data");
    run_ok(pedloc().arg("synth").arg(&spec_path).arg("--out").arg(&data));

    let out = root.join("aligned");
    run_ok(
        pedloc()
            .arg("align")
            .arg(data.join("static_imu.csv"))
            .arg("--out")
            .arg(&out),
    );

    let (times, estimated) = read_quaternion_csv(out.join("static_imu_quat.csv")).unwrap();
    let truth = read_truth_csv(data.join("static_truth.csv")).unwrap();
    assert_eq!(times.len(), truth.len());
    let tail: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= 5.0).collect();
    assert!(!tail.is_empty());
    let est_tail: Vec<_> = tail.iter().map(|&i| estimated[i]).collect();
    let truth_tail: Vec<_> = tail.iter().map(|&i| truth[i].q).collect();
    let qae = metrics::qae(&est_tail, &truth_tail).unwrap();
    assert!(
        qae < 2f64.to_radians(),
        "attitude error after 5 s should be < 2°, got {}°",
        qae.to_degrees()
    );
}

/// Chaining noise-free predictions is pure bookkeeping: belief means are
/// exactly the running displacement sums and covariance entries the running
/// 2b² sums.
#[test]
fn chain_reproduces_summed_displacements_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let predictions = root.join("predictions.csv");
    fs::write(
        &predictions,
        "t0,t1,dpx,dpy,bx,by\n0,5,1.5,-0.25,0.5,0.5\n5,10,2.5,0.75,0.5,0.5\n10,15,-0.5,1,0.5,0.5\n",
    )
    .unwrap();

    let out = root.join("chained");
    run_ok(
        pedloc()
            .arg("chain")
            .arg(&predictions)
            .arg("--out")
            .arg(&out)
            .arg("--start")
            .arg("1,2"),
    );
    let text = fs::read_to_string(out.join("belief.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines,
        vec![
            "t,px,py,cxx,cxy,cyy",
            "0,1,2,0,0,0",
            "5,2.5,1.75,0.5,0,0.5",
            "10,5,2.5,1,0,1",
            "15,4.5,3.5,1.5,0,1.5",
        ]
    );
}

/// Fusing a tight position observation pulls the belief onto it; the
/// resulting trace stays deterministic under a fixed seed.
#[test]
fn fuse_pulls_the_belief_toward_observations() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let predictions = root.join("predictions.csv");
    fs::write(
        &predictions,
        "t0,t1,dpx,dpy,bx,by\n0,5,1,0,0.4,0.4\n5,10,1,0,0.4,0.4\n",
    )
    .unwrap();
    let observations = root.join("observations.csv");
    fs::write(
        &observations,
        "t,zx,zy,rxx,rxy,ryy\n10,5,3,0.0001,0,0.0001\n",
    )
    .unwrap();

    let out = root.join("fused");
    run_ok(
        pedloc()
            .arg("fuse")
            .arg(&predictions)
            .arg(&observations)
            .arg("--out")
            .arg(&out)
            .arg("--seed")
            .arg("42"),
    );
    let text = fs::read_to_string(out.join("belief.csv")).unwrap();
    let last = text.lines().last().unwrap();
    let fields: Vec<f64> = last.split(',').map(|v| v.parse().unwrap()).collect();
    // Dead reckoning alone would sit at (2, 0); the near-exact observation
    // at (5, 3) must dominate.
    assert!((fields[1] - 5.0).abs() < 0.05, "px pulled to 5, got {}", fields[1]);
    assert!((fields[2] - 3.0).abs() < 0.05, "py pulled to 3, got {}", fields[2]);

    let out2 = root.join("fused2");
    run_ok(
        pedloc()
            .arg("fuse")
            .arg(&predictions)
            .arg(&observations)
            .arg("--out")
            .arg(&out2)
            .arg("--seed")
            .arg("42"),
    );
    assert_eq!(
        fs::read(out.join("belief.csv")).unwrap(),
        fs::read(out2.join("belief.csv")).unwrap()
    );
}

/// The documented failure classes map to the documented exit codes.
#[test]
fn failures_use_documented_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    // Missing input file → I/O, exit 4.
    let code = run_code(
        pedloc()
            .arg("chain")
            .arg(root.join("nope.csv"))
            .arg("--out")
            .arg(root.join("out")),
    );
    assert_eq!(code, 4);

    // Malformed CSV → schema, exit 2.
    let bad = root.join("bad.csv");
    fs::write(&bad, "t0,t1,dpx,dpy,bx,by\n0,5,oops,0,0.5,0.5\n").unwrap();
    let code = run_code(
        pedloc()
            .arg("chain")
            .arg(&bad)
            .arg("--out")
            .arg(root.join("out")),
    );
    assert_eq!(code, 2);

    // Non-chainable predictions (gap between intervals) → schema, exit 2.
    let gappy = root.join("gappy.csv");
    fs::write(
        &gappy,
        "t0,t1,dpx,dpy,bx,by\n0,5,1,0,0.5,0.5\n6,10,1,0,0.5,0.5\n",
    )
    .unwrap();
    let code = run_code(
        pedloc()
            .arg("chain")
            .arg(&gappy)
            .arg("--out")
            .arg(root.join("out")),
    );
    assert_eq!(code, 2);

    // Unknown config keys → schema, exit 2.
    let cfg = root.join("bad_config.toml");
    fs::write(&cfg, "mystery_knob = 7\n").unwrap();
    let imu = root.join("missing_imu.csv");
    let code = run_code(
        pedloc()
            .arg("align")
            .arg(&imu)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(root.join("out")),
    );
    assert_eq!(code, 2);
}

/// `--seed` on `synth` overrides the spec's seed, changing the output;
/// passing the spec's own seed reproduces it.
#[test]
fn synth_seed_flag_overrides_spec_seed() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let spec = SpecFile {
        seed: 11,
        noise: NoiseSpec::consumer_grade(),
        trajectories: vec![walk_entry("w", Split::Train, 0.0)],
    };
    let spec_path = root.join("spec.toml");
    write_toml(&spec_path, &spec);

    let a: PathBuf = root.join("a");
    let b: PathBuf = root.join("b");
    let c: PathBuf = root.join("c");
    run_ok(pedloc().arg("synth").arg(&spec_path).arg("--out").arg(&a));
    run_ok(
        pedloc()
            .arg("synth")
            .arg(&spec_path)
            .arg("--seed")
            .arg("11")
            .arg("--out")
            .arg(&b),
    );
    run_ok(
        pedloc()
            .arg("synth")
            .arg(&spec_path)
            .arg("--seed")
            .arg("12")
            .arg("--out")
            .arg(&c),
    );
    let read = |p: &Path| fs::read(p.join("w_imu.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}
