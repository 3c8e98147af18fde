use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use drivecast::data::SampleStore;
use drivecast::models::ModelParameters;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn drivecast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drivecast"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = drivecast(args);
    assert!(
        out.status.success(),
        "drivecast {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn tree_digest(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files: Vec<PathBuf> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push(path);
            }
        }
    }
    files.sort();
    files
        .into_iter()
        .map(|f| {
            let hash = Sha256::digest(std::fs::read(&f).unwrap()).to_vec();
            (f.strip_prefix(dir).unwrap().to_path_buf(), hash)
        })
        .collect()
}

/// Synthesizes and prepares a recording, returning the prepared directory.
fn prepared(tmp: &TempDir, scenario: &str, seconds: &str, extra: &[&str]) -> PathBuf {
    let rec = tmp.path().join(format!("rec_{scenario}"));
    let prep = tmp.path().join(format!("prep_{scenario}"));
    ok(&[&["synth", "--scenario", scenario, "--seconds", seconds, "--seed", "3", "--out", p(&rec)], extra].concat());
    ok(&[&["prepare", "--data", p(&rec), "--seed", "3", "--out", p(&prep)], extra].concat());
    prep
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = drivecast(&["synth", "--scenario", "foo", "--out", p(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("foo"));
}

#[test]
fn unknown_architecture_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let prep = prepared(&tmp, "smooth_sine", "12", &[]);
    let out = drivecast(&["train", "--data", p(&prep), "--arch", "nope", "--out", p(&tmp.path().join("t"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_writes_expected_counts_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for dir in [&a, &b] {
        ok(&["synth", "--scenario", "lane_marker_coupled", "--seconds", "60", "--seed", "7", "--out", p(dir)]);
    }
    assert_eq!(read_csv(&a.join("can.csv")).len(), 600);
    assert_eq!(read_csv(&a.join("frames.csv")).len(), 750);
    assert_eq!(std::fs::read_dir(a.join("frames")).unwrap().count(), 750);
    assert_eq!(tree_digest(&a), tree_digest(&b));
}

#[test]
fn prepare_splits_two_to_one_and_writes_stats() {
    let tmp = TempDir::new().unwrap();
    let prep = prepared(&tmp, "smooth_sine", "60", &["--bins", "20"]);
    let train = SampleStore::load(&prep.join("train.bin")).unwrap();
    let test = SampleStore::load(&prep.join("test.bin")).unwrap();
    let n = train.samples.len() + test.samples.len();
    assert!(n > 0);
    assert!(train.samples.len().abs_diff(2 * n / 3) <= 1, "{} of {n}", train.samples.len());
    assert_eq!(read_csv(&prep.join("stats.csv")).len(), 2 * 20);
    let config = std::fs::read_to_string(prep.join("resolved_config.txt")).unwrap();
    assert!(config.contains("bins = 20"));
}

#[test]
fn prepare_warns_when_every_sample_is_filtered() {
    let tmp = TempDir::new().unwrap();
    let rec = tmp.path().join("rec");
    let prep = tmp.path().join("prep");
    ok(&["synth", "--seconds", "12", "--out", p(&rec)]);
    let out = ok(&["prepare", "--data", p(&rec), "--low-speed-threshold", "1e9", "--out", p(&prep)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(SampleStore::load(&prep.join("train.bin")).unwrap().samples.is_empty());
}

#[test]
fn zero_learning_rate_leaves_the_loss_unchanged() {
    let tmp = TempDir::new().unwrap();
    let prep = prepared(&tmp, "smooth_sine", "12", &[]);
    let run = tmp.path().join("run");
    ok(&[
        "train", "--data", p(&prep), "--arch", "mh-sim-fc", "--epochs", "3", "--lr", "0", "--flip-prob", "0",
        "--batch-size", "1000", "--out", p(&run),
    ]);
    let losses: Vec<f64> = read_csv(&run.join("train_log.csv")).iter().map(|r| r[2].parse().unwrap()).collect();
    assert_eq!(losses.len(), 3);
    for l in &losses[1..] {
        assert!((l - losses[0]).abs() <= 1e-12 * losses[0].abs(), "{losses:?}");
    }
}

#[test]
fn memorized_set_evaluates_below_one_hundredth() {
    let tmp = TempDir::new().unwrap();
    let rec = tmp.path().join("rec");
    let prep = tmp.path().join("prep");
    let run = tmp.path().join("run");
    let eval = tmp.path().join("eval");
    ok(&["synth", "--seconds", "3.5", "--seed", "11", "--out", p(&rec)]);
    ok(&["prepare", "--data", p(&rec), "--split-policy", "ratio_70_30_segments", "--out", p(&prep)]);
    let store = prep.join("train.bin");
    assert_eq!(SampleStore::load(&store).unwrap().samples.len(), 21);
    ok(&[
        "train", "--data", p(&store), "--arch", "mh-sim-fc", "--epochs", "200", "--seed", "1", "--flip-prob", "0",
        "--standardize", "true", "--out", p(&run),
    ]);
    ok(&["evaluate", "--checkpoint", p(&run.join("model.bin")), "--data", p(&store), "--out", p(&eval)]);
    let rows = read_csv(&eval.join("report.csv"));
    let mae = |signal: &str| -> f64 {
        rows.iter()
            .find(|r| r[0] == signal && r[1] == "all" && r[2] == "mae")
            .map(|r| r[3].parse().unwrap())
            .unwrap()
    };
    assert!(mae("steering") <= 1e-2, "steering MAE {}", mae("steering"));
    assert!(mae("speed") <= 1e-2, "speed MAE {}", mae("speed"));
}

#[test]
fn fingerprint_mismatch_names_both_fingerprints() {
    let tmp = TempDir::new().unwrap();
    let prep = prepared(&tmp, "smooth_sine", "12", &[]);
    let other = tmp.path().join("other");
    ok(&["prepare", "--data", p(&tmp.path().join("rec_smooth_sine")), "--horizons", "0.1,0.2", "--out", p(&other)]);
    let run = tmp.path().join("run");
    ok(&["train", "--data", p(&prep), "--arch", "mh-sim-fc", "--epochs", "1", "--out", p(&run)]);

    let model = run.join("model.bin");
    let out = drivecast(&["evaluate", "--checkpoint", p(&model), "--data", p(&other), "--out", p(&tmp.path().join("e"))]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    let expected = ModelParameters::load(&model).unwrap().input_fingerprint();
    let actual = SampleStore::load(&other.join("test.bin")).unwrap().input_spec().fingerprint();
    assert_ne!(expected, actual);
    assert!(stderr.contains(&expected) && stderr.contains(&actual), "{stderr}");
}

#[test]
fn zero_predictor_sweep_is_non_decreasing() {
    let tmp = TempDir::new().unwrap();
    let prep = prepared(&tmp, "imbalanced_steering", "60", &[]);
    let out = tmp.path().join("sweep");
    ok(&["sweep-alpha", "--data", p(&prep), "--out", p(&out)]);
    let maes: Vec<f64> = read_csv(&out.join("sweep.csv"))
        .iter()
        .filter(|r| r[2] != "0")
        .map(|r| r[1].parse().unwrap())
        .collect();
    assert!(maes.len() > 1);
    for w in maes.windows(2) {
        assert!(w[1] >= w[0] - 1e-12, "{w:?}");
    }
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("settings.txt");
    std::fs::write(&config, "seconds = 4\nseed = 9\nscenario = imbalanced_steering\n").unwrap();
    let rec = tmp.path().join("rec");
    ok(&["synth", "--config", p(&config), "--seed", "2", "--out", p(&rec)]);
    let resolved = std::fs::read_to_string(rec.join("resolved_config.txt")).unwrap();
    assert!(resolved.contains("seconds = 4\n"));
    assert!(resolved.contains("seed = 2\n"));
    assert!(resolved.contains("scenario = imbalanced_steering\n"));
    assert_eq!(read_csv(&rec.join("can.csv")).len(), 40);
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("settings.txt");
    std::fs::write(&config, "colour = blue\n").unwrap();
    let out = drivecast(&["synth", "--config", p(&config), "--out", p(&tmp.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));
}
