//! One function per subcommand. Each writes its outputs and the resolved
//! settings into `out`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use drivecast::data::{
    build_samples, dataset_stats, discover_manifests, filter_low_speed, generate_synthetic_recording,
    split_dataset, SampleStore,
};
use drivecast::data::manifest::MANIFEST_FILE;
use drivecast::eval::plot::{plot_bars, plot_curve};
use drivecast::eval::report::PredictionSet;
use drivecast::eval::{ablate_vision, biased_baseline, sweep_alpha, AlphaCurve, EvalReport, ReportMetadata};
use drivecast::models::{Architecture, ModelParameters};
use drivecast::training::train;
use drivecast::types::{SIGNALS, STEERING};

use crate::settings::Settings;
use crate::CliError;

pub const TRAIN_STORE: &str = "train.bin";
pub const TEST_STORE: &str = "test.bin";
pub const MODEL_FILE: &str = "model.bin";

const PLOT_SIZE: (u32, u32) = (480, 320);

/// `path` itself when it is a file, otherwise `path/default_name`.
fn store_path(path: &Path, default_name: &str) -> PathBuf {
    if path.is_dir() {
        path.join(default_name)
    } else {
        path.to_path_buf()
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn plot_sweep(path: &Path, curve: &AlphaCurve) -> Result<(), CliError> {
    let xs: Vec<f64> = curve.points.iter().map(|p| p.alpha).collect();
    let ys: Vec<Option<f64>> = curve.points.iter().map(|p| p.mae).collect();
    Ok(plot_curve(path, &xs, &ys, PLOT_SIZE.0, PLOT_SIZE.1)?)
}

pub fn synth(s: &Settings, out: &Path) -> Result<PathBuf, CliError> {
    generate_synthetic_recording(&s.pipeline(), s.scenario, s.seconds, s.seed, out)?;
    s.write(out)?;
    Ok(out.join(MANIFEST_FILE))
}

pub struct PrepareSummary {
    pub train: usize,
    pub test: usize,
}

pub fn prepare(s: &Settings, data: &Path, out: &Path) -> Result<PrepareSummary, CliError> {
    let pipeline = s.pipeline();
    let manifests = discover_manifests(data)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let mut report = String::from("recording,grid_points,insufficient_can_history,insufficient_future,insufficient_video,invalid,emitted\n");
    let mut samples = Vec::new();
    for m in &manifests {
        let (built, d) = build_samples(m, &pipeline)?;
        let _ = writeln!(
            report,
            "{},{},{},{},{},{},{}",
            m.segment_id.as_deref().unwrap_or(&m.dataset_name),
            d.grid_points,
            d.insufficient_can_history,
            d.insufficient_future,
            d.insufficient_video,
            d.invalid,
            d.emitted
        );
        samples.extend(built);
    }
    let built = samples.len();
    let samples = filter_low_speed(samples, pipeline.low_speed_threshold_mps);
    let _ = writeln!(report, "low_speed_filtered,{},,,,,{}", built, samples.len());
    write_text(&out.join("prepare_summary.csv"), &report)?;

    let dataset = manifests[0].dataset_name.clone();
    let max_steering = manifests.iter().map(|m| m.max_steering_rad).fold(0.0, f64::max);
    let store = |samples| SampleStore::new(dataset.clone(), max_steering, pipeline.clone(), samples);

    if samples.is_empty() {
        eprintln!(
            "warning: no samples remain after windowing and the {} m/s low-speed filter; writing empty stores",
            pipeline.low_speed_threshold_mps
        );
        store(Vec::new()).save(&out.join(TRAIN_STORE))?;
        store(Vec::new()).save(&out.join(TEST_STORE))?;
        s.write(out)?;
        return Ok(PrepareSummary { train: 0, test: 0 });
    }

    let stats = dataset_stats(&samples, s.bins, max_steering)?;
    stats.write_csv(&out.join("stats.csv"))?;
    if s.plots {
        plot_bars(&out.join("steering_histogram.png"), &stats.steering.log_counts(), PLOT_SIZE.0, PLOT_SIZE.1)?;
        plot_bars(&out.join("speed_histogram.png"), &stats.speed.log_counts(), PLOT_SIZE.0, PLOT_SIZE.1)?;
    }

    let (train_set, test_set) = split_dataset(samples, s.split_policy, s.seed)?;
    let summary = PrepareSummary {
        train: train_set.len(),
        test: test_set.len(),
    };
    store(train_set).save(&out.join(TRAIN_STORE))?;
    store(test_set).save(&out.join(TEST_STORE))?;
    s.write(out)?;
    Ok(summary)
}

fn load_nonempty(path: &Path) -> Result<SampleStore, CliError> {
    let store = SampleStore::load(path)?;
    if store.samples.is_empty() {
        return Err(CliError::Run(drivecast::Error::Empty("the sample store holds no samples")));
    }
    Ok(store)
}

fn check_horizons(s: &Settings, store: &SampleStore) -> Result<(), CliError> {
    if s.horizons.0 != store.pipeline.horizons_s {
        return Err(CliError::Usage(format!(
            "--horizons {} differs from the store's horizons {:?}",
            s.horizons, store.pipeline.horizons_s
        )));
    }
    Ok(())
}

pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub first_loss: f64,
    pub final_loss: f64,
}

pub fn train_model(s: &Settings, data: &Path, out: &Path) -> Result<TrainSummary, CliError> {
    let store = load_nonempty(&store_path(data, TRAIN_STORE))?;
    check_horizons(s, &store)?;
    let model_cfg = s.model_config(store.input_spec());
    model_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let mut train_cfg = s.train_config(store.max_steering_rad);
    if s.checkpoint_every > 0 {
        train_cfg.checkpoint_dir = Some(out.join("checkpoints"));
    }
    train_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;

    let (params, log) = train(&model_cfg, &store.samples, &train_cfg)?;
    let checkpoint = out.join(MODEL_FILE);
    params.save(&checkpoint)?;
    log.write_csv(&out.join("train_log.csv"))?;
    if s.plots {
        let xs: Vec<f64> = (1..=log.epoch_losses.len()).map(|e| e as f64).collect();
        let ys: Vec<Option<f64>> = log.epoch_losses.iter().map(|&l| Some(l)).collect();
        plot_curve(&out.join("train_loss.png"), &xs, &ys, PLOT_SIZE.0, PLOT_SIZE.1)?;
    }
    s.write(out)?;
    Ok(TrainSummary {
        checkpoint,
        first_loss: log.first_epoch_loss().unwrap_or(f64::NAN),
        final_loss: log.final_epoch_loss().unwrap_or(f64::NAN),
    })
}

fn load_matching(checkpoint: &Path, store: &SampleStore) -> Result<ModelParameters, CliError> {
    let params = ModelParameters::load(checkpoint)?;
    let expected = params.input_fingerprint();
    let actual = store.input_spec().fingerprint();
    if expected != actual {
        return Err(drivecast::Error::FingerprintMismatch { expected, actual }.into());
    }
    Ok(params)
}

fn predictions_csv(set: &PredictionSet) -> String {
    let mut out = String::from("sample_id,horizon_index,signal,predicted,target\n");
    for r in &set.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.sample_id, r.horizon_index, SIGNALS[r.signal], r.predicted, r.target
        );
    }
    out
}

pub struct EvalSummary {
    pub steering_mae: f64,
    pub speed_mae: f64,
    pub unit: String,
}

pub fn evaluate(s: &Settings, checkpoint: &Path, data: &Path, out: &Path) -> Result<EvalSummary, CliError> {
    let store = load_nonempty(&store_path(data, TEST_STORE))?;
    let params = load_matching(checkpoint, &store)?;
    let set = PredictionSet::from_model(&params, &store.samples)?;
    let metadata = ReportMetadata {
        dataset: store.dataset_name.clone(),
        model_fingerprint: params.fingerprint(),
        max_steering_rad: params.max_steering_rad,
        steering_unit: s.units,
        samples: store.samples.len(),
        notes: Vec::new(),
    };
    let report = EvalReport::from_predictions(&set, metadata, s.alpha_points)?;
    report.write(out, "report")?;
    write_text(&out.join("predictions.csv"), &predictions_csv(&set))?;

    let (_, targets) = set.columns(STEERING, None);
    let baseline = biased_baseline(&targets, params.max_steering_rad, s.alpha_points)?;
    baseline.sweep.scaled(s.units.factor()).write_csv(&out.join("baseline_sweep.csv"))?;
    if s.plots {
        plot_sweep(&out.join("report_sweep.png"), &report.sweep)?;
    }
    s.write(out)?;
    Ok(EvalSummary {
        steering_mae: report.steering_mae(),
        speed_mae: report.speed_mae(),
        unit: s.units.to_string(),
    })
}

/// Steering MAE@α of a checkpoint, or of the constant-zero predictor when
/// no checkpoint is given.
pub fn sweep(s: &Settings, checkpoint: Option<&Path>, data: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let store = load_nonempty(&store_path(data, TEST_STORE))?;
    let (set, max_steering) = match checkpoint {
        Some(path) => {
            let params = load_matching(path, &store)?;
            (PredictionSet::from_model(&params, &store.samples)?, params.max_steering_rad)
        }
        None => (PredictionSet::zero(&store.samples), store.max_steering_rad),
    };
    let (p, t) = set.columns(STEERING, None);
    let curve = sweep_alpha(&p, &t, max_steering, s.alpha_points)?.scaled(s.units.factor());
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let path = out.join("sweep.csv");
    curve.write_csv(&path)?;
    if s.plots {
        plot_sweep(&out.join("sweep.png"), &curve)?;
    }
    s.write(out)?;
    Ok(path)
}

/// Reports stay in radians; the ratio is unit-free.
pub fn ablate(s: &Settings, data: &Path, out: &Path) -> Result<[f64; 2], CliError> {
    if s.arch != Architecture::MhSimLstm {
        return Err(CliError::Usage(format!("vision ablation needs --arch mh-sim-lstm, got {}", s.arch)));
    }
    if !data.is_dir() {
        return Err(CliError::Usage(format!(
            "{} must be a prepared directory holding {TRAIN_STORE} and {TEST_STORE}",
            data.display()
        )));
    }
    let train_store = load_nonempty(&data.join(TRAIN_STORE))?;
    let test_store = load_nonempty(&data.join(TEST_STORE))?;
    check_horizons(s, &train_store)?;
    let model_cfg = s.model_config(train_store.input_spec());
    model_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let train_cfg = s.train_config(train_store.max_steering_rad);
    train_cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let report = ablate_vision(
        &train_store.samples,
        &test_store.samples,
        &model_cfg,
        &train_cfg,
        &train_store.dataset_name,
        s.alpha_points,
    )?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_text(&out.join("ablation.csv"), &report.to_csv())?;
    report.with_vision.write(out, "with_vision")?;
    report.without_vision.write(out, "without_vision")?;
    s.write(out)?;
    Ok(report.ratio)
}
