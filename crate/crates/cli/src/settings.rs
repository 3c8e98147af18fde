//! Run settings resolved from defaults, an optional config file, then flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::Args;
use drivecast::config::{render, KeyValueFile};
use drivecast::data::{PipelineConfig, Scenario, SplitPolicy};
use drivecast::eval::AngleUnit;
use drivecast::models::{Architecture, ModelConfig};
use drivecast::training::{OptimizerKind, TrainConfig};
use drivecast::types::InputSpec;

use crate::CliError;

pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 32×32 frames and a narrow backbone.
    Desk,
    /// 224×224 frames and the full-width backbone.
    Full,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Desk => "desk",
            Preset::Full => "full",
        })
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(format!("unknown preset `{other}` (expected desk or full)")),
        }
    }
}

/// Comma-separated horizon offsets in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct Horizons(pub Vec<f64>);

impl fmt::Display for Horizons {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for Horizons {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad horizon `{p}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Horizons)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub preset: Preset,
    pub scenario: Scenario,
    pub seconds: f64,
    pub seed: u64,
    pub horizons: Horizons,
    pub flip_prob: f64,
    pub low_speed_threshold: f64,
    pub split_policy: SplitPolicy,
    pub bins: usize,
    pub arch: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub standardize: bool,
    pub checkpoint_every: usize,
    pub alpha_points: usize,
    pub units: AngleUnit,
    pub plots: bool,
}

impl Default for Settings {
    fn default() -> Self {
        let pipeline = PipelineConfig::desk();
        let train = TrainConfig::default();
        Settings {
            preset: Preset::Desk,
            scenario: Scenario::SmoothSine,
            seconds: 60.0,
            seed: 0,
            horizons: Horizons(pipeline.horizons_s),
            flip_prob: pipeline.flip_probability,
            low_speed_threshold: pipeline.low_speed_threshold_mps,
            split_policy: SplitPolicy::Ratio2To1Samples,
            bins: drivecast::data::stats::DEFAULT_BINS,
            arch: train.architecture,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: train.learning_rate,
            optimizer: train.optimizer,
            standardize: train.standardize_targets,
            checkpoint_every: 0,
            alpha_points: drivecast::eval::sweep::DEFAULT_ALPHA_POINTS,
            units: AngleUnit::Rad,
            plots: false,
        }
    }
}

/// Flags that override settings; each maps to the config key of the same
/// name with `-` read as `_`.
#[derive(Debug, Clone, Default, Args)]
pub struct SettingsArgs {
    /// Flat `key = value` file applied before flags
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Frame size and backbone width: desk or full
    #[arg(long, global = true)]
    pub preset: Option<Preset>,
    /// smooth_sine, lane_marker_coupled or imbalanced_steering
    #[arg(long, global = true)]
    pub scenario: Option<Scenario>,
    #[arg(long, global = true)]
    pub seconds: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Comma-separated horizon offsets in seconds
    #[arg(long, global = true)]
    pub horizons: Option<Horizons>,
    #[arg(long, global = true)]
    pub flip_prob: Option<f64>,
    /// Minimum mean CAN-window speed in m/s
    #[arg(long, global = true)]
    pub low_speed_threshold: Option<f64>,
    /// ratio_2_1_samples or ratio_70_30_segments
    #[arg(long, global = true)]
    pub split_policy: Option<SplitPolicy>,
    /// Histogram bins per signal
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// mh-ind-fc, mh-sim-fc or mh-sim-lstm
    #[arg(long, global = true)]
    pub arch: Option<Architecture>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    /// adam or sgd
    #[arg(long, global = true)]
    pub optimizer: Option<OptimizerKind>,
    /// Standardize CAN inputs and targets with train-split statistics
    #[arg(long, global = true)]
    pub standardize: Option<bool>,
    /// Checkpoint every N optimizer steps; 0 disables
    #[arg(long, global = true)]
    pub checkpoint_every: Option<usize>,
    #[arg(long, global = true)]
    pub alpha_points: Option<usize>,
    /// Steering unit in reports: rad or deg
    #[arg(long, global = true)]
    pub units: Option<AngleUnit>,
    /// Also write PNG charts next to the CSVs
    #[arg(long, global = true)]
    pub plots: Option<bool>,
}

const KEYS: [&str; 19] = [
    "preset",
    "scenario",
    "seconds",
    "seed",
    "horizons",
    "flip_prob",
    "low_speed_threshold",
    "split_policy",
    "bins",
    "arch",
    "epochs",
    "batch_size",
    "lr",
    "optimizer",
    "standardize",
    "checkpoint_every",
    "alpha_points",
    "units",
    "plots",
];

fn from_file<T>(file: &KeyValueFile, key: &str, slot: &mut T) -> Result<(), CliError>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    if let Some(v) = file.get::<T>(key).map_err(|e| CliError::Usage(e.to_string()))? {
        *slot = v;
    }
    Ok(())
}

fn from_flag<T: Clone>(flag: &Option<T>, slot: &mut T) {
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

impl Settings {
    pub fn resolve(args: &SettingsArgs) -> Result<Self, CliError> {
        let mut s = Settings::default();
        if let Some(path) = &args.config {
            let file = KeyValueFile::load(path).map_err(|e| CliError::Usage(e.to_string()))?;
            let unknown = file.unknown_keys(&KEYS);
            if !unknown.is_empty() {
                return Err(CliError::Usage(format!(
                    "{}: unknown keys {}",
                    path.display(),
                    unknown.join(", ")
                )));
            }
            s.apply_file(&file)?;
        }
        s.apply_flags(args);
        s.pipeline().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(s)
    }

    fn apply_file(&mut self, f: &KeyValueFile) -> Result<(), CliError> {
        from_file(f, "preset", &mut self.preset)?;
        from_file(f, "scenario", &mut self.scenario)?;
        from_file(f, "seconds", &mut self.seconds)?;
        from_file(f, "seed", &mut self.seed)?;
        from_file(f, "horizons", &mut self.horizons)?;
        from_file(f, "flip_prob", &mut self.flip_prob)?;
        from_file(f, "low_speed_threshold", &mut self.low_speed_threshold)?;
        from_file(f, "split_policy", &mut self.split_policy)?;
        from_file(f, "bins", &mut self.bins)?;
        from_file(f, "arch", &mut self.arch)?;
        from_file(f, "epochs", &mut self.epochs)?;
        from_file(f, "batch_size", &mut self.batch_size)?;
        from_file(f, "lr", &mut self.lr)?;
        from_file(f, "optimizer", &mut self.optimizer)?;
        from_file(f, "standardize", &mut self.standardize)?;
        from_file(f, "checkpoint_every", &mut self.checkpoint_every)?;
        from_file(f, "alpha_points", &mut self.alpha_points)?;
        from_file(f, "units", &mut self.units)?;
        from_file(f, "plots", &mut self.plots)
    }

    fn apply_flags(&mut self, a: &SettingsArgs) {
        from_flag(&a.preset, &mut self.preset);
        from_flag(&a.scenario, &mut self.scenario);
        from_flag(&a.seconds, &mut self.seconds);
        from_flag(&a.seed, &mut self.seed);
        from_flag(&a.horizons, &mut self.horizons);
        from_flag(&a.flip_prob, &mut self.flip_prob);
        from_flag(&a.low_speed_threshold, &mut self.low_speed_threshold);
        from_flag(&a.split_policy, &mut self.split_policy);
        from_flag(&a.bins, &mut self.bins);
        from_flag(&a.arch, &mut self.arch);
        from_flag(&a.epochs, &mut self.epochs);
        from_flag(&a.batch_size, &mut self.batch_size);
        from_flag(&a.lr, &mut self.lr);
        from_flag(&a.optimizer, &mut self.optimizer);
        from_flag(&a.standardize, &mut self.standardize);
        from_flag(&a.checkpoint_every, &mut self.checkpoint_every);
        from_flag(&a.alpha_points, &mut self.alpha_points);
        from_flag(&a.units, &mut self.units);
        from_flag(&a.plots, &mut self.plots);
    }

    pub fn pipeline(&self) -> PipelineConfig {
        let base = match self.preset {
            Preset::Desk => PipelineConfig::desk(),
            Preset::Full => PipelineConfig::default(),
        };
        PipelineConfig {
            horizons_s: self.horizons.0.clone(),
            flip_probability: self.flip_prob,
            low_speed_threshold_mps: self.low_speed_threshold,
            ..base
        }
    }

    /// Architecture preset adapted to the store's input shape.
    pub fn model_config(&self, input: InputSpec) -> ModelConfig {
        let mut cfg = match self.preset {
            Preset::Desk => ModelConfig::desk(self.arch),
            Preset::Full => ModelConfig::full(self.arch),
        };
        cfg.input = input;
        cfg
    }

    pub fn train_config(&self, max_steering_rad: f64) -> TrainConfig {
        TrainConfig {
            architecture: self.arch,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            optimizer: self.optimizer,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            horizons_s: self.horizons.0.clone(),
            flip_probability: self.flip_prob,
            standardize_targets: self.standardize,
            max_steering_rad,
            ..TrainConfig::default()
        }
    }

    pub fn render(&self) -> String {
        render(&[
            ("preset", self.preset.to_string()),
            ("scenario", self.scenario.to_string()),
            ("seconds", self.seconds.to_string()),
            ("seed", self.seed.to_string()),
            ("horizons", self.horizons.to_string()),
            ("flip_prob", self.flip_prob.to_string()),
            ("low_speed_threshold", self.low_speed_threshold.to_string()),
            ("split_policy", self.split_policy.to_string()),
            ("bins", self.bins.to_string()),
            ("arch", self.arch.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("lr", self.lr.to_string()),
            ("optimizer", self.optimizer.to_string()),
            ("standardize", self.standardize.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("alpha_points", self.alpha_points.to_string()),
            ("units", self.units.to_string()),
            ("plots", self.plots.to_string()),
        ])
    }

    /// Echoes the resolved settings into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(RESOLVED_CONFIG_FILE);
        std::fs::write(&path, self.render()).map_err(|e| CliError::io(&path, e))
    }
}
