//! Windowing aligned CAN and video streams into samples.

use serde::{Deserialize, Serialize};

use crate::data::can::{interpolate_at, parse_can_log, resample_can};
use crate::data::frames::{load_frame, parse_frames_csv};
use crate::data::manifest::RecordingManifest;
use crate::error::{Error, Result};
use crate::types::{
    seconds_to_nanos, validate_sample, CanWindow, HorizonTargets, InputSpec, Sample, SampleContract, VideoClip,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k_in: usize,
    pub n_frames: usize,
    pub can_rate_hz: f64,
    pub video_fps: f64,
    pub horizons_s: Vec<f64>,
    pub flip_probability: f64,
    pub low_speed_threshold_mps: f64,
    pub frame_height: usize,
    pub frame_width: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            k_in: 10,
            n_frames: 10,
            can_rate_hz: 10.0,
            video_fps: 12.5,
            horizons_s: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            flip_probability: 0.5,
            low_speed_threshold_mps: 2.0,
            frame_height: 224,
            frame_width: 224,
        }
    }
}

impl PipelineConfig {
    /// Defaults with 32×32 frames.
    pub fn desk() -> Self {
        PipelineConfig {
            frame_height: 32,
            frame_width: 32,
            ..Self::default()
        }
    }

    pub fn input_spec(&self) -> InputSpec {
        InputSpec {
            k_in: self.k_in,
            n_frames: self.n_frames,
            frame_height: self.frame_height,
            frame_width: self.frame_width,
            k_out: self.horizons_s.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.k_in == 0 || self.n_frames == 0 || self.frame_height == 0 || self.frame_width == 0 {
            problems.push("k_in, n_frames and frame size must be positive".to_string());
        }
        if !(self.can_rate_hz > 0.0 && self.can_rate_hz.is_finite()) {
            problems.push(format!("can_rate_hz must be positive, got {}", self.can_rate_hz));
        }
        if !(self.video_fps > 0.0 && self.video_fps.is_finite()) {
            problems.push(format!("video_fps must be positive, got {}", self.video_fps));
        }
        if self.horizons_s.is_empty()
            || self.horizons_s.iter().any(|h| !(*h > 0.0 && h.is_finite()))
            || self.horizons_s.windows(2).any(|w| w[1] <= w[0])
        {
            problems.push(format!(
                "horizons must be nonempty, positive and strictly increasing, got {:?}",
                self.horizons_s
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            problems.push(format!("flip_probability must lie in [0, 1], got {}", self.flip_probability));
        }
        if !(self.low_speed_threshold_mps >= 0.0) {
            problems.push(format!(
                "low_speed_threshold must be non-negative, got {}",
                self.low_speed_threshold_mps
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Why anchors were not turned into samples.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildDiagnostics {
    pub grid_points: usize,
    pub insufficient_can_history: usize,
    pub insufficient_future: usize,
    pub insufficient_video: usize,
    pub invalid: usize,
    pub emitted: usize,
}

impl BuildDiagnostics {
    pub fn dropped(&self) -> usize {
        self.grid_points - self.emitted
    }
}

/// Windows one recording into samples, one per admissible anchor on the
/// resampled CAN grid. Truncated windows are dropped and counted.
pub fn build_samples(
    manifest: &RecordingManifest,
    config: &PipelineConfig,
) -> Result<(Vec<Sample>, BuildDiagnostics)> {
    config.validate()?;
    let raw = parse_can_log(&manifest.can_csv_path())?;
    let frames = parse_frames_csv(&manifest.frames_csv_path(), &manifest.base_dir)?;
    let mut diag = BuildDiagnostics::default();
    if raw.len() < 2 || frames.is_empty() {
        return Ok((Vec::new(), diag));
    }
    let grid = resample_can(&raw, config.can_rate_hz)?;
    diag.grid_points = grid.len();
    let last_raw = raw[raw.len() - 1].timestamp_ns;
    let horizon_ns: Vec<i64> = config.horizons_s.iter().map(|&h| seconds_to_nanos(h)).collect();
    let max_horizon = *horizon_ns.last().unwrap();
    let contract = SampleContract {
        input: config.input_spec(),
        max_steering_rad: manifest.max_steering_rad,
    };
    let (h, w) = (config.frame_height, config.frame_width);
    let plane = h * w;
    let mut cache: Vec<Option<Vec<f32>>> = vec![None; frames.len()];

    let mut samples = Vec::new();
    for (i, anchor) in grid.iter().enumerate() {
        let t = anchor.timestamp_ns;
        if i + 1 < config.k_in {
            diag.insufficient_can_history += 1;
            continue;
        }
        if t + max_horizon > last_raw {
            diag.insufficient_future += 1;
            continue;
        }
        // index one past the latest frame not after t
        let end = frames.partition_point(|f| f.timestamp_ns <= t);
        if end < config.n_frames {
            diag.insufficient_video += 1;
            continue;
        }
        let first = end - config.n_frames;
        let mut clip = vec![0.0f32; 3 * config.n_frames * plane];
        for (f, idx) in (first..end).enumerate() {
            if cache[idx].is_none() {
                cache[idx] = Some(load_frame(&frames[idx].path, h, w)?);
            }
            let data = cache[idx].as_ref().unwrap();
            for c in 0..3 {
                let dst = (c * config.n_frames + f) * plane;
                clip[dst..dst + plane].copy_from_slice(&data[c * plane..(c + 1) * plane]);
            }
        }
        // frames before `first` are never needed again
        if first > 0 {
            cache[first - 1] = None;
        }
        let targets = horizon_ns
            .iter()
            .map(|&dh| {
                let s = interpolate_at(&raw, t + dh).expect("future within raw range");
                [s.speed_mps, s.steering_rad]
            })
            .collect();
        let sample = Sample {
            clip: VideoClip {
                frames: clip,
                n_frames: config.n_frames,
                height: h,
                width: w,
                rate_fps: config.video_fps,
                end_timestamp_ns: frames[end - 1].timestamp_ns,
            },
            can: CanWindow {
                states: grid[i + 1 - config.k_in..=i].to_vec(),
                rate_hz: config.can_rate_hz,
            },
            targets: HorizonTargets {
                values: targets,
                horizons_s: config.horizons_s.clone(),
            },
            anchor_timestamp_ns: t,
            segment_id: manifest.segment_id.clone(),
        };
        if validate_sample(&sample, &contract).is_empty() {
            samples.push(sample);
        } else {
            diag.invalid += 1;
        }
    }
    diag.emitted = samples.len();
    Ok((samples, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic_recording, Scenario};

    fn tiny() -> PipelineConfig {
        PipelineConfig {
            frame_height: 8,
            frame_width: 8,
            ..PipelineConfig::default()
        }
    }

    /// Independent enumeration of admissible anchors on the 10 Hz grid.
    fn oracle_count(can_rows: usize, frame_count: usize, cfg: &PipelineConfig) -> usize {
        let can_t: Vec<f64> = (0..can_rows).map(|i| i as f64 / cfg.can_rate_hz).collect();
        let frame_t: Vec<f64> = (0..frame_count).map(|i| i as f64 / cfg.video_fps).collect();
        let last = *can_t.last().unwrap();
        let max_h = cfg.horizons_s.last().unwrap();
        let mut count = 0;
        for (i, &t) in can_t.iter().enumerate() {
            let history = i + 1 >= cfg.k_in;
            let future = t + max_h <= last + 1e-9;
            let frames_before = frame_t.iter().filter(|&&ft| ft <= t + 1e-9).count();
            if history && future && frames_before >= cfg.n_frames {
                count += 1;
            }
        }
        count
    }

    #[test]
    fn sample_count_matches_enumeration() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let manifest = generate_synthetic_recording(&cfg, Scenario::SmoothSine, 10.0, 3, dir.path()).unwrap();
        let (samples, diag) = build_samples(&manifest, &cfg).unwrap();
        assert_eq!(samples.len(), oracle_count(100, 125, &cfg));
        assert_eq!(diag.emitted, samples.len());
        assert_eq!(diag.invalid, 0);
        // usable span: 10 s minus 1 s of history minus 0.5 s of future
        let formula = ((10.0 - 1.0f64.max(0.8) - 0.5) * 10.0f64).floor() as i64;
        assert!((samples.len() as i64 - formula).abs() <= 1);

        let contract = SampleContract {
            input: cfg.input_spec(),
            max_steering_rad: manifest.max_steering_rad,
        };
        for s in &samples {
            assert!(validate_sample(s, &contract).is_empty());
            let lag = s.anchor_timestamp_ns - s.clip.end_timestamp_ns;
            assert!((0..80_000_000).contains(&lag));
        }
    }

    #[test]
    fn targets_and_window_follow_the_grid() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let manifest = generate_synthetic_recording(&cfg, Scenario::SmoothSine, 4.0, 1, dir.path()).unwrap();
        let raw = parse_can_log(&manifest.can_csv_path()).unwrap();
        let (samples, _) = build_samples(&manifest, &cfg).unwrap();
        let s = &samples[0];
        assert_eq!(s.anchor_timestamp_ns, 900_000_000);
        assert_eq!(s.can.states, raw[..10].to_vec());
        // horizons land on raw rows exactly at 10 Hz
        for (j, row) in s.targets.values.iter().enumerate() {
            assert_eq!(row[0], raw[10 + j].speed_mps);
            assert_eq!(row[1], raw[10 + j].steering_rad);
        }
        assert_eq!(s.clip.end_timestamp_ns, 880_000_000);
    }

    #[test]
    fn short_recording_yields_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let manifest = generate_synthetic_recording(&cfg, Scenario::SmoothSine, 1.4, 0, dir.path()).unwrap();
        let (samples, diag) = build_samples(&manifest, &cfg).unwrap();
        assert!(samples.is_empty());
        assert_eq!(diag.dropped(), diag.grid_points);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        cfg.flip_probability = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.horizons_s = vec![0.2, 0.1];
        assert!(cfg.validate().is_err());
        let mut cfg = PipelineConfig::default();
        cfg.video_fps = 0.0;
        assert!(cfg.validate().is_err());
    }
}
