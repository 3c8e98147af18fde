//! Shared domain types and their dimensional contracts.
//!
//! Units are fixed throughout the crate: timestamps in nanoseconds, speed in
//! m/s, steering in radians, pixels in `[0, 1]`. Degrees only appear at
//! reporting boundaries.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Column order of every `(k_out, s_out)` matrix.
pub const SPEED: usize = 0;
pub const STEERING: usize = 1;
pub const SIGNALS: [&str; 2] = ["speed", "steering"];

pub const NANOS_PER_SECOND: f64 = 1e9;

pub fn seconds_to_nanos(seconds: f64) -> i64 {
    (seconds * NANOS_PER_SECOND).round() as i64
}

pub fn nanos_to_seconds(nanos: i64) -> f64 {
    nanos as f64 / NANOS_PER_SECOND
}

/// One CAN-bus reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorState {
    pub timestamp_ns: i64,
    pub speed_mps: f64,
    pub steering_rad: f64,
}

impl SensorState {
    pub fn new(timestamp_ns: i64, speed_mps: f64, steering_rad: f64) -> Self {
        SensorState {
            timestamp_ns,
            speed_mps,
            steering_rad,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanWindow {
    pub states: Vec<SensorState>,
    pub rate_hz: f64,
}

impl CanWindow {
    pub fn last_timestamp(&self) -> Option<i64> {
        self.states.last().map(|s| s.timestamp_ns)
    }

    pub fn mean_speed(&self) -> f64 {
        if self.states.is_empty() {
            return 0.0;
        }
        self.states.iter().map(|s| s.speed_mps).sum::<f64>() / self.states.len() as f64
    }
}

/// Channel-first RGB clip `(3, n, H, W)`, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoClip {
    pub frames: Vec<f32>,
    pub n_frames: usize,
    pub height: usize,
    pub width: usize,
    pub rate_fps: f64,
    pub end_timestamp_ns: i64,
}

impl VideoClip {
    pub fn index(&self, channel: usize, frame: usize, row: usize, col: usize) -> usize {
        ((channel * self.n_frames + frame) * self.height + row) * self.width + col
    }

    pub fn shape(&self) -> [usize; 4] {
        [3, self.n_frames, self.height, self.width]
    }
}

/// Future `(speed, steering)` per horizon, horizons in seconds after the anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonTargets {
    pub values: Vec<[f64; 2]>,
    pub horizons_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub clip: VideoClip,
    pub can: CanWindow,
    pub targets: HorizonTargets,
    pub anchor_timestamp_ns: i64,
    #[serde(default)]
    pub segment_id: Option<String>,
}

impl Sample {
    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Input dimensions as observed on this sample.
    pub fn input_spec(&self) -> InputSpec {
        InputSpec {
            k_in: self.can.states.len(),
            n_frames: self.clip.n_frames,
            frame_height: self.clip.height,
            frame_width: self.clip.width,
            k_out: self.targets.values.len(),
        }
    }
}

/// Encoder outputs: `r_c` (flat) and `r_v` stored temporal-major `(T_v, C_v)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub r_c: Vec<f64>,
    pub r_v: Vec<f64>,
    pub t_v: usize,
    pub c_v: usize,
}

impl Representation {
    pub fn fused_len(&self) -> usize {
        self.r_c.len() + self.t_v * self.c_v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastOutput {
    pub values: Vec<[f64; 2]>,
}

impl ForecastOutput {
    pub fn zeros(k_out: usize) -> Self {
        ForecastOutput {
            values: vec![[0.0; 2]; k_out],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.values.len(), 2)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }
}

/// Dimensions a model is built for; samples must agree with it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputSpec {
    pub k_in: usize,
    pub n_frames: usize,
    pub frame_height: usize,
    pub frame_width: usize,
    pub k_out: usize,
}

impl Default for InputSpec {
    fn default() -> Self {
        InputSpec {
            k_in: 10,
            n_frames: 10,
            frame_height: 224,
            frame_width: 224,
            k_out: 5,
        }
    }
}

impl InputSpec {
    pub fn fingerprint(&self) -> String {
        fingerprint_of(&format!(
            "k_in={};n={};h={};w={};k_out={}",
            self.k_in, self.n_frames, self.frame_height, self.frame_width, self.k_out
        ))
    }
}

pub(crate) fn fingerprint_of(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// What a well-formed sample must satisfy for a given dataset and model input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleContract {
    pub input: InputSpec,
    pub max_steering_rad: f64,
}

/// Lists every violated invariant of `sample`. Empty when valid.
pub fn validate_sample(sample: &Sample, contract: &SampleContract) -> Vec<String> {
    let mut violations = Vec::new();
    let spec = &contract.input;
    let clip = &sample.clip;

    if clip.n_frames != spec.n_frames {
        violations.push(format!(
            "clip frame count {} != expected {}",
            clip.n_frames, spec.n_frames
        ));
    }
    if clip.height != spec.frame_height || clip.width != spec.frame_width {
        violations.push(format!(
            "clip frame size {}x{} != expected {}x{}",
            clip.height, clip.width, spec.frame_height, spec.frame_width
        ));
    }
    if clip.frames.len() != 3 * clip.n_frames * clip.height * clip.width {
        violations.push(format!(
            "clip buffer length {} does not match shape {:?}",
            clip.frames.len(),
            clip.shape()
        ));
    }
    if !clip.frames.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
        violations.push("clip pixel values must be finite and in [0, 1]".to_string());
    }
    if !(clip.rate_fps > 0.0) {
        violations.push(format!("clip frame rate {} must be positive", clip.rate_fps));
    }

    let can = &sample.can;
    if can.states.len() != spec.k_in {
        violations.push(format!(
            "CAN window length {} != expected k_in {}",
            can.states.len(),
            spec.k_in
        ));
    }
    if !(can.rate_hz > 0.0) {
        violations.push(format!("CAN rate {} must be positive", can.rate_hz));
    } else {
        let period_ns = NANOS_PER_SECOND / can.rate_hz;
        for pair in can.states.windows(2) {
            let dt = (pair[1].timestamp_ns - pair[0].timestamp_ns) as f64;
            if dt <= 0.0 {
                violations.push("CAN timestamps must be strictly increasing".to_string());
                break;
            }
            if (dt - period_ns).abs() > 1e6 {
                violations.push(format!(
                    "CAN spacing {dt} ns deviates from 1/rate = {period_ns} ns by more than 1 ms"
                ));
                break;
            }
        }
    }
    for (i, s) in can.states.iter().enumerate() {
        if !(s.speed_mps.is_finite() && s.speed_mps >= 0.0) {
            violations.push(format!(
                "CAN state {i}: speed {} must be finite and non-negative",
                s.speed_mps
            ));
        }
        if !(s.steering_rad.is_finite() && s.steering_rad.abs() <= contract.max_steering_rad) {
            violations.push(format!(
                "CAN state {i}: steering {} outside [-maxSteering, maxSteering] = ±{}",
                s.steering_rad, contract.max_steering_rad
            ));
        }
    }

    let targets = &sample.targets;
    if targets.values.len() != spec.k_out || targets.horizons_s.len() != spec.k_out {
        violations.push(format!(
            "targets have {} rows and {} horizons, expected k_out {}",
            targets.values.len(),
            targets.horizons_s.len(),
            spec.k_out
        ));
    }
    if targets.horizons_s.iter().any(|h| !(*h > 0.0))
        || targets.horizons_s.windows(2).any(|w| w[1] <= w[0])
    {
        violations.push("horizons must be positive and strictly increasing".to_string());
    }
    for (j, row) in targets.values.iter().enumerate() {
        if !(row[SPEED].is_finite() && row[SPEED] >= 0.0) {
            violations.push(format!(
                "target {j}: speed {} must be finite and non-negative",
                row[SPEED]
            ));
        }
        if !(row[STEERING].is_finite() && row[STEERING].abs() <= contract.max_steering_rad) {
            violations.push(format!(
                "target {j}: steering {} outside ±{}",
                row[STEERING], contract.max_steering_rad
            ));
        }
    }

    // CAN window ends at the anchor; the clip ends at the latest frame not
    // after the anchor, so its lag lies in [0, one frame period).
    if can.rate_hz > 0.0 {
        if let Some(last) = can.last_timestamp() {
            let half = 0.5 * NANOS_PER_SECOND / can.rate_hz;
            if ((last - sample.anchor_timestamp_ns) as f64).abs() > half {
                violations.push(format!(
                    "CAN window ends at {last}, more than half a period from anchor {}",
                    sample.anchor_timestamp_ns
                ));
            }
        }
    }
    if clip.rate_fps > 0.0 {
        let lag = (sample.anchor_timestamp_ns - clip.end_timestamp_ns) as f64;
        let frame_period = NANOS_PER_SECOND / clip.rate_fps;
        if lag < 0.0 || lag >= frame_period {
            violations.push(format!(
                "clip ends at {}, expected within one frame period before anchor {}",
                clip.end_timestamp_ns, sample.anchor_timestamp_ns
            ));
        }
    }

    violations
}
