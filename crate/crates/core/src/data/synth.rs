//! Synthetic recordings at the nominal 10 Hz CAN / 12.5 fps video rates.

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::data::can::{grid_timestamp, write_can_log};
use crate::data::frames::{save_frame, write_frames_csv};
use crate::data::manifest::{RecordingManifest, MANIFEST_FILE};
use crate::data::pipeline::PipelineConfig;
use crate::error::{Error, Result};
use crate::types::{nanos_to_seconds, SensorState};

/// Steering bound of every synthetic dataset.
pub const SYNTH_MAX_STEERING_RAD: f64 = 1.0;
/// How far ahead the lane stripe looks.
pub const LANE_LOOKAHEAD_S: f64 = 0.3;
/// Steering that moves the stripe to the frame edge.
const LANE_FULL_SCALE_RAD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Low-frequency sinusoids; frames are a flat color.
    SmoothSine,
    /// Frames show a lane stripe placed by the steering value 0.3 s ahead.
    LaneMarkerCoupled,
    /// Piecewise-held steering drawn from a zero-peaked heavy-tailed law.
    ImbalancedSteering,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::SmoothSine,
        Scenario::LaneMarkerCoupled,
        Scenario::ImbalancedSteering,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::SmoothSine => "smooth_sine",
            Scenario::LaneMarkerCoupled => "lane_marker_coupled",
            Scenario::ImbalancedSteering => "imbalanced_steering",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == norm)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scenario `{s}` (expected smooth_sine, lane_marker_coupled or imbalanced_steering)"
                ))
            })
    }
}

/// One draw of the imbalanced steering law: a two-component Laplace mixture
/// (75% scale 0.02 rad, 25% scale 0.1 rad), clipped to the synthetic bound.
pub fn sample_imbalanced_steering<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let scale = if rng.gen::<f64>() < 0.75 { 0.02 } else { 0.1 };
    let magnitude: f64 = Exp::new(1.0 / scale).expect("positive rate").sample(rng);
    let sign: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    (sign * magnitude).clamp(-SYNTH_MAX_STEERING_RAD, SYNTH_MAX_STEERING_RAD)
}

/// `P(|s| > x)` under [`sample_imbalanced_steering`], for `x` below the clip.
pub fn imbalanced_tail_probability(x: f64) -> f64 {
    0.75 * (-x / 0.02).exp() + 0.25 * (-x / 0.1).exp()
}

struct Sinusoid {
    amplitude: f64,
    freq_hz: f64,
    phase: f64,
}

impl Sinusoid {
    fn at(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.freq_hz * t + self.phase).sin()
    }
}

/// Continuous-time ground truth of a scenario.
struct Signals {
    speed: Sinusoid,
    speed_offset: f64,
    steering: SteeringLaw,
}

enum SteeringLaw {
    Sum(Vec<Sinusoid>),
    /// Knots `(start_s, value)`; each value is reached by a 0.3 s ramp.
    Held(Vec<(f64, f64)>),
}

const RAMP_S: f64 = 0.3;

impl Signals {
    fn new(scenario: Scenario, seconds: f64, rng: &mut ChaCha8Rng) -> Self {
        let speed = Sinusoid {
            amplitude: 4.0,
            freq_hz: 1.0 / rng.gen_range(15.0..25.0),
            phase: rng.gen_range(0.0..TAU),
        };
        let steering = match scenario {
            Scenario::SmoothSine => SteeringLaw::Sum(vec![Sinusoid {
                amplitude: rng.gen_range(0.1..0.2),
                freq_hz: 1.0 / rng.gen_range(6.0..10.0),
                phase: rng.gen_range(0.0..TAU),
            }]),
            Scenario::LaneMarkerCoupled => {
                // lane changes the CAN history cannot anticipate
                let mut knots = vec![(0.0, 0.0)];
                let mut t = 0.0;
                while t <= seconds {
                    t += rng.gen_range(0.6..2.0);
                    knots.push((t, rng.gen_range(-0.3..0.3)));
                }
                SteeringLaw::Held(knots)
            }
            Scenario::ImbalancedSteering => {
                let mut knots = vec![(0.0, 0.0)];
                let mut t = 0.0;
                while t <= seconds {
                    t += rng.gen_range(0.5..2.5);
                    knots.push((t, sample_imbalanced_steering(rng)));
                }
                SteeringLaw::Held(knots)
            }
        };
        Signals {
            speed,
            speed_offset: 12.0,
            steering,
        }
    }

    fn speed(&self, t: f64) -> f64 {
        self.speed_offset + self.speed.at(t)
    }

    fn steering(&self, t: f64) -> f64 {
        match &self.steering {
            SteeringLaw::Sum(parts) => parts.iter().map(|p| p.at(t)).sum(),
            SteeringLaw::Held(knots) => {
                let k = knots.partition_point(|&(start, _)| start <= t).max(1) - 1;
                let (start, value) = knots[k];
                let prev = if k == 0 { value } else { knots[k - 1].1 };
                let w = ((t - start) / RAMP_S).clamp(0.0, 1.0);
                prev + w * (value - prev)
            }
        }
    }
}

/// Fills a channel-major frame: shaded verge left of the stripe, road to the
/// right, with area-weighted edges so the mean intensity is linear in the
/// stripe position.
fn render_lane(buf: &mut [f32], height: usize, width: usize, steering: f64) {
    let half = width as f64 / 2.0;
    let offset = (steering / LANE_FULL_SCALE_RAD).clamp(-1.0, 1.0) * (half - 2.0);
    let center = half + offset;
    let stripe_half = (width as f64 / 32.0).max(0.75);
    let verge = [0.05f32, 0.3, 0.05];
    let road = [0.7f32, 0.7, 0.7];
    let stripe = [1.0f32, 1.0, 0.6];
    let plane = height * width;
    for x in 0..width {
        let (x0, x1) = (x as f64, x as f64 + 1.0);
        let cover = |a: f64, b: f64| (x1.min(b) - x0.max(a)).max(0.0);
        let s = cover(center - stripe_half, center + stripe_half);
        let v = cover(f64::NEG_INFINITY, center - stripe_half);
        let r = 1.0 - s - v;
        for c in 0..3 {
            let value = (s as f32) * stripe[c] + (v as f32) * verge[c] + (r as f32) * road[c];
            for y in 0..height {
                buf[c * plane + y * width + x] = value;
            }
        }
    }
}

/// Writes `manifest.json`, `can.csv`, `frames.csv` and `frames/*.png` under
/// `out_dir`. Identical arguments produce byte-identical files.
pub fn generate_synthetic_recording(
    config: &PipelineConfig,
    scenario: Scenario,
    seconds: f64,
    seed: u64,
    out_dir: &Path,
) -> Result<RecordingManifest> {
    config.validate()?;
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(Error::InvalidInput(format!("duration must be positive, got {seconds}")));
    }
    let frames_dir = out_dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let signals = Signals::new(scenario, seconds, &mut rng);

    let n_can = (seconds * config.can_rate_hz + 1e-9).floor() as usize;
    let states: Vec<SensorState> = (0..n_can)
        .map(|i| {
            let t_ns = grid_timestamp(0, config.can_rate_hz, i);
            let t = nanos_to_seconds(t_ns);
            SensorState::new(
                t_ns,
                signals.speed(t).max(0.0),
                signals.steering(t).clamp(-SYNTH_MAX_STEERING_RAD, SYNTH_MAX_STEERING_RAD),
            )
        })
        .collect();
    write_can_log(&out_dir.join("can.csv"), &states)?;

    let (h, w) = (config.frame_height, config.frame_width);
    let n_frames = (seconds * config.video_fps + 1e-9).floor() as usize;
    let mut buf = vec![0.5f32; 3 * h * w];
    let mut rows = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let t_ns = grid_timestamp(0, config.video_fps, i);
        if scenario == Scenario::LaneMarkerCoupled {
            let t = nanos_to_seconds(t_ns);
            render_lane(&mut buf, h, w, signals.steering(t + LANE_LOOKAHEAD_S));
        }
        let name = format!("frames/{i:06}.png");
        save_frame(&out_dir.join(&name), &buf, h, w)?;
        rows.push((t_ns, name));
    }
    write_frames_csv(&out_dir.join("frames.csv"), &rows)?;

    let manifest = RecordingManifest {
        frames_csv: "frames.csv".into(),
        can_csv: "can.csv".into(),
        dataset_name: format!("synthetic-{scenario}"),
        max_steering_rad: SYNTH_MAX_STEERING_RAD,
        segment_id: Some(format!("{scenario}-{seed}")),
        base_dir: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
