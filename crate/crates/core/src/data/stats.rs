//! Fixed-bin histograms of the CAN signals seen by a dataset.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Sample;

pub const HISTOGRAM_HEADER: &str = "signal,bin_left,bin_right,count";
pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub signal: String,
    /// `bins + 1` increasing edges; the last bin is closed on the right.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(signal: &str, lo: f64, hi: f64, bins: usize, values: impl IntoIterator<Item = f64>) -> Self {
        let bins = bins.max(1);
        let hi = if hi > lo { hi } else { lo + 1.0 };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut counts = vec![0u64; bins];
        for v in values {
            let idx = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram {
            signal: signal.to_string(),
            edges,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `ln(1 + count)` per bin, for log-scale display.
    pub fn log_counts(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| (c as f64).ln_1p()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramReport {
    pub steering: Histogram,
    pub speed: Histogram,
}

impl HistogramReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTOGRAM_HEADER);
        out.push('\n');
        for h in [&self.steering, &self.speed] {
            for (i, c) in h.counts.iter().enumerate() {
                out.push_str(&format!("{},{},{},{}\n", h.signal, h.edges[i], h.edges[i + 1], c));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Histograms over every CAN-window state of every sample. Steering spans
/// `[-max, max]`; speed spans `[0, max observed]`.
pub fn dataset_stats(samples: &[Sample], bins: usize, max_steering_rad: f64) -> Result<HistogramReport> {
    if samples.is_empty() {
        return Err(Error::Empty("dataset statistics need at least one sample"));
    }
    let states = || samples.iter().flat_map(|s| s.can.states.iter());
    let max_speed = states().map(|s| s.speed_mps).fold(0.0, f64::max);
    Ok(HistogramReport {
        steering: Histogram::new(
            "steering",
            -max_steering_rad,
            max_steering_rad,
            bins,
            states().map(|s| s.steering_rad),
        ),
        speed: Histogram::new("speed", 0.0, max_speed, bins, states().map(|s| s.speed_mps)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::fixtures::{small_spec, well_formed};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_zero_steering_fills_one_bin() {
        let mut s = well_formed(small_spec(), 1.0);
        s.can.states.iter_mut().for_each(|st| st.steering_rad = 0.0);
        let samples = vec![s; 100];
        let r = dataset_stats(&samples, DEFAULT_BINS, 1.0).unwrap();
        let occupied: Vec<_> = r.steering.counts.iter().filter(|&&c| c > 0).collect();
        assert_eq!(occupied, vec![&1000]);
        assert_eq!(r.speed.total(), 1000);
    }

    #[test]
    fn uniform_speeds_pass_multinomial_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<Sample> = (0..1000)
            .map(|_| {
                let mut s = well_formed(small_spec(), 1.0);
                s.can.states.iter_mut().for_each(|st| st.speed_mps = rng.gen_range(0.0..30.0));
                s
            })
            .collect();
        // pin the range so bins match [0, 30] exactly
        let values = samples.iter().flat_map(|s| s.can.states.iter().map(|st| st.speed_mps));
        let h = Histogram::new("speed", 0.0, 30.0, 50, values);
        let n: f64 = 10_000.0;
        let p = 1.0 / 50.0;
        let sigma = (n * p * (1.0 - p)).sqrt();
        for &c in &h.counts {
            assert!((c as f64 - n * p).abs() <= 5.0 * sigma, "count {c}");
        }
        let r = dataset_stats(&samples, 50, 1.0).unwrap();
        assert_eq!(r.speed.total(), 10_000);
    }

    #[test]
    fn counts_are_conserved_and_csv_has_all_rows() {
        let samples = vec![well_formed(small_spec(), 1.0); 7];
        let r = dataset_stats(&samples, 12, 1.0).unwrap();
        assert_eq!(r.steering.total(), 70);
        assert_eq!(r.speed.total(), 70);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 1 + 24);
        assert!(csv.starts_with(HISTOGRAM_HEADER));
        assert!(dataset_stats(&[], 12, 1.0).is_err());
    }
}
