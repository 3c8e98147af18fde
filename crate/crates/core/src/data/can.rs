//! CAN-bus log ingestion and uniform-grid resampling.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{SensorState, NANOS_PER_SECOND};

pub const CAN_HEADER: [&str; 3] = ["timestamp_ns", "speed_mps", "steering_rad"];

fn column(headers: &csv::StringRecord, path: &Path, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: name.to_string(),
        })
}

/// Parses a `timestamp_ns,speed_mps,steering_rad` CSV.
///
/// Timestamps must be strictly increasing and speeds non-negative; the first
/// offending row is reported with its line number.
pub fn parse_can_log(path: &Path) -> Result<Vec<SensorState>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let [ts_col, speed_col, steer_col] = [
        column(&headers, path, CAN_HEADER[0])?,
        column(&headers, path, CAN_HEADER[1])?,
        column(&headers, path, CAN_HEADER[2])?,
    ];

    let mut states: Vec<SensorState> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let field = |idx: usize| record.get(idx).unwrap_or("");
        let timestamp_ns: i64 = field(ts_col)
            .parse()
            .map_err(|_| bad(format!("timestamp_ns `{}` is not an integer", field(ts_col))))?;
        let speed_mps: f64 = field(speed_col)
            .parse()
            .map_err(|_| bad(format!("speed_mps `{}` is not a number", field(speed_col))))?;
        let steering_rad: f64 = field(steer_col)
            .parse()
            .map_err(|_| bad(format!("steering_rad `{}` is not a number", field(steer_col))))?;
        if !(speed_mps.is_finite() && speed_mps >= 0.0) {
            return Err(bad(format!("speed must be non-negative and finite, got {speed_mps}")));
        }
        if !steering_rad.is_finite() {
            return Err(bad(format!("steering must be finite, got {steering_rad}")));
        }
        if let Some(prev) = states.last() {
            if timestamp_ns <= prev.timestamp_ns {
                return Err(bad(format!(
                    "timestamps must be strictly increasing: {timestamp_ns} follows {}",
                    prev.timestamp_ns
                )));
            }
        }
        states.push(SensorState::new(timestamp_ns, speed_mps, steering_rad));
    }
    Ok(states)
}

pub fn write_can_log(path: &Path, states: &[SensorState]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", CAN_HEADER.join(",")).map_err(io)?;
    for s in states {
        writeln!(out, "{},{},{}", s.timestamp_ns, s.speed_mps, s.steering_rad).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Linear interpolation of speed and steering at `t_ns`. `None` outside the
/// covered range; never extrapolates.
pub fn interpolate_at(states: &[SensorState], t_ns: i64) -> Option<SensorState> {
    let first = states.first()?;
    let last = states.last()?;
    if t_ns < first.timestamp_ns || t_ns > last.timestamp_ns {
        return None;
    }
    let upper = states.partition_point(|s| s.timestamp_ns < t_ns);
    if states[upper].timestamp_ns == t_ns {
        return Some(SensorState::new(t_ns, states[upper].speed_mps, states[upper].steering_rad));
    }
    Some(lerp(&states[upper - 1], &states[upper], t_ns))
}

fn lerp(a: &SensorState, b: &SensorState, t_ns: i64) -> SensorState {
    let w = (t_ns - a.timestamp_ns) as f64 / (b.timestamp_ns - a.timestamp_ns) as f64;
    SensorState::new(
        t_ns,
        a.speed_mps + w * (b.speed_mps - a.speed_mps),
        a.steering_rad + w * (b.steering_rad - a.steering_rad),
    )
}

/// Grid timestamp `i` for a grid starting at `start_ns`.
pub fn grid_timestamp(start_ns: i64, rate_hz: f64, i: usize) -> i64 {
    start_ns + (i as f64 * NANOS_PER_SECOND / rate_hz).round() as i64
}

/// Resamples onto a uniform grid starting at the first reading and ending
/// at or before the last one.
pub fn resample_can(states: &[SensorState], rate_hz: f64) -> Result<Vec<SensorState>> {
    if states.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "resampling needs at least 2 states, got {}",
            states.len()
        )));
    }
    if !(rate_hz > 0.0 && rate_hz.is_finite()) {
        return Err(Error::InvalidInput(format!("resample rate must be positive, got {rate_hz}")));
    }
    let start = states[0].timestamp_ns;
    let end = states[states.len() - 1].timestamp_ns;
    let mut out = Vec::new();
    let mut upper = 1;
    for i in 0.. {
        let t = grid_timestamp(start, rate_hz, i);
        if t > end {
            break;
        }
        while states[upper].timestamp_ns < t {
            upper += 1;
        }
        let s = if states[upper].timestamp_ns == t {
            SensorState::new(t, states[upper].speed_mps, states[upper].steering_rad)
        } else if t == states[upper - 1].timestamp_ns {
            SensorState::new(t, states[upper - 1].speed_mps, states[upper - 1].steering_rad)
        } else {
            lerp(&states[upper - 1], &states[upper], t)
        };
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::fs;

    fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn parses_well_formed_log() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "can.csv",
            "timestamp_ns,speed_mps,steering_rad\n0,1.0,0.1\n100,2.0,-0.1\n200,3.0,0.0\n",
        );
        let states = parse_can_log(&p).unwrap();
        assert_eq!(states.len(), 3);
        assert_eq!(states[1], SensorState::new(100, 2.0, -0.1));
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "can.csv", "timestamp_ns,speed_mps,steering_rad\n");
        assert!(parse_can_log(&p).unwrap().is_empty());
    }

    #[test]
    fn negative_speed_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "can.csv",
            "timestamp_ns,speed_mps,steering_rad\n0,1.0,0.1\n100,-1.0,0.0\n",
        );
        match parse_can_log(&p) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("non-negative"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotonic_and_missing_inputs_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "a.csv",
            "timestamp_ns,speed_mps,steering_rad\n0,1,0\n200,1,0\n100,1,0\n",
        );
        assert!(matches!(parse_can_log(&p), Err(Error::Parse { line: 4, .. })));
        let p = write(dir.path(), "b.csv", "timestamp_ns,speed_mps\n0,1\n");
        assert!(matches!(parse_can_log(&p), Err(Error::MissingColumn { .. })));
        assert!(matches!(
            parse_can_log(&dir.path().join("absent.csv")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn resample_two_points_at_ten_hz() {
        let states = [SensorState::new(0, 0.0, 0.0), SensorState::new(1_000_000_000, 10.0, 1.0)];
        let out = resample_can(&states, 10.0).unwrap();
        assert_eq!(out.len(), 11);
        for (i, s) in out.iter().enumerate() {
            assert!((s.speed_mps - i as f64).abs() < 1e-12);
            assert_eq!(s.timestamp_ns, i as i64 * 100_000_000);
        }
    }

    #[test]
    fn resample_constant_stays_constant() {
        let states: Vec<_> = [0i64, 37_000_000, 410_000_000, 900_000_000]
            .iter()
            .map(|&t| SensorState::new(t, 4.2, -0.3))
            .collect();
        for s in resample_can(&states, 10.0).unwrap() {
            assert_eq!((s.speed_mps, s.steering_rad), (4.2, -0.3));
        }
    }

    /// Brute force: scan every bracketing pair for each grid point.
    fn oracle(states: &[SensorState], t: i64) -> (f64, f64) {
        for w in states.windows(2) {
            if w[0].timestamp_ns <= t && t <= w[1].timestamp_ns {
                let f = (t - w[0].timestamp_ns) as f64 / (w[1].timestamp_ns - w[0].timestamp_ns) as f64;
                return (
                    w[0].speed_mps * (1.0 - f) + w[1].speed_mps * f,
                    w[0].steering_rad * (1.0 - f) + w[1].steering_rad * f,
                );
            }
        }
        panic!("t outside range");
    }

    #[test]
    fn resample_irregular_matches_oracle() {
        let states = [
            SensorState::new(0, 2.0, 0.1),
            SensorState::new(300_000_000, 5.0, -0.2),
            SensorState::new(1_000_000_000, 1.0, 0.4),
        ];
        let out = resample_can(&states, 10.0).unwrap();
        assert_eq!(out.len(), 11);
        for s in &out {
            let (v, st) = oracle(&states, s.timestamp_ns);
            assert!((s.speed_mps - v).abs() < 1e-12);
            assert!((s.steering_rad - st).abs() < 1e-12);
        }
        // spot value: t = 0.6 s lies 3/7 of the way from 0.3 s to 1.0 s
        assert!((out[6].speed_mps - (5.0 - 4.0 * 3.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn resample_needs_two_states() {
        assert!(resample_can(&[SensorState::new(0, 1.0, 0.0)], 10.0).is_err());
    }

    proptest! {
        #[test]
        fn resampling_affine_signals_is_exact(
            gaps in prop::collection::vec(1_000_000i64..400_000_000, 2..30),
            a in -5.0f64..5.0, b in -3.0f64..30.0, c in -1.0f64..1.0, d in -0.5f64..0.5,
            rate in 1.0f64..50.0,
        ) {
            let mut t = 0i64;
            let mut states = vec![];
            for g in std::iter::once(0).chain(gaps) {
                t += g;
                let s = t as f64 / 1e9;
                states.push(SensorState::new(t, a * s + b, c * s + d));
            }
            for s in resample_can(&states, rate).unwrap() {
                let secs = s.timestamp_ns as f64 / 1e9;
                prop_assert!((s.speed_mps - (a * secs + b)).abs() < 1e-9);
                prop_assert!((s.steering_rad - (c * secs + d)).abs() < 1e-9);
            }
        }
    }
}
