//! Frame index CSV and PNG frame I/O.

use std::io::Write;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::{ImageBuffer, Rgb, RgbImage};

use crate::error::{Error, Result};

pub const FRAMES_HEADER: [&str; 2] = ["timestamp_ns", "frame_path"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRef {
    pub timestamp_ns: i64,
    /// Resolved against the manifest directory.
    pub path: PathBuf,
}

/// Parses a `timestamp_ns,frame_path` CSV. Relative paths are joined onto
/// `base_dir`.
pub fn parse_frames_csv(path: &Path, base_dir: &Path) -> Result<Vec<FrameRef>> {
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
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (ts_col, path_col) = (find(FRAMES_HEADER[0])?, find(FRAMES_HEADER[1])?);

    let mut frames: Vec<FrameRef> = Vec::new();
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
        let raw_ts = record.get(ts_col).unwrap_or("");
        let timestamp_ns: i64 = raw_ts
            .parse()
            .map_err(|_| bad(format!("timestamp_ns `{raw_ts}` is not an integer")))?;
        let rel = record.get(path_col).unwrap_or("");
        if rel.is_empty() {
            return Err(bad("empty frame_path".into()));
        }
        if let Some(prev) = frames.last() {
            if timestamp_ns <= prev.timestamp_ns {
                return Err(bad(format!(
                    "timestamps must be strictly increasing: {timestamp_ns} follows {}",
                    prev.timestamp_ns
                )));
            }
        }
        frames.push(FrameRef {
            timestamp_ns,
            path: base_dir.join(rel),
        });
    }
    Ok(frames)
}

pub fn write_frames_csv(path: &Path, rows: &[(i64, String)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let io = |e| Error::io(path, e);
    writeln!(out, "{}", FRAMES_HEADER.join(",")).map_err(io)?;
    for (t, p) in rows {
        writeln!(out, "{t},{p}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Loads a frame as channel-major `(3, H, W)` floats in `[0, 1]`, resizing
/// when the stored size differs.
pub fn load_frame(path: &Path, height: usize, width: usize) -> Result<Vec<f32>> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .to_rgb8();
    let img = if img.height() as usize != height || img.width() as usize != width {
        image::imageops::resize(&img, width as u32, height as u32, FilterType::Triangle)
    } else {
        img
    };
    let plane = height * width;
    let mut out = vec![0.0f32; 3 * plane];
    for (x, y, px) in img.enumerate_pixels() {
        let idx = y as usize * width + x as usize;
        for c in 0..3 {
            out[c * plane + idx] = px[c] as f32 / 255.0;
        }
    }
    Ok(out)
}

/// Writes a channel-major `(3, H, W)` frame with values in `[0, 1]`.
pub fn save_frame(path: &Path, data: &[f32], height: usize, width: usize) -> Result<()> {
    let plane = height * width;
    if data.len() != 3 * plane {
        return Err(Error::Shape(format!(
            "frame buffer of {} values does not match 3x{height}x{width}",
            data.len()
        )));
    }
    let img: RgbImage = ImageBuffer::from_fn(width as u32, height as u32, |x, y| {
        let idx = y as usize * width + x as usize;
        let q = |c: usize| (data[c * plane + idx].clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([q(0), q(1), q(2)])
    });
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_is_quantized_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let (h, w) = (4, 6);
        let data: Vec<f32> = (0..3 * h * w).map(|i| (i * 7 % 256) as f32 / 255.0).collect();
        let p = dir.path().join("f.png");
        save_frame(&p, &data, h, w).unwrap();
        let back = load_frame(&p, h, w).unwrap();
        for (a, b) in data.iter().zip(&back) {
            assert!((a - b).abs() < 1e-6);
        }
        assert_eq!(load_frame(&p, 2, 3).unwrap().len(), 18);
    }

    #[test]
    fn frames_csv_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("frames.csv");
        write_frames_csv(&p, &[(0, "frames/a.png".into()), (80, "frames/b.png".into())]).unwrap();
        let frames = parse_frames_csv(&p, dir.path()).unwrap();
        assert_eq!(frames[1].path, dir.path().join("frames/b.png"));
        std::fs::write(&p, "timestamp_ns,frame_path\n80,a.png\n0,b.png\n").unwrap();
        assert!(matches!(parse_frames_csv(&p, dir.path()), Err(Error::Parse { line: 3, .. })));
    }
}
