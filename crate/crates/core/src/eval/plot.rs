//! Minimal PNG charts. CSV outputs are canonical; these are for eyeballing.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const MARGIN: u32 = 16;
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([60, 60, 60]);
const INK: Rgb<u8> = Rgb([31, 119, 180]);

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

fn canvas(width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    for x in MARGIN..width - MARGIN {
        img.put_pixel(x, height - MARGIN, AXIS);
    }
    for y in MARGIN..=height - MARGIN {
        img.put_pixel(MARGIN, y, AXIS);
    }
    img
}

fn line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64)) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for i in 0..=steps {
        let f = i as f64 / steps as f64;
        let (x, y) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        if x >= 0.0 && y >= 0.0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, INK);
        }
    }
}

/// Polyline through the defined points; gaps are left where `y` is `None`.
pub fn plot_curve(path: &Path, xs: &[f64], ys: &[Option<f64>], width: u32, height: u32) -> Result<()> {
    let mut img = canvas(width, height);
    let defined: Vec<f64> = ys.iter().flatten().copied().collect();
    if !xs.is_empty() && !defined.is_empty() {
        let (x_lo, x_hi) = (xs[0], xs[xs.len() - 1]);
        let y_hi = defined.iter().copied().fold(0.0, f64::max).max(1e-12);
        let px = |x: f64| MARGIN as f64 + (x - x_lo) / (x_hi - x_lo).max(1e-12) * (width - 2 * MARGIN) as f64;
        let py = |y: f64| (height - MARGIN) as f64 - y / y_hi * (height - 2 * MARGIN) as f64;
        for i in 1..xs.len() {
            if let (Some(a), Some(b)) = (ys[i - 1], ys[i]) {
                line(&mut img, (px(xs[i - 1]), py(a)), (px(xs[i]), py(b)));
            }
        }
    }
    save(&img, path)
}

/// Vertical bars, one per value.
pub fn plot_bars(path: &Path, values: &[f64], width: u32, height: u32) -> Result<()> {
    let mut img = canvas(width, height);
    let hi = values.iter().copied().fold(0.0, f64::max);
    if !values.is_empty() && hi > 0.0 {
        let slot = (width - 2 * MARGIN - 1) as f64 / values.len() as f64;
        for (i, v) in values.iter().enumerate() {
            let top = (height - MARGIN) as f64 - v / hi * (height - 2 * MARGIN) as f64;
            let x0 = (MARGIN + 1) as f64 + i as f64 * slot;
            for x in x0 as u32..((x0 + slot).max(x0 + 1.0) as u32).min(width - MARGIN) {
                for y in top.max(0.0) as u32..height - MARGIN {
                    img.put_pixel(x, y, INK);
                }
            }
        }
    }
    save(&img, path)
}
