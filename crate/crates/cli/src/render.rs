//! Heat-scatter rendering of risk tables.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub const BACKGROUND: [u8; 3] = [24, 24, 28];

/// Black-red-yellow-white ramp over `t` in [0, 1].
pub fn heat_color(t: f64) -> [u8; 3] {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let channel = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    [channel(3.0 * t), channel(3.0 * t - 1.0), channel(3.0 * t - 2.0)]
}

/// Smallest positive gap between sorted coordinates, if any.
fn grid_step(mut values: Vec<f64>) -> Option<f64> {
    values.sort_by(f64::total_cmp);
    values.dedup();
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|d| *d > 1e-9)
        .min_by(f64::total_cmp)
}

/// An RGB raster, row-major from the top.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

/// Draws each `(x, y, risk)` point as a square on the grid implied by the
/// point spacing, colored by risk relative to the largest one. North is up.
pub fn heat_scatter(points: &[[f64; 3]], scale: u32) -> Result<Raster> {
    if points.is_empty() {
        bail!("risk table has no rows");
    }
    if scale == 0 {
        bail!("scale must be at least 1");
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        bail!("risk table holds non-finite values");
    }
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    let step = grid_step(xs.clone())
        .into_iter()
        .chain(grid_step(ys.clone()))
        .min_by(f64::total_cmp)
        .unwrap_or(1.0);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x0, y0) = (min(&xs), min(&ys));
    let cols = ((max(&xs) - x0) / step).round() as u32 + 1;
    let rows = ((max(&ys) - y0) / step).round() as u32 + 1;
    let (width, height) = (cols * scale, rows * scale);
    if u64::from(width) * u64::from(height) > 64 << 20 {
        bail!("image would be {width}x{height} pixels; use a smaller --scale");
    }
    let peak = points.iter().map(|p| p[2]).fold(0.0, f64::max);

    let mut rgb = BACKGROUND.repeat((width * height) as usize);
    for p in points {
        let col = ((p[0] - x0) / step).round() as u32;
        let row = rows - 1 - ((p[1] - y0) / step).round() as u32;
        let color = heat_color(if peak > 0.0 { p[2] / peak } else { 0.0 });
        for py in row * scale..(row + 1) * scale {
            for px in col * scale..(col + 1) * scale {
                let i = 3 * (py * width + px) as usize;
                rgb[i..i + 3].copy_from_slice(&color);
            }
        }
    }
    Ok(Raster { width, height, rgb })
}

/// Writes an 8-bit RGB PNG with a `config_hash` text chunk.
pub fn write_png(path: &Path, raster: &Raster, config_hash: &str) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), raster.width, raster.height);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.add_text_chunk("config_hash".into(), config_hash.into())?;
    let mut writer = enc.write_header().with_context(|| format!("writing {}", path.display()))?;
    writer
        .write_image_data(&raster.rgb)
        .with_context(|| format!("writing {}", path.display()))?;
    writer.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        assert_eq!(heat_color(0.0), [0, 0, 0]);
        assert_eq!(heat_color(1.0), [255, 255, 255]);
        assert_eq!(heat_color(f64::NAN), [0, 0, 0]);
    }

    #[test]
    fn points_land_on_their_cells() {
        let pts = [[0.0, 0.0, 1.0], [10.0, 5.0, 0.0]];
        let r = heat_scatter(&pts, 2).unwrap();
        // Step 5 m: three columns, two rows.
        assert_eq!((r.width, r.height), (6, 4));
        let px = |x: u32, y: u32| &r.rgb[3 * (y * r.width + x) as usize..][..3];
        assert_eq!(px(0, 3), [255, 255, 255]);
        assert_eq!(px(5, 0), [0, 0, 0]);
        assert_eq!(px(2, 0), BACKGROUND);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(heat_scatter(&[], 1).is_err());
        assert!(heat_scatter(&[[0.0, f64::NAN, 1.0]], 1).is_err());
    }
}
