//! Color-shaded hillshade previews of height rasters as 8-bit PNG.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

/// Light direction, degrees clockwise from north and above the horizon.
pub const SUN_AZIMUTH_DEG: f64 = 315.0;
pub const SUN_ALTITUDE_DEG: f64 = 45.0;

/// Low-to-high height ramp: blue, green, yellow, red, white.
const RAMP: [[f64; 3]; 5] = [
    [40.0, 70.0, 160.0],
    [60.0, 160.0, 80.0],
    [230.0, 210.0, 80.0],
    [200.0, 70.0, 40.0],
    [250.0, 250.0, 250.0],
];

/// Lambertian shading in [0, 1] from central-difference slopes; nodata and
/// its neighbors fall back to one-sided differences or flat.
pub fn hillshade(raster: &RasterGrid, azimuth_deg: f64, altitude_deg: f64) -> Vec<f64> {
    let (rows, cols) = raster.shape();
    let g = raster.gsd_m();
    let at = |r: usize, c: usize| {
        let v = raster.get(r, c);
        (!raster.is_nodata(v)).then_some(v as f64)
    };
    let diff = |a: Option<f64>, b: Option<f64>, center: Option<f64>| match (a, b, center) {
        (Some(a), Some(b), _) => (b - a) / (2.0 * g),
        (Some(a), None, Some(c)) => (c - a) / g,
        (None, Some(b), Some(c)) => (b - c) / g,
        _ => 0.0,
    };
    let az = (360.0 - azimuth_deg + 90.0).to_radians();
    let zen = (90.0 - altitude_deg).to_radians();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let center = at(r, c);
            let west = (c > 0).then(|| at(r, c - 1)).flatten();
            let east = (c + 1 < cols).then(|| at(r, c + 1)).flatten();
            let north = (r > 0).then(|| at(r - 1, c)).flatten();
            let south = (r + 1 < rows).then(|| at(r + 1, c)).flatten();
            let dzdx = diff(west, east, center);
            // rows grow southwards
            let dzdy = diff(south, north, center);
            let slope = dzdx.hypot(dzdy).atan();
            let aspect = dzdy.atan2(-dzdx);
            let v = zen.cos() * slope.cos() + zen.sin() * slope.sin() * (az - aspect).cos();
            out.push(v.clamp(0.0, 1.0));
        }
    }
    out
}

fn ramp(t: f64) -> [f64; 3] {
    let x = t.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    std::array::from_fn(|k| RAMP[i][k] * (1.0 - f) + RAMP[i + 1][k] * f)
}

/// Height-colored, hillshaded RGB image with the raster's dimensions.
/// Nodata pixels are black.
pub fn render_preview(raster: &RasterGrid) -> RgbImage {
    let (rows, cols) = raster.shape();
    let shade = hillshade(raster, SUN_AZIMUTH_DEG, SUN_ALTITUDE_DEG);
    let (lo, hi) = raster.value_range().map_or((0.0, 1.0), |(a, b)| (a as f64, b as f64));
    let span = if hi > lo { hi - lo } else { 1.0 };
    RgbImage::from_fn(cols as u32, rows as u32, |x, y| {
        let i = y as usize * cols + x as usize;
        if !raster.is_valid_at(i) {
            return Rgb([0, 0, 0]);
        }
        let base = ramp((raster.data()[i] as f64 - lo) / span);
        // keep some ambient light so shaded slopes stay readable
        let k = 0.35 + 0.65 * shade[i];
        Rgb(base.map(|v| (v * k).round().clamp(0.0, 255.0) as u8))
    })
}

pub fn write_preview(raster: &RasterGrid, path: &Path) -> Result<()> {
    render_preview(raster).save_with_format(path, image::ImageFormat::Png).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Internal(format!("{}: PNG encoding failed: {other}", path.display())),
    })
}
