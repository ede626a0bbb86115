use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::RasterGrid;

/// A straight transect in pixel coordinates: `x` is the column, `y` the row,
/// and integer coordinates fall on pixel centers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileLine {
    pub start: (f64, f64),
    pub end: (f64, f64),
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfilePoint {
    pub distance_m: f64,
    pub x: f64,
    pub y: f64,
    /// `None` where an interpolation neighbor is nodata.
    pub height_m: Option<f64>,
}

impl ProfileLine {
    pub fn new(start: (f64, f64), end: (f64, f64), samples: usize) -> Self {
        ProfileLine { start, end, samples }
    }

    pub fn validate(&self, raster: &RasterGrid) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Parameter(format!("a profile needs at least 2 samples, got {}", self.samples)));
        }
        let (xmax, ymax) = (raster.cols() as f64 - 1.0, raster.rows() as f64 - 1.0);
        for (x, y) in [self.start, self.end] {
            if !(x.is_finite() && y.is_finite() && (0.0..=xmax).contains(&x) && (0.0..=ymax).contains(&y)) {
                return Err(Error::Input(format!(
                    "profile endpoint ({x}, {y}) outside the {}x{} raster",
                    raster.rows(),
                    raster.cols()
                )));
            }
        }
        Ok(())
    }

    pub fn length_px(&self) -> f64 {
        (self.end.0 - self.start.0).hypot(self.end.1 - self.start.1)
    }
}

fn bilinear(raster: &RasterGrid, x: f64, y: f64) -> Option<f64> {
    let (c0, r0) = (x.floor() as usize, y.floor() as usize);
    let (fx, fy) = (x - c0 as f64, y - r0 as f64);
    let c1 = (c0 + 1).min(raster.cols() - 1);
    let r1 = (r0 + 1).min(raster.rows() - 1);
    let mut acc = 0.0;
    for (r, c, w) in [
        (r0, c0, (1.0 - fx) * (1.0 - fy)),
        (r0, c1, fx * (1.0 - fy)),
        (r1, c0, (1.0 - fx) * fy),
        (r1, c1, fx * fy),
    ] {
        if w == 0.0 {
            continue;
        }
        let v = raster.get(r, c);
        if raster.is_nodata(v) {
            return None;
        }
        acc += w * v as f64;
    }
    Some(acc)
}

/// Samples `raster` bilinearly at evenly spaced points from `start` to `end`.
pub fn extract_profile(raster: &RasterGrid, line: &ProfileLine) -> Result<Vec<ProfilePoint>> {
    line.validate(raster)?;
    let step_m = line.length_px() * raster.gsd_m() / (line.samples - 1) as f64;
    Ok((0..line.samples)
        .map(|i| {
            let t = i as f64 / (line.samples - 1) as f64;
            let x = line.start.0 + t * (line.end.0 - line.start.0);
            let y = line.start.1 + t * (line.end.1 - line.start.1);
            ProfilePoint { distance_m: i as f64 * step_m, x, y, height_m: bilinear(raster, x, y) }
        })
        .collect())
}

/// `distance_m,height_m` rows; nodata samples leave the height empty.
pub fn profile_csv(points: &[ProfilePoint]) -> String {
    let mut out = String::from("distance_m,height_m\n");
    for p in points {
        let _ = match p.height_m {
            Some(h) => writeln!(out, "{},{}", p.distance_m, h),
            None => writeln!(out, "{},", p.distance_m),
        };
    }
    out
}
