use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RasterGrid, RasterKind};

pub const STEREO_NODATA: f32 = -9999.0;
/// Radius range of vegetation caps, pixels.
pub const VEG_RADIUS_PX: (f64, f64) = (3.0, 8.0);

/// Failure modes of photogrammetric matching applied to a clean surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DegradationSpec {
    pub noise_sigma_m: f64,
    pub smooth_radius_px: usize,
    pub dropout_rate: f64,
    pub veg_blob_count: usize,
    pub veg_height_m: f64,
    pub seed: u64,
}

impl Default for DegradationSpec {
    fn default() -> Self {
        DegradationSpec {
            noise_sigma_m: 1.0,
            smooth_radius_px: 3,
            dropout_rate: 0.02,
            veg_blob_count: 4,
            veg_height_m: 8.0,
            seed: 0,
        }
    }
}

impl DegradationSpec {
    pub fn identity() -> Self {
        DegradationSpec {
            noise_sigma_m: 0.0,
            smooth_radius_px: 0,
            dropout_rate: 0.0,
            veg_blob_count: 0,
            veg_height_m: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma_m.is_finite() && self.noise_sigma_m >= 0.0) {
            return Err(Error::Parameter(format!(
                "noise_sigma_m must be >= 0, got {}",
                self.noise_sigma_m
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Parameter(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.veg_height_m.is_finite() && self.veg_height_m >= 0.0) {
            return Err(Error::Parameter("veg_height_m must be >= 0".into()));
        }
        Ok(())
    }
}

/// Separable mean filter over a (2r+1)² window, edge pixels replicated.
pub(crate) fn box_blur(data: &[f32], rows: usize, cols: usize, radius: usize) -> Vec<f32> {
    if radius == 0 {
        return data.to_vec();
    }
    let n = (2 * radius + 1) as f64;
    let clampi = |i: isize, len: usize| i.clamp(0, len as isize - 1) as usize;
    let mut tmp = vec![0.0f32; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0f64;
            for d in -(radius as isize)..=radius as isize {
                acc += data[r * cols + clampi(c as isize + d, cols)] as f64;
            }
            tmp[r * cols + c] = (acc / n) as f32;
        }
    }
    let mut out = vec![0.0f32; data.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0f64;
            for d in -(radius as isize)..=radius as isize {
                acc += tmp[clampi(r as isize + d, rows) * cols + c] as f64;
            }
            out[r * cols + c] = (acc / n) as f32;
        }
    }
    out
}

/// Simulates a stereo DSM: wall-softening blur, Gaussian height noise,
/// vegetation caps, then nodata dropout, in that order.
pub fn degrade_to_stereo_dsm(gt_dsm: &RasterGrid, spec: &DegradationSpec) -> Result<RasterGrid> {
    spec.validate()?;
    if gt_dsm.kind() != RasterKind::Dsm {
        return Err(Error::Input(format!(
            "degradation expects a dsm raster, got {:?}",
            gt_dsm.kind()
        )));
    }
    if gt_dsm.nodata().is_some() && gt_dsm.valid_count() != gt_dsm.len() {
        return Err(Error::Input("degradation expects a gap-free surface".into()));
    }
    let (rows, cols) = gt_dsm.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut z = box_blur(gt_dsm.data(), rows, cols, spec.smooth_radius_px);

    if spec.noise_sigma_m > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma_m)
            .map_err(|e| Error::Parameter(format!("noise_sigma_m: {e}")))?;
        for v in z.iter_mut() {
            *v += rng.sample(normal) as f32;
        }
    }

    for _ in 0..spec.veg_blob_count {
        let cr = rng.gen_range(0.0..rows as f64);
        let cc = rng.gen_range(0.0..cols as f64);
        let radius = rng.gen_range(VEG_RADIUS_PX.0..=VEG_RADIUS_PX.1);
        let height = spec.veg_height_m * rng.gen_range(0.7..=1.3);
        let r_lo = (cr - radius).floor().max(0.0) as usize;
        let r_hi = ((cr + radius).ceil() as usize).min(rows - 1);
        let c_lo = (cc - radius).floor().max(0.0) as usize;
        let c_hi = ((cc + radius).ceil() as usize).min(cols - 1);
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                let dr = r as f64 + 0.5 - cr;
                let dc = c as f64 + 0.5 - cc;
                let d2 = (dr * dr + dc * dc) / (radius * radius);
                if d2 < 1.0 {
                    let cap = (height * (1.0 - d2)) as f32;
                    let k = r * cols + c;
                    z[k] = z[k].max(cap);
                }
            }
        }
    }

    let mut nodata = gt_dsm.nodata();
    if spec.dropout_rate > 0.0 {
        nodata = Some(STEREO_NODATA);
        for v in z.iter_mut() {
            if rng.gen_bool(spec.dropout_rate) {
                *v = STEREO_NODATA;
            }
        }
    }

    RasterGrid::new(rows, cols, z, gt_dsm.gsd_m(), gt_dsm.origin(), nodata, RasterKind::Dsm)
}
