//! Height accuracy inside dilated building footprints: MAE, RMSE, NMAD and
//! NCC, plus profile extraction along lines.
//!
//! Reference accuracies for 0.5 m WorldView-1 stereo data over Berlin, kept
//! as documentation constants (they need the original data to reproduce):
//!
//! ```
//! use dsm_refine::metrics::REFERENCE_TABLE;
//!
//! let rows: Vec<(&str, [f64; 4])> = REFERENCE_TABLE.iter().map(|r| (r.model, r.values)).collect();
//! assert_eq!(rows, vec![
//!     ("Stereo DSM", [3.00, 5.97, 1.48, 0.90]),
//!     ("cGAN", [2.01, 4.78, 0.86, 0.92]),
//!     ("Fused-cGAN", [1.79, 4.36, 0.67, 0.94]),
//! ]);
//! ```

mod profile;
mod report;
mod stats;

use crate::error::{Error, Result};
use crate::raster::{dilate_mask, RasterGrid};

pub use profile::{extract_profile, profile_csv, ProfileLine, ProfilePoint};
pub use report::{format_table, MetricsReport, ReferenceRow, REFERENCE_TABLE};
pub use stats::{mae_of, median, ncc_of, nmad_of, pairwise_sum, rmse_of, NMAD_SCALE};

/// Buffer around footprints used by the evaluation protocol, in pixels.
pub const DEFAULT_DILATION_PX: usize = 3;

/// Masked pixel pairs that survived the nodata filter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gathered {
    pub pred: Vec<f64>,
    pub gt: Vec<f64>,
    /// Masked pixels dropped because either raster had nodata there.
    pub excluded_nodata: usize,
}

impl Gathered {
    pub fn deltas(&self) -> Vec<f64> {
        self.pred.iter().zip(&self.gt).map(|(p, g)| p - g).collect()
    }

    pub fn len(&self) -> usize {
        self.pred.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pred.is_empty()
    }

    pub fn extend(&mut self, other: Gathered) {
        self.pred.extend(other.pred);
        self.gt.extend(other.gt);
        self.excluded_nodata += other.excluded_nodata;
    }

    fn nonempty(&self) -> Result<&Self> {
        if self.is_empty() {
            return Err(Error::Evaluation("no valid pixels inside the mask".into()));
        }
        Ok(self)
    }
}

/// Collects `(pred, gt)` pairs where `mask` is 1 and both rasters have data.
pub fn gather(pred: &RasterGrid, gt: &RasterGrid, mask: &RasterGrid) -> Result<Gathered> {
    pred.ensure_same_grid(gt, "prediction vs ground truth")?;
    pred.ensure_same_grid(mask, "prediction vs mask")?;
    mask.ensure_binary()?;
    let mut out = Gathered::default();
    for i in 0..pred.len() {
        if mask.data()[i] != 1.0 {
            continue;
        }
        if pred.is_valid_at(i) && gt.is_valid_at(i) {
            out.pred.push(pred.data()[i] as f64);
            out.gt.push(gt.data()[i] as f64);
        } else {
            out.excluded_nodata += 1;
        }
    }
    Ok(out)
}

/// Mean absolute height difference in meters.
pub fn mae(pred: &RasterGrid, gt: &RasterGrid, mask: &RasterGrid) -> Result<f64> {
    mae_of(&gather(pred, gt, mask)?.nonempty()?.deltas())
}

pub fn rmse(pred: &RasterGrid, gt: &RasterGrid, mask: &RasterGrid) -> Result<f64> {
    rmse_of(&gather(pred, gt, mask)?.nonempty()?.deltas())
}

/// `1.4826 · median(|δ - median(δ)|)`.
pub fn nmad(pred: &RasterGrid, gt: &RasterGrid, mask: &RasterGrid) -> Result<f64> {
    nmad_of(&gather(pred, gt, mask)?.nonempty()?.deltas())
}

/// Pearson correlation of heights.
pub fn ncc(pred: &RasterGrid, gt: &RasterGrid, mask: &RasterGrid) -> Result<f64> {
    let g = gather(pred, gt, mask)?;
    ncc_of(&g.nonempty()?.pred, &g.gt)
}

/// All four metrics over `footprints` grown by `dilation_px`.
pub fn evaluate(pred: &RasterGrid, gt: &RasterGrid, footprints: &RasterGrid, dilation_px: usize) -> Result<MetricsReport> {
    let mask = dilate_mask(footprints, dilation_px)?;
    MetricsReport::from_gathered(&gather(pred, gt, &mask)?, dilation_px)
}

/// Metrics over the union of several scenes' masked pixels.
pub fn evaluate_pooled<'a>(
    scenes: impl IntoIterator<Item = (&'a RasterGrid, &'a RasterGrid, &'a RasterGrid)>,
    dilation_px: usize,
) -> Result<MetricsReport> {
    let mut all = Gathered::default();
    for (pred, gt, footprints) in scenes {
        all.extend(gather(pred, gt, &dilate_mask(footprints, dilation_px)?)?);
    }
    MetricsReport::from_gathered(&all, dilation_px)
}
