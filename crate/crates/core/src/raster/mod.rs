//! Single-band raster grids and the operations the refinement pipeline
//! needs on them: file I/O, height normalization, tiling and binary-mask
//! morphology.
//!
//! Grids are north-up. `origin` is the world coordinate (meters) of the
//! upper-left corner of pixel `(0, 0)`; x grows with the column index and
//! y shrinks with the row index.

mod geotiff;
mod io;
mod morph;
mod norm;
mod tile;

pub use geotiff::load_geotiff;
pub use io::{load_raster, sidecar_path, write_raster, RasterHeader};
pub use morph::dilate_mask;
pub use norm::{denormalize, normalize, Denormalized, NormKind, NormSpec};
pub use tile::{tile, untile, TileLayout};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a raster carries. Masks are restricted to {0, 1} without nodata.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RasterKind {
    Dsm,
    Pan,
    Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrid {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    gsd_m: f64,
    origin: (f64, f64),
    nodata: Option<f32>,
    kind: RasterKind,
}

impl RasterGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<f32>,
        gsd_m: f64,
        origin: (f64, f64),
        nodata: Option<f32>,
        kind: RasterKind,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Validation(format!(
                "raster must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Corruption(format!(
                "payload has {} values, expected {rows}x{cols} = {}",
                data.len(),
                rows * cols
            )));
        }
        if !(gsd_m.is_finite() && gsd_m > 0.0) {
            return Err(Error::Validation(format!("gsd_m must be > 0, got {gsd_m}")));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::Validation("origin must be finite".into()));
        }
        if let Some(nd) = nodata {
            if !nd.is_finite() {
                return Err(Error::Validation("nodata sentinel must be finite".into()));
            }
        }
        if kind == RasterKind::Mask {
            if nodata.is_some() {
                return Err(Error::Validation("mask rasters cannot carry nodata".into()));
            }
            if let Some(v) = data.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(Error::Validation(format!("mask contains non-binary value {v}")));
            }
        } else if let Some(v) = data
            .iter()
            .find(|&&v| !v.is_finite() && Some(v) != nodata)
        {
            return Err(Error::Validation(format!("raster contains non-finite value {v}")));
        }
        Ok(Self {
            rows,
            cols,
            data,
            gsd_m,
            origin,
            nodata,
            kind,
        })
    }

    /// A constant-valued grid at the origin without nodata.
    pub fn filled(rows: usize, cols: usize, value: f32, gsd_m: f64, kind: RasterKind) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols], gsd_m, (0.0, 0.0), None, kind)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn gsd_m(&self) -> f64 {
        self.gsd_m
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn nodata(&self) -> Option<f32> {
        self.nodata
    }

    pub fn kind(&self) -> RasterKind {
        self.kind
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn is_nodata(&self, v: f32) -> bool {
        self.nodata == Some(v)
    }

    /// True where the pixel holds a real value.
    pub fn is_valid_at(&self, idx: usize) -> bool {
        !self.is_nodata(self.data[idx])
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&v| !self.is_nodata(v)).count()
    }

    /// 1 where the pixel holds data, 0 at nodata.
    pub fn validity_mask(&self) -> RasterGrid {
        let data = self
            .data
            .iter()
            .map(|&v| if self.is_nodata(v) { 0.0 } else { 1.0 })
            .collect();
        RasterGrid {
            data,
            nodata: None,
            kind: RasterKind::Mask,
            ..self.clone()
        }
    }

    /// Same geometry and metadata, new payload. Validated like `new`.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(self.rows, self.cols, data, self.gsd_m, self.origin, self.nodata, self.kind)
    }

    pub fn with_kind(mut self, kind: RasterKind) -> Result<Self> {
        self.kind = kind;
        Self::new(self.rows, self.cols, self.data, self.gsd_m, self.origin, self.nodata, kind)
    }

    pub fn with_nodata(self, nodata: Option<f32>) -> Result<Self> {
        Self::new(self.rows, self.cols, self.data, self.gsd_m, self.origin, nodata, self.kind)
    }

    pub fn with_origin(mut self, origin: (f64, f64)) -> Self {
        self.origin = origin;
        self
    }

    pub fn same_grid(&self, other: &RasterGrid) -> bool {
        self.shape() == other.shape() && self.gsd_m == other.gsd_m
    }

    pub(crate) fn ensure_same_grid(&self, other: &RasterGrid, what: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Input(format!(
                "{what}: shape mismatch {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        if self.gsd_m != other.gsd_m {
            return Err(Error::Input(format!(
                "{what}: gsd mismatch {} vs {}",
                self.gsd_m, other.gsd_m
            )));
        }
        Ok(())
    }

    pub(crate) fn ensure_binary(&self) -> Result<()> {
        if self.nodata.is_some() {
            return Err(Error::Validation("mask carries a nodata sentinel".into()));
        }
        match self.data.iter().find(|&&v| v != 0.0 && v != 1.0) {
            Some(v) => Err(Error::Validation(format!("mask contains non-binary value {v}"))),
            None => Ok(()),
        }
    }

    /// Finite (min, max) over valid pixels, `None` if every pixel is nodata.
    pub fn value_range(&self) -> Option<(f32, f32)> {
        self.data
            .iter()
            .filter(|&&v| !self.is_nodata(v))
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    /// Horizontal mirror (columns reversed), used for flip augmentation.
    pub fn flip_horizontal(&self) -> RasterGrid {
        let mut data = Vec::with_capacity(self.data.len());
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            data.extend(row.iter().rev());
        }
        RasterGrid { data, ..self.clone() }
    }

    /// Copy of the window starting at `(row0, col0)`; must lie inside the grid.
    pub fn crop(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<RasterGrid> {
        if rows == 0 || cols == 0 || row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(Error::Parameter(format!(
                "crop window {rows}x{cols} at ({row0},{col0}) exceeds {}x{}",
                self.rows, self.cols
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            data.extend_from_slice(&self.data[r * self.cols + col0..r * self.cols + col0 + cols]);
        }
        Ok(RasterGrid {
            rows,
            cols,
            data,
            origin: self.pixel_corner(row0, col0),
            ..self.clone()
        })
    }

    /// World coordinate of the upper-left corner of pixel `(row, col)`.
    pub fn pixel_corner(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin.0 + col as f64 * self.gsd_m,
            self.origin.1 - row as f64 * self.gsd_m,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_invariants() {
        assert!(matches!(
            RasterGrid::new(0, 3, vec![], 0.5, (0.0, 0.0), None, RasterKind::Dsm),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            RasterGrid::new(2, 2, vec![0.0; 3], 0.5, (0.0, 0.0), None, RasterKind::Dsm),
            Err(Error::Corruption(_))
        ));
        assert!(RasterGrid::new(1, 1, vec![0.0], 0.0, (0.0, 0.0), None, RasterKind::Dsm).is_err());
        assert!(RasterGrid::new(1, 2, vec![0.0, 2.0], 1.0, (0.0, 0.0), None, RasterKind::Mask).is_err());
        assert!(RasterGrid::new(1, 1, vec![0.0], 1.0, (0.0, 0.0), Some(0.0), RasterKind::Mask).is_err());
        assert!(RasterGrid::new(1, 1, vec![f32::NAN], 1.0, (0.0, 0.0), None, RasterKind::Dsm).is_err());
    }

    #[test]
    fn nodata_sentinel_is_allowed_in_data() {
        let g = RasterGrid::new(1, 3, vec![1.0, -9999.0, 2.0], 0.5, (0.0, 0.0), Some(-9999.0), RasterKind::Dsm)
            .unwrap();
        assert_eq!(g.valid_count(), 2);
        assert_eq!(g.value_range(), Some((1.0, 2.0)));
        assert_eq!(g.validity_mask().data(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn crop_and_flip() {
        let g = RasterGrid::new(2, 3, vec![1., 2., 3., 4., 5., 6.], 0.5, (10.0, 20.0), None, RasterKind::Dsm)
            .unwrap();
        let c = g.crop(1, 1, 1, 2).unwrap();
        assert_eq!(c.data(), &[5., 6.]);
        assert_eq!(c.origin(), (10.5, 19.5));
        assert_eq!(g.flip_horizontal().data(), &[3., 2., 1., 6., 5., 4.]);
        assert!(g.crop(1, 2, 1, 2).is_err());
    }
}
