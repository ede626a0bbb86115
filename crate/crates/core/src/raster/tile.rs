use serde::{Deserialize, Serialize};

use super::{RasterGrid, RasterKind};
use crate::error::{Error, Result};

/// How a raster was cut into square patches. Padding is applied on the
/// bottom and right edges only, by mirror reflection without edge repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileLayout {
    pub tile_size: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
    pub pad_rows: usize,
    pub pad_cols: usize,
    /// (tiles down, tiles across)
    pub grid: (usize, usize),
    pub gsd_m: f64,
    pub origin: (f64, f64),
    pub nodata: Option<f32>,
    pub kind: RasterKind,
}

impl TileLayout {
    pub fn tile_count(&self) -> usize {
        self.grid.0 * self.grid.1
    }

    pub fn padded_shape(&self) -> (usize, usize) {
        (self.rows + self.pad_rows, self.cols + self.pad_cols)
    }

    /// Upper-left pixel of tile `i` (row-major) in padded coordinates.
    pub fn tile_offset(&self, i: usize) -> (usize, usize) {
        ((i / self.grid.1) * self.stride, (i % self.grid.1) * self.stride)
    }
}

/// Tiles along one axis and the padding needed to cover `len` pixels.
fn axis_plan(len: usize, tile: usize, stride: usize) -> (usize, usize) {
    let n = if len <= tile {
        1
    } else {
        (len - tile).div_ceil(stride) + 1
    };
    let padded = (n - 1) * stride + tile;
    (n, padded - len)
}

#[inline]
fn reflect(i: usize, len: usize) -> usize {
    if i < len {
        i
    } else {
        2 * (len - 1) - i
    }
}

/// Cuts `raster` into `tile_size`² patches on a `stride` grid, row-major.
pub fn tile(raster: &RasterGrid, tile_size: usize, stride: usize) -> Result<(Vec<RasterGrid>, TileLayout)> {
    if tile_size == 0 || stride == 0 {
        return Err(Error::Parameter("tile_size and stride must be >= 1".into()));
    }
    if stride > tile_size {
        return Err(Error::Parameter(format!(
            "stride {stride} exceeds tile size {tile_size}; tiles would leave gaps"
        )));
    }
    let (rows, cols) = raster.shape();
    let (n_r, pad_r) = axis_plan(rows, tile_size, stride);
    let (n_c, pad_c) = axis_plan(cols, tile_size, stride);
    // Mirror padding cannot reach further than the raster itself.
    if pad_r >= rows || pad_c >= cols {
        return Err(Error::Parameter(format!(
            "tile size {tile_size} is larger than the reflect-padded {rows}x{cols} raster allows"
        )));
    }

    let layout = TileLayout {
        tile_size,
        stride,
        rows,
        cols,
        pad_rows: pad_r,
        pad_cols: pad_c,
        grid: (n_r, n_c),
        gsd_m: raster.gsd_m(),
        origin: raster.origin(),
        nodata: raster.nodata(),
        kind: raster.kind(),
    };

    let src = raster.data();
    let mut patches = Vec::with_capacity(n_r * n_c);
    for i in 0..n_r * n_c {
        let (r0, c0) = layout.tile_offset(i);
        let mut data = Vec::with_capacity(tile_size * tile_size);
        for r in r0..r0 + tile_size {
            let sr = reflect(r, rows);
            for c in c0..c0 + tile_size {
                data.push(src[sr * cols + reflect(c, cols)]);
            }
        }
        let origin = raster.pixel_corner(r0, c0);
        patches.push(RasterGrid::new(
            tile_size,
            tile_size,
            data,
            raster.gsd_m(),
            origin,
            raster.nodata(),
            raster.kind(),
        )?);
    }
    Ok((patches, layout))
}

/// Reassembles patches produced by [`tile`]. Overlaps are averaged with
/// uniform weights (nodata contributions skipped) and padding is cropped.
pub fn untile(patches: &[RasterGrid], layout: &TileLayout) -> Result<RasterGrid> {
    if patches.len() != layout.tile_count() {
        return Err(Error::Parameter(format!(
            "layout expects {} patches, got {}",
            layout.tile_count(),
            patches.len()
        )));
    }
    let t = layout.tile_size;
    let (pr, pc) = layout.padded_shape();
    let mut sum = vec![0.0f64; pr * pc];
    let mut count = vec![0u32; pr * pc];
    for (i, p) in patches.iter().enumerate() {
        if p.shape() != (t, t) {
            return Err(Error::Parameter(format!(
                "patch {i} is {:?}, expected {t}x{t}",
                p.shape()
            )));
        }
        let (r0, c0) = layout.tile_offset(i);
        for r in 0..t {
            let row = &p.data()[r * t..(r + 1) * t];
            let base = (r0 + r) * pc + c0;
            for (c, &v) in row.iter().enumerate() {
                if p.is_nodata(v) {
                    continue;
                }
                sum[base + c] += v as f64;
                count[base + c] += 1;
            }
        }
    }

    let fill = layout.nodata.unwrap_or(f32::NAN);
    let mut data = Vec::with_capacity(layout.rows * layout.cols);
    for r in 0..layout.rows {
        for c in 0..layout.cols {
            let k = r * pc + c;
            data.push(if count[k] == 0 {
                fill
            } else {
                (sum[k] / count[k] as f64) as f32
            });
        }
    }
    RasterGrid::new(
        layout.rows,
        layout.cols,
        data,
        layout.gsd_m,
        layout.origin,
        layout.nodata,
        layout.kind,
    )
}
