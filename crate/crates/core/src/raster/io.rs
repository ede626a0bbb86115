//! Canonical `.r32` raster format: a raw little-endian `f32` payload in
//! row-major order next to a `<name>.json` sidecar describing the grid.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{RasterGrid, RasterKind};
use crate::error::{Error, Result};

/// JSON sidecar of a `.r32` payload. Field order is part of the format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterHeader {
    pub rows: usize,
    pub cols: usize,
    pub gsd_m: f64,
    pub origin_x: f64,
    pub origin_y: f64,
    pub nodata: Option<f32>,
    pub kind: RasterKind,
}

impl RasterHeader {
    fn of(grid: &RasterGrid) -> Self {
        RasterHeader {
            rows: grid.rows(),
            cols: grid.cols(),
            gsd_m: grid.gsd_m(),
            origin_x: grid.origin().0,
            origin_y: grid.origin().1,
            nodata: grid.nodata(),
            kind: grid.kind(),
        }
    }
}

/// `dir/name.r32` → `dir/name.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Load a canonical `.r32` raster, or a single-band GeoTIFF when the
/// extension is `.tif`/`.tiff`.
pub fn load_raster(path: impl AsRef<Path>) -> Result<RasterGrid> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    if matches!(ext.as_deref(), Some("tif") | Some("tiff")) {
        return super::load_geotiff(path);
    }

    let header_path = sidecar_path(path);
    let header_text = fs::read_to_string(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: RasterHeader = serde_json::from_str(&header_text)
        .map_err(|e| Error::Format(format!("{}: {e}", header_path.display())))?;

    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Corruption(format!(
            "{}: payload length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    let expected = header.rows.checked_mul(header.cols).unwrap_or(usize::MAX);
    if bytes.len() / 4 != expected {
        return Err(Error::Corruption(format!(
            "{}: payload holds {} values, header declares {}x{}",
            path.display(),
            bytes.len() / 4,
            header.rows,
            header.cols
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    RasterGrid::new(
        header.rows,
        header.cols,
        data,
        header.gsd_m,
        (header.origin_x, header.origin_y),
        header.nodata,
        header.kind,
    )
}

/// Write `grid` as `path` (payload) plus its JSON sidecar.
pub fn write_raster(grid: &RasterGrid, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut bytes = Vec::with_capacity(grid.len() * 4);
    for v in grid.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;

    let header_path = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(&RasterHeader::of(grid))
        .map_err(|e| Error::json(&header_path, e))?;
    text.push('\n');
    fs::write(&header_path, text).map_err(|e| Error::io(&header_path, e))
}
