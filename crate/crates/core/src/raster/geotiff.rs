//! Read-only single-band GeoTIFF ingestion.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use tiff::decoder::{Decoder, DecodingResult};
use tiff::tags::Tag;
use tiff::ColorType;

use super::{RasterGrid, RasterKind};
use crate::error::{Error, Result};

/// Loads band 1 of a GeoTIFF as a DSM-kind grid.
///
/// Georeferencing comes from `ModelPixelScaleTag` and `ModelTiepointTag`
/// when present (otherwise gsd 1 m at origin 0,0); nodata from `GdalNodata`.
/// Rotated or sheared transforms are not supported.
pub fn load_geotiff(path: &Path) -> Result<RasterGrid> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let fmt = |e: tiff::TiffError| Error::Format(format!("{}: {e}", path.display()));
    let mut dec = Decoder::new(BufReader::new(file)).map_err(fmt)?;

    let (width, height) = dec.dimensions().map_err(fmt)?;
    match dec.colortype().map_err(fmt)? {
        ColorType::Gray(_) => {}
        other => {
            return Err(Error::Format(format!(
                "{}: expected a single-band image, found {other:?}",
                path.display()
            )))
        }
    }

    let scale = dec.get_tag_f64_vec(Tag::ModelPixelScaleTag).ok();
    let tie = dec.get_tag_f64_vec(Tag::ModelTiepointTag).ok();
    let nodata = dec
        .get_tag_ascii_string(Tag::GdalNodata)
        .ok()
        .and_then(|s| s.trim_matches(char::from(0)).trim().parse::<f64>().ok())
        .map(|v| v as f32);

    let gsd_m = match &scale {
        Some(s) if s.len() >= 2 => {
            if (s[0] - s[1]).abs() > 1e-9 * s[0].abs().max(1.0) {
                return Err(Error::Format(format!(
                    "{}: non-square pixels ({} x {}) are not supported",
                    path.display(),
                    s[0],
                    s[1]
                )));
            }
            s[0]
        }
        _ => 1.0,
    };
    let origin = match &tie {
        // (I, J, K, X, Y, Z): raster point (I, J) maps to world (X, Y).
        Some(t) if t.len() >= 6 => (t[3] - t[0] * gsd_m, t[4] + t[1] * gsd_m),
        _ => (0.0, 0.0),
    };

    let data: Vec<f32> = match dec.read_image().map_err(fmt)? {
        DecodingResult::U8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::U32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::U64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::I8(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I16(v) => v.into_iter().map(f32::from).collect(),
        DecodingResult::I32(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::I64(v) => v.into_iter().map(|x| x as f32).collect(),
        DecodingResult::F32(v) => v,
        DecodingResult::F64(v) => v.into_iter().map(|x| x as f32).collect(),
    };

    // Non-finite samples that are not the declared sentinel become nodata.
    let (data, nodata) = if data.iter().any(|v| !v.is_finite()) {
        let sentinel = nodata.filter(|v| v.is_finite()).unwrap_or(-9999.0);
        let data = data
            .into_iter()
            .map(|v| if v.is_finite() { v } else { sentinel })
            .collect();
        (data, Some(sentinel))
    } else {
        (data, nodata.filter(|v| v.is_finite()))
    };

    RasterGrid::new(
        height as usize,
        width as usize,
        data,
        gsd_m,
        origin,
        nodata,
        RasterKind::Dsm,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use tiff::encoder::{colortype, TiffEncoder};

    #[test]
    fn reads_float_geotiff_with_georeference() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("dsm.tif");
        let data: Vec<f32> = vec![1.0, 2.0, -9999.0, 4.0, 5.0, 6.0];
        {
            let f = File::create(&p).unwrap();
            let mut enc = TiffEncoder::new(f).unwrap();
            let mut img = enc.new_image::<colortype::Gray32Float>(3, 2).unwrap();
            img.encoder()
                .write_tag(Tag::ModelPixelScaleTag, &[0.5f64, 0.5, 0.0][..])
                .unwrap();
            img.encoder()
                .write_tag(Tag::ModelTiepointTag, &[0.0f64, 0.0, 0.0, 390000.0, 5820000.0, 0.0][..])
                .unwrap();
            img.encoder().write_tag(Tag::GdalNodata, "-9999").unwrap();
            img.write_data(&data).unwrap();
        }
        let g = load_raster_any(&p);
        assert_eq!(g.shape(), (2, 3));
        assert_eq!(g.gsd_m(), 0.5);
        assert_eq!(g.origin(), (390000.0, 5820000.0));
        assert_eq!(g.nodata(), Some(-9999.0));
        assert_eq!(g.data(), &data[..]);
        assert_eq!(g.valid_count(), 5);
    }

    fn load_raster_any(p: &Path) -> RasterGrid {
        crate::raster::load_raster(p).unwrap()
    }

    #[test]
    fn rejects_rgb() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgb.tif");
        {
            let f = File::create(&p).unwrap();
            let mut enc = TiffEncoder::new(f).unwrap();
            enc.write_image::<colortype::RGB8>(1, 1, &[1, 2, 3]).unwrap();
        }
        assert!(matches!(load_geotiff(&p), Err(Error::Format(_))));
    }
}
