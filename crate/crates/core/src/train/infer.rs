use std::path::Path;

use super::load_generator;
use crate::error::{Error, Result};
use crate::nets::WNetGenerator;
use crate::nn::{Mode, Tensor, TensorShape};
use crate::raster::{denormalize, normalize, tile, untile, NormSpec, RasterGrid, RasterKind};

/// A refined DSM with the validity of the input DSM alongside.
#[derive(Clone, Debug)]
pub struct Inference {
    pub refined: RasterGrid,
    /// 1 where the input DSM had data, 0 at its nodata pixels.
    pub validity: RasterGrid,
    /// Generator outputs clamped into [-1, 1] before denormalizing.
    pub clamped: usize,
}

/// Runs the generator over non-overlapping patches of already normalized
/// rasters and stitches the normalized output back together.
pub fn tiled_forward(g: &mut WNetGenerator, dsm: &RasterGrid, pan: &RasterGrid) -> Result<RasterGrid> {
    let size = g.spec.in_size;
    let (dsm_tiles, layout) = tile(dsm, size, size)?;
    let (pan_tiles, _) = tile(pan, size, size)?;
    let shape = TensorShape::new(1, 1, size, size);
    let mut out = Vec::with_capacity(dsm_tiles.len());
    for (d, p) in dsm_tiles.iter().zip(&pan_tiles) {
        let y = g.forward(
            &Tensor::new(shape, d.data().to_vec())?,
            &Tensor::new(shape, p.data().to_vec())?,
            Mode::Eval,
        )?;
        out.push(d.with_data(y.into_data())?);
    }
    untile(&out, &layout)
}

/// Refines `dsm` with an in-memory generator.
pub fn infer_with(
    g: &mut WNetGenerator,
    norm: &NormSpec,
    pan_norm: &NormSpec,
    dsm: &RasterGrid,
    pan: &RasterGrid,
) -> Result<Inference> {
    if dsm.shape() != pan.shape() || dsm.gsd_m() != pan.gsd_m() {
        return Err(Error::Input(format!(
            "DSM {:?} @ {} m and PAN {:?} @ {} m are not co-registered",
            dsm.shape(),
            dsm.gsd_m(),
            pan.shape(),
            pan.gsd_m()
        )));
    }
    let out = tiled_forward(g, &normalize(dsm, norm)?, &normalize(pan, pan_norm)?)?;
    let d = denormalize(&out, norm)?;
    Ok(Inference {
        refined: d.raster.with_kind(RasterKind::Dsm)?,
        validity: dsm.validity_mask(),
        clamped: d.clamped,
    })
}

/// Loads the generator from `checkpoint` and refines `dsm`.
pub fn infer(checkpoint: &Path, dsm: &RasterGrid, pan: &RasterGrid) -> Result<Inference> {
    let (manifest, mut g) = load_generator(checkpoint)?;
    infer_with(&mut g, &manifest.norm_spec, &manifest.pan_norm_spec, dsm, pan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{build_generator, GeneratorSpec};
    use crate::raster::NormKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec() -> GeneratorSpec {
        GeneratorSpec {
            in_size: 32,
            base_width: 2,
            n_levels: 5,
            fusion_width: 2,
            ..GeneratorSpec::default()
        }
    }

    fn raster(n: usize, kind: RasterKind, seed: u64, hi: f32) -> RasterGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n).map(|_| rng.gen_range(0.0..hi)).collect();
        RasterGrid::new(n, n, data, 0.5, (100.0, 200.0), None, kind).unwrap()
    }

    fn norms() -> (NormSpec, NormSpec) {
        (
            NormSpec::new(0.0, 30.0, NormKind::Height).unwrap(),
            NormSpec::new(0.0, 1.0, NormKind::Intensity).unwrap(),
        )
    }

    #[test]
    fn single_tile_matches_direct_forward() {
        let mut g = build_generator(&spec(), 1).unwrap();
        let (n, pn) = norms();
        let dsm = raster(32, RasterKind::Dsm, 1, 30.0);
        let pan = raster(32, RasterKind::Pan, 2, 1.0);
        let out = infer_with(&mut g, &n, &pn, &dsm, &pan).unwrap();
        let shape = TensorShape::new(1, 1, 32, 32);
        let direct = g
            .forward(
                &Tensor::new(shape, normalize(&dsm, &n).unwrap().into_data()).unwrap(),
                &Tensor::new(shape, normalize(&pan, &pn).unwrap().into_data()).unwrap(),
                Mode::Eval,
            )
            .unwrap();
        let expected = denormalize(&dsm.with_data(direct.into_data()).unwrap(), &n).unwrap().raster;
        assert_eq!(out.refined.data(), expected.data());
        assert_eq!(out.refined.origin(), dsm.origin());
    }

    #[test]
    fn larger_rasters_keep_their_shape_and_range() {
        let mut g = build_generator(&spec(), 1).unwrap();
        let (n, pn) = norms();
        let out = infer_with(&mut g, &n, &pn, &raster(80, RasterKind::Dsm, 3, 30.0), &raster(80, RasterKind::Pan, 4, 1.0))
            .unwrap();
        assert_eq!(out.refined.shape(), (80, 80));
        assert!(out.refined.data().iter().all(|&v| (0.0..=30.0).contains(&v)));
        assert_eq!(out.validity.kind(), RasterKind::Mask);
    }

    #[test]
    fn rejects_misaligned_inputs() {
        let mut g = build_generator(&spec(), 1).unwrap();
        let (n, pn) = norms();
        let r = infer_with(&mut g, &n, &pn, &raster(64, RasterKind::Dsm, 3, 30.0), &raster(32, RasterKind::Pan, 4, 1.0));
        assert!(matches!(r, Err(Error::Input(_))));
    }
}
