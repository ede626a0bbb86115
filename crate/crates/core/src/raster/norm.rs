use serde::{Deserialize, Serialize};

use super::RasterGrid;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Height,
    Intensity,
}

/// Global affine map between physical values and the generator's tanh range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub h_min: f64,
    pub h_max: f64,
    pub kind: NormKind,
}

impl NormSpec {
    pub fn new(h_min: f64, h_max: f64, kind: NormKind) -> Result<Self> {
        let spec = NormSpec { h_min, h_max, kind };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_min.is_finite() && self.h_max.is_finite() && self.h_max > self.h_min) {
            return Err(Error::Parameter(format!(
                "degenerate normalization range [{}, {}]",
                self.h_min, self.h_max
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn forward(&self, v: f64) -> f64 {
        (2.0 * (v - self.h_min) / (self.h_max - self.h_min) - 1.0).clamp(-1.0, 1.0)
    }

    #[inline]
    pub fn inverse(&self, t: f64) -> f64 {
        (t + 1.0) * 0.5 * (self.h_max - self.h_min) + self.h_min
    }

    pub fn span(&self) -> f64 {
        self.h_max - self.h_min
    }
}

/// Maps values into [-1, 1]. Nodata pixels become -1 and the result carries
/// no nodata sentinel.
pub fn normalize(raster: &RasterGrid, spec: &NormSpec) -> Result<RasterGrid> {
    spec.validate()?;
    let data = raster
        .data()
        .iter()
        .map(|&v| {
            if raster.is_nodata(v) {
                -1.0
            } else {
                spec.forward(v as f64) as f32
            }
        })
        .collect();
    raster.clone().with_nodata(None)?.with_data(data)
}

#[derive(Clone, Debug)]
pub struct Denormalized {
    pub raster: RasterGrid,
    /// Inputs outside [-1, 1] that were clamped before mapping.
    pub clamped: usize,
}

/// Inverse of [`normalize`]. Out-of-range inputs are clamped and counted.
pub fn denormalize(raster: &RasterGrid, spec: &NormSpec) -> Result<Denormalized> {
    spec.validate()?;
    let mut clamped = 0;
    let data = raster
        .data()
        .iter()
        .map(|&t| {
            let t = t as f64;
            let c = t.clamp(-1.0, 1.0);
            if c != t {
                clamped += 1;
            }
            spec.inverse(c) as f32
        })
        .collect();
    Ok(Denormalized {
        raster: raster.clone().with_nodata(None)?.with_data(data)?,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::RasterKind;
    use proptest::prelude::*;

    fn grid(values: Vec<f32>) -> RasterGrid {
        RasterGrid::new(1, values.len(), values, 0.5, (0.0, 0.0), None, RasterKind::Dsm).unwrap()
    }

    #[test]
    fn endpoints_and_midpoint() {
        let spec = NormSpec::new(0.0, 200.0, NormKind::Height).unwrap();
        let n = normalize(&grid(vec![0.0, 200.0, 100.0]), &spec).unwrap();
        assert_eq!(n.data(), &[-1.0, 1.0, 0.0]);
        let d = denormalize(&grid(vec![0.0, -1.0, 1.0]), &spec).unwrap();
        assert_eq!(d.raster.data(), &[100.0, 0.0, 200.0]);
        assert_eq!(d.clamped, 0);
    }

    #[test]
    fn degenerate_spec_is_rejected() {
        assert!(matches!(
            NormSpec::new(5.0, 5.0, NormKind::Height),
            Err(Error::Parameter(_))
        ));
        let bad = NormSpec { h_min: 3.0, h_max: 1.0, kind: NormKind::Height };
        assert!(normalize(&grid(vec![1.0]), &bad).is_err());
    }

    #[test]
    fn nodata_maps_to_minus_one_and_out_of_range_clamps() {
        let spec = NormSpec::new(0.0, 10.0, NormKind::Height).unwrap();
        let g = grid(vec![-9999.0, 5.0, 20.0]).with_nodata(Some(-9999.0)).unwrap();
        let n = normalize(&g, &spec).unwrap();
        assert_eq!(n.data(), &[-1.0, 0.0, 1.0]);
        assert_eq!(n.nodata(), None);
        let d = denormalize(&grid(vec![1.5, -2.0, 0.5]), &spec).unwrap();
        assert_eq!(d.clamped, 2);
        assert_eq!(d.raster.data(), &[10.0, 0.0, 7.5]);
    }

    proptest! {
        #[test]
        fn round_trip_within_tolerance(
            lo in -500.0f64..500.0,
            span in 0.5f64..1000.0,
            fracs in proptest::collection::vec(0.0f64..=1.0, 1..64),
        ) {
            let spec = NormSpec::new(lo, lo + span, NormKind::Height).unwrap();
            let values: Vec<f32> = fracs.iter().map(|f| (lo + f * span) as f32)
                .map(|v| v.clamp(lo as f32, (lo + span) as f32)).collect();
            let back = denormalize(&normalize(&grid(values.clone()), &spec).unwrap(), &spec).unwrap();
            for (&v, &b) in values.iter().zip(back.raster.data()) {
                let tol = 1e-6 * (v.abs() as f64).max(span);
                prop_assert!(((v - b) as f64).abs() <= tol, "{v} -> {b}");
            }
        }
    }
}
