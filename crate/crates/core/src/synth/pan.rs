use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RasterGrid, RasterKind};

pub const GROUND_ALBEDO: f64 = 0.45;
pub const ROOF_ALBEDO: f64 = 0.75;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanSpec {
    /// Clockwise from north, degrees.
    pub sun_azimuth_deg: f64,
    pub sun_elevation_deg: f64,
    /// Relative spread of per-building roof albedo.
    pub albedo_noise: f64,
    pub seed: u64,
}

impl Default for PanSpec {
    fn default() -> Self {
        PanSpec {
            sun_azimuth_deg: 135.0,
            sun_elevation_deg: 45.0,
            albedo_noise: 0.15,
            seed: 0,
        }
    }
}

/// Unit vector towards the sun in (east, north, up).
pub fn sun_vector(azimuth_deg: f64, elevation_deg: f64) -> [f64; 3] {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    [az.sin() * el.cos(), az.cos() * el.cos(), el.sin()]
}

/// Surface gradient (dz/dx east, dz/dy north) by central differences,
/// one-sided at the border.
pub(crate) fn gradient(z: &[f32], rows: usize, cols: usize, gsd: f64, r: usize, c: usize) -> (f64, f64) {
    let at = |r: usize, c: usize| z[r * cols + c] as f64;
    let (cl, ch) = (c.saturating_sub(1), (c + 1).min(cols - 1));
    let (rl, rh) = (r.saturating_sub(1), (r + 1).min(rows - 1));
    let dzdx = if ch > cl {
        (at(r, ch) - at(r, cl)) / ((ch - cl) as f64 * gsd)
    } else {
        0.0
    };
    // rows grow southwards
    let dzdy = if rh > rl {
        -(at(rh, c) - at(rl, c)) / ((rh - rl) as f64 * gsd)
    } else {
        0.0
    };
    (dzdx, dzdy)
}

/// 4-connected labels of pixels above ground, in raster-scan order; 0 is ground.
fn label_components(z: &[f32], rows: usize, cols: usize) -> (Vec<u32>, u32) {
    let mut labels = vec![0u32; z.len()];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for start in 0..z.len() {
        if z[start] <= 0.0 || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(k) = stack.pop() {
            let (r, c) = (k / cols, k % cols);
            let mut visit = |n: usize| {
                if z[n] > 0.0 && labels[n] == 0 {
                    labels[n] = next;
                    stack.push(n);
                }
            };
            if r > 0 {
                visit(k - cols);
            }
            if r + 1 < rows {
                visit(k + cols);
            }
            if c > 0 {
                visit(k - 1);
            }
            if c + 1 < cols {
                visit(k + 1);
            }
        }
    }
    (labels, next)
}

/// Lambertian rendering of the ground-truth surface with per-building roof
/// albedo, clamped to [0, 1]. Nodata pixels are treated as ground.
pub fn render_pan(gt_dsm: &RasterGrid, spec: &PanSpec) -> Result<RasterGrid> {
    if !(spec.sun_elevation_deg > 0.0 && spec.sun_elevation_deg <= 90.0) {
        return Err(Error::Parameter(format!(
            "sun elevation must be in (0, 90], got {}",
            spec.sun_elevation_deg
        )));
    }
    if !(spec.albedo_noise.is_finite() && (0.0..1.0).contains(&spec.albedo_noise)) {
        return Err(Error::Parameter(format!(
            "albedo_noise must be in [0, 1), got {}",
            spec.albedo_noise
        )));
    }
    let (rows, cols) = gt_dsm.shape();
    let z: Vec<f32> = gt_dsm
        .data()
        .iter()
        .map(|&v| if gt_dsm.is_nodata(v) { 0.0 } else { v })
        .collect();
    let sun = sun_vector(spec.sun_azimuth_deg, spec.sun_elevation_deg);

    let (labels, n_labels) = label_components(&z, rows, cols);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let albedo: Vec<f64> = std::iter::once(GROUND_ALBEDO)
        .chain((0..n_labels).map(|_| {
            let jitter = if spec.albedo_noise > 0.0 {
                rng.gen_range(-spec.albedo_noise..=spec.albedo_noise)
            } else {
                0.0
            };
            ROOF_ALBEDO * (1.0 + jitter)
        }))
        .collect();

    let mut out = Vec::with_capacity(z.len());
    for r in 0..rows {
        for c in 0..cols {
            let (gx, gy) = gradient(&z, rows, cols, gt_dsm.gsd_m(), r, c);
            let norm = (gx * gx + gy * gy + 1.0).sqrt();
            let cos = ((-gx * sun[0] - gy * sun[1] + sun[2]) / norm).max(0.0);
            let v = albedo[labels[r * cols + c] as usize] * cos;
            out.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    RasterGrid::new(rows, cols, out, gt_dsm.gsd_m(), gt_dsm.origin(), None, RasterKind::Pan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{Building, Rect, RoofKind};

    #[test]
    fn flat_overhead_sun_is_constant() {
        let g = RasterGrid::filled(32, 32, 0.0, 0.5, RasterKind::Dsm).unwrap();
        let spec = PanSpec { sun_elevation_deg: 90.0, albedo_noise: 0.0, ..PanSpec::default() };
        let pan = render_pan(&g, &spec).unwrap();
        let first = pan.data()[0];
        assert!(pan.data().iter().all(|&v| v == first));
        assert!((first as f64 - GROUND_ALBEDO).abs() < 1e-7);
    }

    #[test]
    fn gable_planes_match_lambert_cosine() {
        // 11-row gable, ridge along columns through row 5 (relative)
        let b = Building {
            kind: RoofKind::Gable,
            parts: vec![Rect { row: 10, col: 8, rows: 11, cols: 24 }],
            eave_m: 8.0,
            ridge_rise_m: 4.0,
            omitted: false,
        };
        let (rows, cols, gsd) = (40usize, 40usize, 0.5f64);
        let mut z = vec![0.0f32; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                if let Some(h) = b.height_at(r, c) {
                    z[r * cols + c] = h as f32;
                }
            }
        }
        let g = RasterGrid::new(rows, cols, z, gsd, (0.0, 0.0), None, RasterKind::Dsm).unwrap();
        let spec = PanSpec { sun_azimuth_deg: 180.0, sun_elevation_deg: 40.0, albedo_noise: 0.0, seed: 0 };
        let pan = render_pan(&g, &spec).unwrap();

        // Analytic plane normals: slope k = rise / (half-span in meters).
        let k = 4.0 / (5.5 * gsd);
        let el = 40f64.to_radians();
        // north plane rises southwards -> faces north, away from a southern sun
        let north = ROOF_ALBEDO * ((-k * el.cos() + el.sin()) / (1.0 + k * k).sqrt()).max(0.0);
        let south = ROOF_ALBEDO * ((k * el.cos() + el.sin()) / (1.0 + k * k).sqrt());
        for c in 9..31 {
            for r in 11..=14 {
                assert!((pan.get(r, c) as f64 - north).abs() < 1e-5, "north ({r},{c})");
            }
            for r in 16..=19 {
                assert!((pan.get(r, c) as f64 - south).abs() < 1e-5, "south ({r},{c})");
            }
        }
        assert!((north - south).abs() > 0.1);
    }

    #[test]
    fn output_is_unit_range() {
        for seed in 0..5 {
            let scene = crate::synth::generate_scene(&crate::synth::SceneSpec {
                rows: 64,
                cols: 64,
                n_buildings: 5,
                footprint_px: (6, 16),
                seed,
                ..Default::default()
            })
            .unwrap();
            let pan = render_pan(&scene.gt_dsm, &PanSpec { seed, albedo_noise: 0.5, ..PanSpec::default() }).unwrap();
            assert!(pan.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn rejects_bad_elevation() {
        let g = RasterGrid::filled(4, 4, 0.0, 0.5, RasterKind::Dsm).unwrap();
        assert!(render_pan(&g, &PanSpec { sun_elevation_deg: 0.0, ..PanSpec::default() }).is_err());
        assert!(render_pan(&g, &PanSpec { sun_elevation_deg: 91.0, ..PanSpec::default() }).is_err());
    }
}
