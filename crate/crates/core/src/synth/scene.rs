use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RasterGrid, RasterKind};

/// Ridge rise above the eaves for pitched roofs, meters.
pub const RIDGE_RISE_RANGE_M: (f64, f64) = (2.0, 6.0);
const PLACEMENT_ATTEMPTS: usize = 200;
/// Minimum free pixels between footprints.
const FOOTPRINT_GAP_PX: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoofMix {
    pub flat: f64,
    pub gable: f64,
    pub hip: f64,
    pub zigzag: f64,
}

impl Default for RoofMix {
    fn default() -> Self {
        RoofMix {
            flat: 0.25,
            gable: 0.35,
            hip: 0.25,
            zigzag: 0.15,
        }
    }
}

impl RoofMix {
    fn weights(&self) -> [f64; 4] {
        [self.flat, self.gable, self.hip, self.zigzag]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub rows: usize,
    pub cols: usize,
    pub gsd_m: f64,
    pub n_buildings: usize,
    pub roof_mix: RoofMix,
    /// Eave heights, meters.
    pub height_range: (f64, f64),
    /// Side length range of a footprint (or zigzag segment), pixels.
    pub footprint_px: (usize, usize),
    /// Fraction of buildings left out of the ground truth but kept in the
    /// observed surface, emulating acquisition-time differences.
    pub omission_rate: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            rows: 256,
            cols: 256,
            gsd_m: 0.5,
            n_buildings: 12,
            roof_mix: RoofMix::default(),
            height_range: (6.0, 24.0),
            footprint_px: (12, 40),
            omission_rate: 0.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.rows == 0 || self.cols == 0 {
            return bad("scene must be at least 1x1".into());
        }
        if !(self.gsd_m.is_finite() && self.gsd_m > 0.0) {
            return bad(format!("gsd_m must be > 0, got {}", self.gsd_m));
        }
        let w = self.roof_mix.weights();
        if w.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return bad("roof_mix probabilities must be nonnegative".into());
        }
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("roof_mix probabilities sum to {total}, expected 1"));
        }
        let (lo, hi) = self.height_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return bad(format!("height_range must satisfy 0 < min <= max, got ({lo}, {hi})"));
        }
        let (a, b) = self.footprint_px;
        if a < 3 || b < a {
            return bad(format!("footprint_px must satisfy 3 <= min <= max, got ({a}, {b})"));
        }
        if self.n_buildings > 0 && (a + 2 > self.rows || a + 2 > self.cols) {
            return bad(format!(
                "smallest footprint ({a} px) does not fit inside a {}x{} scene",
                self.rows, self.cols
            ));
        }
        if !(0.0..=1.0).contains(&self.omission_rate) {
            return bad(format!("omission_rate must be in [0, 1], got {}", self.omission_rate));
        }
        Ok(())
    }

    /// Upper bound on any ground-truth height these settings can produce.
    pub fn max_height_m(&self) -> f64 {
        self.height_range.1 + RIDGE_RISE_RANGE_M.1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoofKind {
    Flat,
    Gable,
    Hip,
    Zigzag,
}

/// Axis-aligned pixel rectangle `[row, row + rows) x [col, col + cols)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Rect {
    fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.rows && c >= self.col && c < self.col + self.cols
    }

    fn intersects_grown(&self, other: &Rect, gap: usize) -> bool {
        let r0 = self.row.saturating_sub(gap);
        let c0 = self.col.saturating_sub(gap);
        let r1 = self.row + self.rows + gap;
        let c1 = self.col + self.cols + gap;
        other.row < r1 && other.row + other.rows > r0 && other.col < c1 && other.col + other.cols > c0
    }
}

/// Placement record of one building.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub kind: RoofKind,
    /// One rectangle, or three staggered segments for zigzag footprints.
    pub parts: Vec<Rect>,
    pub eave_m: f64,
    /// Zero for flat and zigzag roofs.
    pub ridge_rise_m: f64,
    /// Absent from the ground truth (present in the observed surface).
    pub omitted: bool,
}

impl Building {
    /// Roof height over pixel `(r, c)`, `None` outside the footprint.
    pub fn height_at(&self, r: usize, c: usize) -> Option<f64> {
        let part = self.parts.iter().find(|p| p.contains(r, c))?;
        // pixel-center coordinates relative to the rectangle
        let y = r as f64 + 0.5 - part.row as f64;
        let x = c as f64 + 0.5 - part.col as f64;
        let (h, w) = (part.rows as f64, part.cols as f64);
        let z = match self.kind {
            RoofKind::Flat | RoofKind::Zigzag => self.eave_m,
            RoofKind::Gable => {
                // ridge runs along the long axis, through the middle of the short one
                let (d, s) = if w >= h {
                    ((y - h / 2.0).abs(), h / 2.0)
                } else {
                    ((x - w / 2.0).abs(), w / 2.0)
                };
                self.eave_m + self.ridge_rise_m * (1.0 - d / s)
            }
            RoofKind::Hip => {
                let s = h.min(w) / 2.0;
                let edge = y.min(h - y).min(x).min(w - x);
                self.eave_m + self.ridge_rise_m * (edge / s).min(1.0)
            }
        };
        Some(z)
    }
}

/// A generated scene: ground truth, footprints, and the surface the
/// degradation starts from.
#[derive(Clone, Debug)]
pub struct Scene {
    pub gt_dsm: RasterGrid,
    pub footprints: RasterGrid,
    /// Equals `gt_dsm` unless buildings were omitted from the ground truth.
    pub observed_dsm: RasterGrid,
    pub buildings: Vec<Building>,
    pub requested: usize,
}

impl Scene {
    pub fn placed(&self) -> usize {
        self.buildings.len()
    }
}

fn random_building(spec: &SceneSpec, rng: &mut ChaCha8Rng, kinds: &WeightedIndex<f64>) -> Building {
    let kind = [RoofKind::Flat, RoofKind::Gable, RoofKind::Hip, RoofKind::Zigzag][kinds.sample(rng)];
    let (lo, hi) = spec.footprint_px;
    let side = |rng: &mut ChaCha8Rng| rng.gen_range(lo..=hi);
    let parts = match kind {
        RoofKind::Zigzag => {
            let a = side(rng).max(4);
            let b = side(rng).max(4);
            let (dr, dc) = (a / 2, b / 2);
            (0..3)
                .map(|k| Rect {
                    row: k * dr,
                    col: k * dc,
                    rows: a,
                    cols: b,
                })
                .collect()
        }
        _ => vec![Rect {
            row: 0,
            col: 0,
            rows: side(rng),
            cols: side(rng),
        }],
    };
    let eave_m = rng.gen_range(spec.height_range.0..=spec.height_range.1);
    let ridge_rise_m = match kind {
        RoofKind::Gable | RoofKind::Hip => rng.gen_range(RIDGE_RISE_RANGE_M.0..=RIDGE_RISE_RANGE_M.1),
        _ => 0.0,
    };
    let omitted = spec.omission_rate > 0.0 && rng.gen_bool(spec.omission_rate);
    Building {
        kind,
        parts,
        eave_m,
        ridge_rise_m,
        omitted,
    }
}

fn bounding_box(parts: &[Rect]) -> (usize, usize) {
    parts.iter().fold((0, 0), |(r, c), p| {
        (r.max(p.row + p.rows), c.max(p.col + p.cols))
    })
}

/// Builds a flat-terrain scene of prism buildings. Buildings that cannot be
/// placed after bounded retries are dropped; `Scene::placed` reports how
/// many made it.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut buildings: Vec<Building> = Vec::with_capacity(spec.n_buildings);

    if spec.n_buildings > 0 {
        let kinds = WeightedIndex::new(spec.roof_mix.weights())
            .map_err(|e| Error::Parameter(format!("roof_mix: {e}")))?;
        for _ in 0..spec.n_buildings {
            let mut template = random_building(spec, &mut rng, &kinds);
            let (bh, bw) = bounding_box(&template.parts);
            // keep one free pixel at the raster border
            if bh + 2 > spec.rows || bw + 2 > spec.cols {
                continue;
            }
            for _ in 0..PLACEMENT_ATTEMPTS {
                let r0 = rng.gen_range(1..=spec.rows - bh - 1);
                let c0 = rng.gen_range(1..=spec.cols - bw - 1);
                let candidate: Vec<Rect> = template
                    .parts
                    .iter()
                    .map(|p| Rect {
                        row: p.row + r0,
                        col: p.col + c0,
                        ..*p
                    })
                    .collect();
                let clash = buildings.iter().any(|b| {
                    b.parts.iter().any(|p| {
                        candidate
                            .iter()
                            .any(|q| p.intersects_grown(q, FOOTPRINT_GAP_PX))
                    })
                });
                if !clash {
                    template.parts = candidate;
                    buildings.push(template);
                    break;
                }
            }
        }
    }

    let (rows, cols) = (spec.rows, spec.cols);
    let mut gt = vec![0.0f32; rows * cols];
    let mut observed = vec![0.0f32; rows * cols];
    let mut mask = vec![0.0f32; rows * cols];
    for b in &buildings {
        for p in &b.parts {
            for r in p.row..p.row + p.rows {
                for c in p.col..p.col + p.cols {
                    let z = b.height_at(r, c).expect("pixel inside part") as f32;
                    let k = r * cols + c;
                    observed[k] = observed[k].max(z);
                    if !b.omitted {
                        gt[k] = gt[k].max(z);
                        mask[k] = 1.0;
                    }
                }
            }
        }
    }

    let grid = |data, kind| RasterGrid::new(rows, cols, data, spec.gsd_m, (0.0, 0.0), None, kind);
    Ok(Scene {
        gt_dsm: grid(gt, RasterKind::Dsm)?,
        footprints: grid(mask, RasterKind::Mask)?,
        observed_dsm: grid(observed, RasterKind::Dsm)?,
        buildings,
        requested: spec.n_buildings,
    })
}
