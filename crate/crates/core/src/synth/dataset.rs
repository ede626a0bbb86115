//! On-disk synthetic datasets: `.r32` scene quadruples plus `dataset.json`.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{degrade_to_stereo_dsm, generate_scene, render_pan, DegradationSpec, PanSpec, SceneSpec};
use crate::error::{Error, Result};
use crate::raster::{load_raster, write_raster, NormKind, NormSpec, RasterGrid};

pub const MANIFEST_NAME: &str = "dataset.json";

/// Everything needed to regenerate a dataset. Per-scene seeds are derived
/// from `seed`; the seeds inside the nested specs are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub scene: SceneSpec,
    pub degradation: DegradationSpec,
    pub pan: PanSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 0,
            scene: SceneSpec::default(),
            degradation: DegradationSpec::default(),
            pan: PanSpec::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub seed: u64,
    pub gt: PathBuf,
    pub stereo: PathBuf,
    pub pan: PathBuf,
    pub mask: PathBuf,
    pub buildings_requested: usize,
    pub buildings_placed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub norm_spec: NormSpec,
    pub pan_norm_spec: NormSpec,
    pub gsd_m: f64,
    pub seed: u64,
    pub splits: Splits,
    pub scenes: Vec<SceneEntry>,
    /// Directory the scene paths are relative to; not serialized.
    #[serde(skip)]
    pub root: PathBuf,
}

/// All rasters of one scene, loaded.
#[derive(Clone, Debug)]
pub struct SceneRasters {
    pub id: String,
    pub gt: RasterGrid,
    pub stereo: RasterGrid,
    pub pan: RasterGrid,
    pub mask: RasterGrid,
}

/// SplitMix64 finalizer, used to derive independent sub-seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 80/10/10 partition of `ids` after a seeded shuffle.
pub fn split_ids(ids: &[String], seed: u64) -> Splits {
    let mut order: Vec<String> = ids.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5_1117)));
    let n = order.len();
    let n_train = ((n as f64) * 0.8).round() as usize;
    let n_val = (((n as f64) * 0.1).round() as usize).min(n - n_train);
    let mut splits = Splits {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
    splits.train.sort();
    splits.val.sort();
    splits.test.sort();
    splits
}

/// One fully derived scene: ground truth, stereo DSM, PAN image, footprints.
pub fn synth_scene(config: &SynthConfig, index: usize) -> Result<(u64, super::Scene, RasterGrid, RasterGrid)> {
    let seed = mix_seed(config.seed, index as u64);
    let scene = generate_scene(&SceneSpec {
        seed: mix_seed(seed, 1),
        ..config.scene.clone()
    })?;
    let stereo = degrade_to_stereo_dsm(
        &scene.observed_dsm,
        &DegradationSpec {
            seed: mix_seed(seed, 2),
            ..config.degradation.clone()
        },
    )?;
    let pan = render_pan(
        &scene.gt_dsm,
        &PanSpec {
            seed: mix_seed(seed, 3),
            ..config.pan.clone()
        },
    )?;
    Ok((seed, scene, stereo, pan))
}

/// Writes `count` scenes under `out_dir/scenes/` and the manifest at
/// `out_dir/dataset.json`.
pub fn generate_dataset(config: &SynthConfig, count: usize, out_dir: &Path) -> Result<DatasetManifest> {
    config.scene.validate()?;
    config.degradation.validate()?;
    fs::create_dir_all(out_dir.join("scenes")).map_err(|e| Error::io(out_dir, e))?;

    let mut entries = Vec::with_capacity(count);
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for i in 0..count {
        let (seed, scene, stereo, pan) = synth_scene(config, i)?;
        for g in [&scene.gt_dsm, &stereo] {
            if let Some((a, b)) = g.value_range() {
                lo = lo.min(a);
                hi = hi.max(b);
            }
        }
        let id = format!("scene_{i:04}");
        let rel = |suffix: &str| PathBuf::from("scenes").join(format!("{id}_{suffix}.r32"));
        let entry = SceneEntry {
            id: id.clone(),
            seed,
            gt: rel("gt"),
            stereo: rel("stereo"),
            pan: rel("pan"),
            mask: rel("mask"),
            buildings_requested: scene.requested,
            buildings_placed: scene.placed(),
        };
        write_raster(&scene.gt_dsm, out_dir.join(&entry.gt))?;
        write_raster(&stereo, out_dir.join(&entry.stereo))?;
        write_raster(&pan, out_dir.join(&entry.pan))?;
        write_raster(&scene.footprints, out_dir.join(&entry.mask))?;
        entries.push(entry);
    }

    // Global height range over every scene, widened to whole meters.
    let norm_spec = if lo.is_finite() && hi.is_finite() && hi > lo {
        NormSpec::new((lo as f64).floor(), (hi as f64).ceil(), NormKind::Height)?
    } else {
        NormSpec::new(0.0, config.scene.max_height_m().max(1.0), NormKind::Height)?
    };
    let ids: Vec<String> = entries.iter().map(|e| e.id.clone()).collect();
    let manifest = DatasetManifest {
        norm_spec,
        pan_norm_spec: NormSpec::new(0.0, 1.0, NormKind::Intensity)?,
        gsd_m: config.scene.gsd_m,
        seed: config.seed,
        splits: split_ids(&ids, config.seed),
        scenes: entries,
        root: out_dir.to_path_buf(),
    };
    manifest.save(&out_dir.join(MANIFEST_NAME))?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.norm_spec.validate()?;
        m.pan_norm_spec.validate()?;
        for id in m.splits.train.iter().chain(&m.splits.val).chain(&m.splits.test) {
            if m.entry(id).is_none() {
                return Err(Error::Input(format!("split references unknown scene {id}")));
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn entry(&self, id: &str) -> Option<&SceneEntry> {
        self.scenes.iter().find(|e| e.id == id)
    }

    pub fn load_scene(&self, id: &str) -> Result<SceneRasters> {
        let e = self
            .entry(id)
            .ok_or_else(|| Error::Input(format!("unknown scene {id}")))?;
        let scene = SceneRasters {
            id: id.to_string(),
            gt: load_raster(self.root.join(&e.gt))?,
            stereo: load_raster(self.root.join(&e.stereo))?,
            pan: load_raster(self.root.join(&e.pan))?,
            mask: load_raster(self.root.join(&e.mask))?,
        };
        scene.gt.ensure_same_grid(&scene.stereo, id)?;
        scene.gt.ensure_same_grid(&scene.pan, id)?;
        scene.gt.ensure_same_grid(&scene.mask, id)?;
        Ok(scene)
    }

    pub fn load_split(&self, ids: &[String]) -> Result<Vec<SceneRasters>> {
        ids.iter().map(|id| self.load_scene(id)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> SynthConfig {
        SynthConfig {
            seed,
            scene: SceneSpec {
                rows: 48,
                cols: 48,
                n_buildings: 3,
                footprint_px: (6, 14),
                ..SceneSpec::default()
            },
            ..SynthConfig::default()
        }
    }

    #[test]
    fn splits_cover_everything_once() {
        let ids: Vec<String> = (0..64).map(|i| format!("s{i:02}")).collect();
        let s = split_ids(&ids, 7);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (51, 6, 7));
        let mut all: Vec<_> = s.train.iter().chain(&s.val).chain(&s.test).cloned().collect();
        all.sort();
        assert_eq!(all, ids);
        assert_eq!(split_ids(&ids, 7), s);
        assert_ne!(split_ids(&ids, 8), s);
        let empty = split_ids(&[], 1);
        assert!(empty.train.is_empty() && empty.val.is_empty() && empty.test.is_empty());
    }

    #[test]
    fn writes_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&small_config(3), 3, dir.path()).unwrap();
        assert_eq!(m.scenes.len(), 3);
        let files = fs::read_dir(dir.path().join("scenes")).unwrap().count();
        assert_eq!(files, 3 * 4 * 2); // payload + sidecar
        let back = DatasetManifest::load(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(back.scenes, m.scenes);
        let s = back.load_scene("scene_0001").unwrap();
        assert_eq!(s.gt.shape(), (48, 48));
        assert!(back.norm_spec.h_min <= 0.0);
    }

    #[test]
    fn empty_dataset_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let m = generate_dataset(&small_config(3), 0, dir.path()).unwrap();
        assert!(m.scenes.is_empty());
        DatasetManifest::load(&dir.path().join(MANIFEST_NAME)).unwrap();
    }
}
