//! Normalized in-memory scenes and seeded patch sampling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Tensor, TensorShape};
use crate::raster::{normalize, NormSpec};
use crate::synth::{mix_seed, SceneRasters};

const ORDER_STREAM: u64 = 0x0DE5;
const CROP_STREAM: u64 = 0xC409;

/// One scene in network units: DSM, PAN and ground truth in [-1, 1] and a
/// 0/1 validity map of the ground truth.
#[derive(Clone, Debug)]
pub struct PreparedScene {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub dsm: Vec<f32>,
    pub pan: Vec<f32>,
    pub gt: Vec<f32>,
    pub valid: Vec<f32>,
}

impl PreparedScene {
    pub fn new(scene: &SceneRasters, norm: &NormSpec, pan_norm: &NormSpec) -> Result<Self> {
        let (rows, cols) = scene.gt.shape();
        Ok(PreparedScene {
            id: scene.id.clone(),
            rows,
            cols,
            dsm: normalize(&scene.stereo, norm)?.into_data(),
            pan: normalize(&scene.pan, pan_norm)?.into_data(),
            gt: normalize(&scene.gt, norm)?.into_data(),
            valid: scene.gt.validity_mask().into_data(),
        })
    }

    fn crop(&self, plane: &[f32], r0: usize, c0: usize, size: usize, flip: bool) -> Vec<f32> {
        let mut out = Vec::with_capacity(size * size);
        for r in r0..r0 + size {
            let row = &plane[r * self.cols + c0..r * self.cols + c0 + size];
            if flip {
                out.extend(row.iter().rev());
            } else {
                out.extend_from_slice(row);
            }
        }
        out
    }
}

/// Where a training patch came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRef {
    pub scene: String,
    pub row: usize,
    pub col: usize,
    pub flipped: bool,
}

/// A minibatch of aligned `(B, 1, P, P)` tensors.
#[derive(Clone, Debug)]
pub struct Batch {
    pub dsm: Tensor,
    pub pan: Tensor,
    pub gt: Tensor,
    pub valid: Tensor,
    pub samples: Vec<SampleRef>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Draws the crop (and flip) for sample slot `slot` of `epoch`. The draw
    /// depends only on the seed, the epoch and the slot.
    pub fn assemble(
        scenes: &[PreparedScene],
        picks: &[(usize, usize)],
        patch: usize,
        hflip: bool,
        seed: u64,
        epoch: u32,
    ) -> Result<Batch> {
        let shape = TensorShape::new(picks.len(), 1, patch, patch);
        let n = shape.numel();
        let (mut dsm, mut pan, mut gt, mut valid) =
            (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
        let mut samples = Vec::with_capacity(picks.len());
        for &(slot, idx) in picks {
            let s = &scenes[idx];
            if s.rows < patch || s.cols < patch {
                return Err(Error::Input(format!(
                    "scene {} is {}x{}, smaller than the {patch}px patch",
                    s.id, s.rows, s.cols
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed ^ CROP_STREAM, epoch as u64), slot as u64));
            let r0 = rng.gen_range(0..=s.rows - patch);
            let c0 = rng.gen_range(0..=s.cols - patch);
            let flip = hflip && rng.gen_bool(0.5);
            dsm.extend(s.crop(&s.dsm, r0, c0, patch, flip));
            pan.extend(s.crop(&s.pan, r0, c0, patch, flip));
            gt.extend(s.crop(&s.gt, r0, c0, patch, flip));
            valid.extend(s.crop(&s.valid, r0, c0, patch, flip));
            samples.push(SampleRef {
                scene: s.id.clone(),
                row: r0,
                col: c0,
                flipped: flip,
            });
        }
        Ok(Batch {
            dsm: Tensor::new(shape, dsm)?,
            pan: Tensor::new(shape, pan)?,
            gt: Tensor::new(shape, gt)?,
            valid: Tensor::new(shape, valid)?,
            samples,
        })
    }
}

/// Seeded permutation of sample slots for one epoch: slot `k` draws from
/// scene `k % n_scenes`.
pub fn epoch_order(n_scenes: usize, patches_per_scene: usize, seed: u64, epoch: u32) -> Vec<(usize, usize)> {
    let mut slots: Vec<(usize, usize)> = (0..n_scenes * patches_per_scene).map(|k| (k, k % n_scenes.max(1))).collect();
    slots.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed ^ ORDER_STREAM, epoch as u64)));
    slots
}
