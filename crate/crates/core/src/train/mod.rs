//! Minibatch adversarial training, checkpoints and full-raster inference.

mod adam;
mod checkpoint;
mod data;
mod infer;
mod run;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{DiscriminatorSpec, GeneratorSpec};
use crate::objective::LossWeights;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{load_checkpoint, load_generator, save_checkpoint, Checkpoint, CheckpointManifest, CHECKPOINT_NAME};
pub use data::{epoch_order, Batch, PreparedScene, SampleRef};
pub use infer::{infer, infer_with, tiled_forward, Inference};
pub use run::{resume, train, TrainOutcome, TrainState, ValRecord, TRAIN_LOG_NAME, VAL_LOG_NAME};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: u32,
    pub batch_size: usize,
    pub lr_alpha: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub lambda_l1: f64,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; the last epoch is always saved.
    pub checkpoint_every: u32,
    /// Must equal `generator.in_size`.
    pub patch_size: usize,
    /// Random crops drawn from each training scene per epoch.
    pub patches_per_scene: usize,
    /// Joint random horizontal flips of DSM, PAN and ground truth.
    pub hflip: bool,
    pub generator: GeneratorSpec,
    pub discriminator: DiscriminatorSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 5,
            lr_alpha: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lambda_l1: 100.0,
            seed: 0,
            checkpoint_every: 10,
            patch_size: 256,
            patches_per_scene: 1,
            hflip: true,
            generator: GeneratorSpec::default(),
            discriminator: DiscriminatorSpec::default(),
        }
    }
}

impl TrainConfig {
    /// Reduced 64×64 profile for CPU smoke runs.
    pub fn smoke() -> Self {
        TrainConfig {
            epochs: 20,
            checkpoint_every: 5,
            patch_size: 64,
            generator: GeneratorSpec {
                in_size: 64,
                base_width: 16,
                n_levels: 6,
                fusion_width: 16,
                ..GeneratorSpec::default()
            },
            discriminator: DiscriminatorSpec::with_base(16),
            ..TrainConfig::default()
        }
    }

    /// Reads JSON, or TOML when the extension is `.toml`. Missing keys take
    /// their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: TrainConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
            toml::from_str(&text).map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.epochs == 0 || self.batch_size == 0 || self.checkpoint_every == 0 || self.patches_per_scene == 0 {
            return bad("epochs, batch_size, checkpoint_every and patches_per_scene must be positive".into());
        }
        if !(self.lr_alpha.is_finite() && self.lr_alpha > 0.0) || !(self.adam_eps > 0.0) {
            return bad(format!("learning rate {} and eps {} must be positive", self.lr_alpha, self.adam_eps));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return bad(format!("{name} = {b} outside (0, 1)"));
            }
        }
        if self.patch_size != self.generator.in_size {
            return bad(format!(
                "patch_size {} differs from generator in_size {}",
                self.patch_size, self.generator.in_size
            ));
        }
        self.generator.validate()?;
        self.discriminator.validate()?;
        if self.discriminator.output_size(self.patch_size).is_none() {
            return bad(format!("patch_size {} is too small for the discriminator", self.patch_size));
        }
        self.loss_weights().validate()
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_l1: self.lambda_l1,
            ..LossWeights::default()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr_alpha,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_protocol() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size), (200, 5));
        assert_eq!((c.lr_alpha, c.adam_beta1, c.adam_beta2), (0.0002, 0.5, 0.999));
        assert_eq!(c.patch_size, 256);
        c.validate().unwrap();
        TrainConfig::smoke().validate().unwrap();
    }

    #[test]
    fn loads_json_and_toml_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let j = dir.path().join("c.json");
        std::fs::write(&j, r#"{"epochs": 3, "seed": 9}"#).unwrap();
        let c = TrainConfig::load(&j).unwrap();
        assert_eq!((c.epochs, c.seed, c.batch_size), (3, 9, 5));
        let t = dir.path().join("c.toml");
        std::fs::write(&t, "epochs = 4\npatch_size = 64\n[generator]\nin_size = 64\nn_levels = 6\n").unwrap();
        let c = TrainConfig::load(&t).unwrap();
        assert_eq!((c.epochs, c.generator.n_levels), (4, 6));
        std::fs::write(&j, r#"{"epochz": 3}"#).unwrap();
        assert!(TrainConfig::load(&j).is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        for c in [
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { adam_beta1: 1.0, ..TrainConfig::default() },
            TrainConfig { patch_size: 128, ..TrainConfig::default() },
            TrainConfig { lambda_l1: -1.0, ..TrainConfig::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::Parameter(_))), "{c:?}");
        }
    }
}
