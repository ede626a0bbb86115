use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    epoch_order, load_checkpoint, save_checkpoint, tiled_forward, Adam, Batch, Checkpoint, CheckpointManifest,
    PreparedScene, TrainConfig,
};
use crate::error::{Error, Result};
use crate::nets::{build_discriminator, build_generator, PatchDiscriminator, WNetGenerator};
use crate::nn::{Mode, Module, Tensor};
use crate::objective::{g_total_grad, l1_loss, LossRecord, LossWeights};
use crate::raster::{write_raster, RasterGrid, RasterKind};
use crate::synth::{mix_seed, DatasetManifest};

pub const TRAIN_LOG_NAME: &str = "train_log.ndjson";
pub const VAL_LOG_NAME: &str = "val_log.ndjson";
const DROPOUT_STREAM: u64 = 0xD50;

/// Masked L1 of the generator on the validation split, in normalized units.
/// Epoch 0 is the untrained model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValRecord {
    pub epoch: u32,
    pub val_l1: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub val_log_path: PathBuf,
    /// Records produced by this call only.
    pub records: Vec<LossRecord>,
    pub validation: Vec<ValRecord>,
}

/// Models, optimizers and counters. Every random draw during training is
/// derived from `config.seed` and these counters, so a state restored from a
/// checkpoint continues exactly as the original run would have.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    /// Completed epochs.
    pub epoch: u32,
    /// Completed optimization steps.
    pub global_step: u64,
    pub generator: WNetGenerator,
    pub discriminator: PatchDiscriminator,
    pub g_opt: Adam,
    pub d_opt: Adam,
}

fn to_tensor(like: &Tensor, grad: Vec<f64>) -> Result<Tensor> {
    Tensor::new(like.shape(), grad.into_iter().map(|g| g as f32).collect())
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = build_generator(&config.generator, config.seed)?;
        let discriminator = build_discriminator(&config.discriminator, config.seed)?;
        Ok(TrainState {
            config: config.clone(),
            epoch: 0,
            global_step: 0,
            g_opt: Adam::new(config.adam(), &generator),
            d_opt: Adam::new(config.adam(), &discriminator),
            generator,
            discriminator,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        ck.manifest.ensure_compatible(config)?;
        let (mut g_opt, mut d_opt) = (ck.g_opt, ck.d_opt);
        g_opt.config = config.adam();
        d_opt.config = config.adam();
        Ok(TrainState {
            config: config.clone(),
            epoch: ck.manifest.epoch,
            global_step: ck.manifest.global_step,
            generator: ck.generator,
            discriminator: ck.discriminator,
            g_opt,
            d_opt,
        })
    }

    fn weights(&self) -> LossWeights {
        self.config.loss_weights()
    }

    /// Training-mode generator forward with the dropout masks of the
    /// current step.
    pub fn generate(&mut self, batch: &Batch) -> Result<Tensor> {
        self.generator
            .set_dropout_seed(mix_seed(self.config.seed ^ DROPOUT_STREAM, self.global_step));
        self.generator.forward(&batch.dsm, &batch.pan, Mode::Train)
    }

    /// One discriminator update on real pairs and detached fakes.
    pub fn d_step(&mut self, batch: &Batch, fake: &Tensor) -> Result<f64> {
        let w = self.weights();
        self.discriminator.zero_grad();
        let on_fake = self.discriminator.forward(&batch.dsm, fake, Mode::Train)?;
        let g = w.d_fake_grad(on_fake.data())?;
        self.discriminator.backward(&to_tensor(&on_fake, g)?, false)?;
        let on_real = self.discriminator.forward(&batch.dsm, &batch.gt, Mode::Train)?;
        let g = w.d_real_grad(on_real.data())?;
        self.discriminator.backward(&to_tensor(&on_real, g)?, false)?;
        let loss = w.d_loss(on_real.data(), on_fake.data())?;
        self.d_opt.step(&mut self.discriminator)?;
        Ok(loss)
    }

    /// One generator update through the discriminator's verdict on `fake`,
    /// which must come from [`TrainState::generate`] on the same batch.
    /// Returns (adversarial, L1, total).
    pub fn g_step(&mut self, batch: &Batch, fake: &Tensor) -> Result<(f64, f64, f64)> {
        let w = self.weights();
        self.generator.zero_grad();
        self.discriminator.zero_grad();
        let on_fake = self.discriminator.forward(&batch.dsm, fake, Mode::Train)?;
        let valid = Some(batch.valid.data());
        let (g_adv, g_fake) = g_total_grad(on_fake.data(), fake.data(), batch.gt.data(), &w, valid)?;
        let mut grad = self
            .discriminator
            .backward(&to_tensor(&on_fake, g_adv)?, true)?
            .ok_or_else(|| Error::Internal("discriminator returned no candidate gradient".into()))?;
        grad.add_assign(&to_tensor(fake, g_fake)?);
        self.generator.backward(&grad)?;
        self.g_opt.step(&mut self.generator)?;
        // gradients reaching D during the generator step are discarded
        self.discriminator.zero_grad();
        let adv = w.g_adv_loss(on_fake.data())?;
        let l1 = l1_loss(fake.data(), batch.gt.data(), valid)?;
        Ok((adv, l1, adv + w.lambda_l1 * l1))
    }

    /// D step then G step on one batch.
    pub fn train_step(&mut self, batch: &Batch) -> Result<LossRecord> {
        let fake = self.generate(batch)?;
        let d_loss = self.d_step(batch, &fake)?;
        let (g_adv, g_l1, g_total) = self.g_step(batch, &fake)?;
        self.global_step += 1;
        Ok(LossRecord {
            step: self.global_step,
            epoch: self.epoch + 1,
            d_loss,
            g_adv,
            g_l1,
            g_total,
        })
    }

    /// Pooled masked L1 over whole scenes, or `None` without scenes.
    pub fn validation_l1(&mut self, scenes: &[PreparedScene]) -> Result<Option<f64>> {
        let (mut sum, mut n) = (0.0f64, 0usize);
        for s in scenes {
            let grid = |d: &[f32], kind| RasterGrid::new(s.rows, s.cols, d.to_vec(), 1.0, (0.0, 0.0), None, kind);
            let out = tiled_forward(
                &mut self.generator,
                &grid(&s.dsm, RasterKind::Dsm)?,
                &grid(&s.pan, RasterKind::Pan)?,
            )?;
            for ((&o, &g), &v) in out.data().iter().zip(&s.gt).zip(&s.valid) {
                if v != 0.0 {
                    sum += (o as f64 - g as f64).abs();
                    n += 1;
                }
            }
        }
        Ok((n > 0).then(|| sum / n as f64))
    }

    fn manifest(&self, data: &DatasetManifest) -> CheckpointManifest {
        CheckpointManifest::new(
            &self.config,
            self.epoch,
            self.global_step,
            data.norm_spec.clone(),
            data.pan_norm_spec.clone(),
        )
    }

    pub fn save(&self, dir: &Path, data: &DatasetManifest) -> Result<()> {
        save_checkpoint(
            dir,
            &self.manifest(data),
            &self.generator,
            &self.discriminator,
            &self.g_opt,
            &self.d_opt,
        )
    }
}

fn prepare(data: &DatasetManifest, ids: &[String]) -> Result<Vec<PreparedScene>> {
    data.load_split(ids)?
        .iter()
        .map(|s| PreparedScene::new(s, &data.norm_spec, &data.pan_norm_spec))
        .collect()
}

fn append_line<T: Serialize>(w: &mut impl Write, path: &Path, value: &T) -> Result<()> {
    let line = serde_json::to_string(value).map_err(|e| Error::json(path, e))?;
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

fn open_log(path: &Path, fresh: bool) -> Result<BufWriter<File>> {
    let file = if fresh {
        File::create(path)
    } else {
        OpenOptions::new().create(true).append(true).open(path)
    };
    Ok(BufWriter::new(file.map_err(|e| Error::io(path, e))?))
}

fn checkpoint_dir(out_dir: &Path, epoch: u32) -> PathBuf {
    out_dir.join("checkpoints").join(format!("epoch_{epoch:04}"))
}

/// Writes the offending batch in network units next to its loss record.
fn write_snapshot(out_dir: &Path, batch: &Batch, record: &LossRecord) -> Result<PathBuf> {
    let dir = out_dir.join(format!("nonfinite_step_{:08}", record.step));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let s = batch.dsm.shape();
    for i in 0..batch.len() {
        for (name, t, kind) in [
            ("dsm", &batch.dsm, RasterKind::Dsm),
            ("pan", &batch.pan, RasterKind::Pan),
            ("gt", &batch.gt, RasterKind::Dsm),
        ] {
            let g = RasterGrid::new(s.rows, s.cols, t.sample(i).to_vec(), 1.0, (0.0, 0.0), None, kind);
            // non-finite inputs are themselves a likely culprit; keep what can be stored
            if let Ok(g) = g {
                write_raster(&g, dir.join(format!("{name}_{i}.r32")))?;
            }
        }
    }
    let path = dir.join("snapshot.json");
    let body = serde_json::json!({ "record": record, "samples": batch.samples });
    let text = serde_json::to_string_pretty(&body).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(dir)
}

fn run(
    mut state: TrainState,
    data: &DatasetManifest,
    out_dir: &Path,
    fresh: bool,
    mut last_checkpoint: Option<PathBuf>,
) -> Result<TrainOutcome> {
    let config = state.config.clone();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let train = prepare(data, &data.splits.train)?;
    if train.is_empty() {
        return Err(Error::Input("dataset has no training scenes".into()));
    }
    let val = prepare(data, &data.splits.val)?;
    let log_path = out_dir.join(TRAIN_LOG_NAME);
    let val_log_path = out_dir.join(VAL_LOG_NAME);
    let mut log = open_log(&log_path, fresh)?;
    let mut val_log = open_log(&val_log_path, fresh)?;
    let mut records = Vec::new();
    let mut validation = Vec::new();

    if fresh {
        if let Some(l1) = state.validation_l1(&val)? {
            let r = ValRecord { epoch: 0, val_l1: l1 };
            append_line(&mut val_log, &val_log_path, &r)?;
            validation.push(r);
        }
    }
    while state.epoch < config.epochs {
        let order = epoch_order(train.len(), config.patches_per_scene, config.seed, state.epoch);
        for picks in order.chunks(config.batch_size) {
            let batch = Batch::assemble(&train, picks, config.patch_size, config.hflip, config.seed, state.epoch)?;
            let record = state.train_step(&batch)?;
            append_line(&mut log, &log_path, &record)?;
            let losses = [record.d_loss, record.g_adv, record.g_l1, record.g_total];
            if losses.iter().any(|v| !v.is_finite()) {
                log.flush().map_err(|e| Error::io(&log_path, e))?;
                let snapshot = write_snapshot(out_dir, &batch, &record).ok();
                return Err(Error::NonFiniteLoss {
                    step: record.step,
                    epoch: record.epoch,
                    snapshot,
                });
            }
            records.push(record);
        }
        state.epoch += 1;
        log.flush().map_err(|e| Error::io(&log_path, e))?;
        if let Some(l1) = state.validation_l1(&val)? {
            let r = ValRecord {
                epoch: state.epoch,
                val_l1: l1,
            };
            append_line(&mut val_log, &val_log_path, &r)?;
            validation.push(r);
        }
        val_log.flush().map_err(|e| Error::io(&val_log_path, e))?;
        if state.epoch % config.checkpoint_every == 0 || state.epoch == config.epochs {
            let dir = checkpoint_dir(out_dir, state.epoch);
            state.save(&dir, data)?;
            last_checkpoint = Some(dir);
        }
    }
    let final_checkpoint = match last_checkpoint {
        Some(p) => p,
        None => {
            let dir = checkpoint_dir(out_dir, state.epoch);
            state.save(&dir, data)?;
            dir
        }
    };
    Ok(TrainOutcome {
        final_checkpoint,
        log_path,
        val_log_path,
        records,
        validation,
    })
}

/// Trains from freshly initialized weights, writing logs and checkpoints
/// under `out_dir`.
pub fn train(config: &TrainConfig, data: &DatasetManifest, out_dir: &Path) -> Result<TrainOutcome> {
    run(TrainState::new(config)?, data, out_dir, true, None)
}

/// Continues from `checkpoint` until `config.epochs` epochs are complete,
/// appending to the logs in `out_dir`.
pub fn resume(checkpoint: &Path, config: &TrainConfig, data: &DatasetManifest, out_dir: &Path) -> Result<TrainOutcome> {
    let ck = load_checkpoint(checkpoint)?;
    if ck.manifest.norm_spec != data.norm_spec || ck.manifest.pan_norm_spec != data.pan_norm_spec {
        return Err(Error::Compatibility(
            "checkpoint normalization differs from the dataset's".into(),
        ));
    }
    let dir = if checkpoint.is_dir() {
        checkpoint.to_path_buf()
    } else {
        checkpoint.parent().map(Path::to_path_buf).unwrap_or_default()
    };
    run(TrainState::from_checkpoint(ck, config)?, data, out_dir, false, Some(dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{DiscriminatorSpec, GeneratorSpec};
    use crate::nn::Param;
    use crate::synth::{generate_dataset, SceneSpec, SynthConfig};

    fn tiny_config(epochs: u32) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 5,
            checkpoint_every: 1,
            patch_size: 32,
            generator: GeneratorSpec {
                in_size: 32,
                base_width: 2,
                n_levels: 5,
                fusion_width: 2,
                ..GeneratorSpec::default()
            },
            discriminator: DiscriminatorSpec::with_base(2),
            ..TrainConfig::default()
        }
    }

    fn dataset(dir: &Path, count: usize) -> DatasetManifest {
        let config = SynthConfig {
            seed: 2,
            scene: SceneSpec {
                rows: 32,
                cols: 32,
                n_buildings: 2,
                footprint_px: (6, 12),
                ..SceneSpec::default()
            },
            ..SynthConfig::default()
        };
        generate_dataset(&config, count, dir).unwrap()
    }

    fn params(m: &impl Module) -> Vec<Param> {
        let mut out = Vec::new();
        m.visit(&mut |p| out.push(p.clone()));
        out
    }

    #[test]
    fn one_epoch_counts_steps() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = dataset(&dir.path().join("data"), 12);
        // exactly ten training patches
        data.splits.train.truncate(10);
        let out = train(&tiny_config(1), &data, &dir.path().join("run")).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1, 2]);
        let log = fs::read_to_string(&out.log_path).unwrap();
        assert_eq!(log.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
        for key in ["step", "epoch", "d_loss", "g_adv", "g_l1", "g_total"] {
            assert!(first.get(key).is_some(), "{key}");
        }
        assert!(out.final_checkpoint.join("checkpoint.json").exists());
    }

    #[test]
    fn discriminator_step_leaves_generator_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let data = dataset(dir.path(), 6);
        let config = tiny_config(1);
        let scenes = prepare(&data, &data.splits.train).unwrap();
        let picks: Vec<(usize, usize)> = (0..scenes.len()).map(|i| (i, i)).collect();
        let batch = Batch::assemble(&scenes, &picks, 32, true, 0, 0).unwrap();
        let mut state = TrainState::new(&config).unwrap();
        let fake = state.generate(&batch).unwrap();
        let g_before = params(&state.generator);
        let d_before = params(&state.discriminator);
        state.d_step(&batch, &fake).unwrap();
        assert_eq!(params(&state.generator), g_before);
        assert_ne!(params(&state.discriminator), d_before);
        let d_after = params(&state.discriminator);
        state.g_step(&batch, &fake).unwrap();
        assert_ne!(params(&state.generator), g_before);
        // D's running statistics move during the G step, its weights do not
        let weights = |ps: Vec<Param>| ps.into_iter().filter(|p| p.trainable).map(|p| p.value).collect::<Vec<_>>();
        assert_eq!(weights(params(&state.discriminator)), weights(d_after));
    }

    #[test]
    fn resume_of_finished_run_is_a_no_op() {
        let dir = tempfile::tempdir().unwrap();
        let data = dataset(&dir.path().join("data"), 6);
        let config = tiny_config(1);
        let out = train(&config, &data, &dir.path().join("run")).unwrap();
        let again = resume(&out.final_checkpoint, &config, &data, &dir.path().join("run")).unwrap();
        assert!(again.records.is_empty());
        assert_eq!(again.final_checkpoint, out.final_checkpoint);

        let mut other = config.clone();
        other.generator.fusion_width = 3;
        assert!(matches!(
            resume(&out.final_checkpoint, &other, &data, &dir.path().join("run2")),
            Err(Error::Compatibility(_))
        ));
    }

    #[test]
    fn empty_training_split_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = dataset(dir.path(), 2);
        data.splits.train.clear();
        assert!(matches!(train(&tiny_config(1), &data, &dir.path().join("run")), Err(Error::Input(_))));
    }
}
