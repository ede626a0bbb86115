//! Checkpoint directories: `checkpoint.json` plus little-endian tensor files.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Adam, TrainConfig};
use crate::error::{Error, Result};
use crate::nets::{build_discriminator, build_generator, DiscriminatorSpec, GeneratorSpec, PatchDiscriminator, WNetGenerator};
use crate::nn::Module;
use crate::raster::NormSpec;

pub const CHECKPOINT_NAME: &str = "checkpoint.json";
const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"DSMT";
const GENERATOR_FILE: &str = "generator.bin";
const DISCRIMINATOR_FILE: &str = "discriminator.bin";
const OPTIMIZER_FILE: &str = "optimizer.bin";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub generator_spec: GeneratorSpec,
    pub discriminator_spec: DiscriminatorSpec,
    /// Completed epochs.
    pub epoch: u32,
    pub global_step: u64,
    pub norm_spec: NormSpec,
    pub pan_norm_spec: NormSpec,
    pub generator_weights: PathBuf,
    pub discriminator_weights: PathBuf,
    pub optimizer_state: PathBuf,
    pub config: TrainConfig,
}

impl CheckpointManifest {
    pub fn new(config: &TrainConfig, epoch: u32, global_step: u64, norm_spec: NormSpec, pan_norm_spec: NormSpec) -> Self {
        CheckpointManifest {
            format_version: FORMAT_VERSION,
            generator_spec: config.generator.clone(),
            discriminator_spec: config.discriminator.clone(),
            epoch,
            global_step,
            norm_spec,
            pan_norm_spec,
            generator_weights: GENERATOR_FILE.into(),
            discriminator_weights: DISCRIMINATOR_FILE.into(),
            optimizer_state: OPTIMIZER_FILE.into(),
            config: config.clone(),
        }
    }

    /// Accepts either the checkpoint directory or its `checkpoint.json`.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let file = if path.is_dir() { path.join(CHECKPOINT_NAME) } else { path.to_path_buf() };
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let m: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::json(&file, e))?;
        if m.format_version != FORMAT_VERSION {
            return Err(Error::Compatibility(format!(
                "checkpoint format {} is not supported (expected {FORMAT_VERSION})",
                m.format_version
            )));
        }
        m.generator_spec.validate()?;
        m.discriminator_spec.validate()?;
        Ok((m, dir))
    }

    /// Errors unless the stored architecture matches `config`.
    pub fn ensure_compatible(&self, config: &TrainConfig) -> Result<()> {
        if self.generator_spec != config.generator {
            return Err(Error::Compatibility(format!(
                "generator spec {:?} differs from checkpoint {:?}",
                config.generator, self.generator_spec
            )));
        }
        if self.discriminator_spec != config.discriminator {
            return Err(Error::Compatibility(format!(
                "discriminator spec {:?} differs from checkpoint {:?}",
                config.discriminator, self.discriminator_spec
            )));
        }
        Ok(())
    }
}

/// Everything needed to continue training.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub generator: WNetGenerator,
    pub discriminator: PatchDiscriminator,
    pub g_opt: Adam,
    pub d_opt: Adam,
}

type NamedTensor = (String, Vec<usize>, Vec<f32>);

fn write_tensors(path: &Path, tensors: &[(String, Vec<usize>, &[f32])]) -> Result<()> {
    let tmp = path.with_extension("bin.tmp");
    let io = |e| Error::io(path, e);
    {
        let mut w = BufWriter::new(fs::File::create(&tmp).map_err(io)?);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io)?;
        for (name, shape, data) in tensors {
            w.write_all(&(name.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(name.as_bytes()).map_err(io)?;
            w.write_all(&(shape.len() as u32).to_le_bytes()).map_err(io)?;
            for &d in shape {
                w.write_all(&(d as u64).to_le_bytes()).map_err(io)?;
            }
            for v in *data {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

fn read_tensors(path: &Path) -> Result<Vec<NamedTensor>> {
    let io = |e| Error::io(path, e);
    let corrupt = |m: &str| Error::Corruption(format!("{}: {m}", path.display()));
    let mut r = BufReader::new(fs::File::open(path).map_err(io)?);
    let mut u32b = [0u8; 4];
    let mut u64b = [0u8; 8];
    let mut read_u32 = |r: &mut BufReader<fs::File>| -> Result<u32> {
        r.read_exact(&mut u32b).map_err(|_| corrupt("truncated"))?;
        Ok(u32::from_le_bytes(u32b))
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated"))?;
    if &magic != MAGIC {
        return Err(corrupt("not a tensor file"));
    }
    if read_u32(&mut r)? != FORMAT_VERSION {
        return Err(Error::Compatibility(format!("{}: unsupported tensor file version", path.display())));
    }
    let count = read_u32(&mut r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| corrupt("truncated"))?;
        let name = String::from_utf8(name).map_err(|_| corrupt("tensor name is not UTF-8"))?;
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            r.read_exact(&mut u64b).map_err(|_| corrupt("truncated"))?;
            shape.push(u64::from_le_bytes(u64b) as usize);
        }
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(|_| corrupt("truncated"))?;
        let data = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
        out.push((name, shape, data));
    }
    if r.read(&mut [0u8; 1]).map_err(io)? != 0 {
        return Err(corrupt("trailing bytes"));
    }
    Ok(out)
}

fn model_tensors(model: &impl Module) -> Vec<(String, Vec<usize>, Vec<f32>)> {
    let mut out = Vec::new();
    model.visit(&mut |p| out.push((p.name.clone(), p.shape.clone(), p.value.clone())));
    out
}

fn assign(model: &mut impl Module, tensors: Vec<NamedTensor>, what: &str) -> Result<()> {
    let expected = model.param_names().len();
    if tensors.len() != expected {
        return Err(Error::Compatibility(format!(
            "{what}: checkpoint has {} tensors, model has {expected}",
            tensors.len()
        )));
    }
    let mut iter = tensors.into_iter();
    let mut err = None;
    model.visit_mut(&mut |p| {
        let (name, shape, data) = iter.next().expect("counts checked");
        if err.is_none() && (name != p.name || shape != p.shape) {
            err = Some(Error::Compatibility(format!(
                "{what}: checkpoint tensor {name} {shape:?} does not match {} {:?}",
                p.name, p.shape
            )));
        } else if err.is_none() {
            p.value = data;
        }
    });
    err.map_or(Ok(()), Err)
}

fn opt_tensors<'a>(prefix: &str, opt: &'a Adam) -> Vec<(String, Vec<usize>, &'a [f32])> {
    let mut out = vec![];
    for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
        out.push((format!("{prefix}.{i}.m"), vec![m.len()], m.as_slice()));
        out.push((format!("{prefix}.{i}.v"), vec![v.len()], v.as_slice()));
    }
    out
}

fn split_count(t: u64) -> [f32; 2] {
    [f32::from_bits(t as u32), f32::from_bits((t >> 32) as u32)]
}

fn join_count(words: &[f32]) -> Option<u64> {
    match words {
        [lo, hi] => Some(lo.to_bits() as u64 | (hi.to_bits() as u64) << 32),
        _ => None,
    }
}

/// Writes a checkpoint directory; `checkpoint.json` is written last so a
/// directory with a manifest is always complete.
pub fn save_checkpoint(
    dir: &Path,
    manifest: &CheckpointManifest,
    generator: &WNetGenerator,
    discriminator: &PatchDiscriminator,
    g_opt: &Adam,
    d_opt: &Adam,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let g = model_tensors(generator);
    let d = model_tensors(discriminator);
    write_tensors(
        &dir.join(&manifest.generator_weights),
        &g.iter().map(|(n, s, d)| (n.clone(), s.clone(), d.as_slice())).collect::<Vec<_>>(),
    )?;
    write_tensors(
        &dir.join(&manifest.discriminator_weights),
        &d.iter().map(|(n, s, d)| (n.clone(), s.clone(), d.as_slice())).collect::<Vec<_>>(),
    )?;
    let mut opt = opt_tensors("g", g_opt);
    opt.extend(opt_tensors("d", d_opt));
    // step counters ride along bit-cast into two f32 words
    let (tg, td) = (split_count(g_opt.t), split_count(d_opt.t));
    opt.push(("g.t".into(), vec![2], &tg));
    opt.push(("d.t".into(), vec![2], &td));
    write_tensors(&dir.join(&manifest.optimizer_state), &opt)?;

    let path = dir.join(CHECKPOINT_NAME);
    let tmp = dir.join(format!("{CHECKPOINT_NAME}.tmp"));
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
}

/// Generator and manifest only, for inference.
pub fn load_generator(path: &Path) -> Result<(CheckpointManifest, WNetGenerator)> {
    let (manifest, dir) = CheckpointManifest::load(path)?;
    let mut g = build_generator(&manifest.generator_spec, 0)?;
    assign(&mut g, read_tensors(&dir.join(&manifest.generator_weights))?, "generator")?;
    Ok((manifest, g))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let (manifest, dir) = CheckpointManifest::load(path)?;
    let mut generator = build_generator(&manifest.generator_spec, 0)?;
    assign(&mut generator, read_tensors(&dir.join(&manifest.generator_weights))?, "generator")?;
    let mut discriminator = build_discriminator(&manifest.discriminator_spec, 0)?;
    assign(
        &mut discriminator,
        read_tensors(&dir.join(&manifest.discriminator_weights))?,
        "discriminator",
    )?;
    let adam = manifest.config.adam();
    let mut g_opt = Adam::new(adam, &generator);
    let mut d_opt = Adam::new(adam, &discriminator);
    let mut filled = 0usize;
    let expected = 2 * (g_opt.m.len() + d_opt.m.len()) + 2;
    for (name, _, data) in read_tensors(&dir.join(&manifest.optimizer_state))? {
        let mut parts = name.split('.');
        let opt = match parts.next() {
            Some("g") => &mut g_opt,
            Some("d") => &mut d_opt,
            _ => return Err(Error::Corruption(format!("unexpected optimizer tensor {name}"))),
        };
        let slot = match (parts.next(), parts.next()) {
            (Some("t"), None) => {
                opt.t = join_count(&data).ok_or_else(|| Error::Corruption(format!("bad optimizer tensor {name}")))?;
                filled += 1;
                continue;
            }
            (Some(i), Some(kind)) => {
                let i: usize = i.parse().map_err(|_| Error::Corruption(format!("bad optimizer tensor {name}")))?;
                let bank = if kind == "m" { &mut opt.m } else { &mut opt.v };
                bank.get_mut(i)
            }
            _ => None,
        };
        match slot {
            Some(s) if s.len() == data.len() => {
                *s = data;
                filled += 1;
            }
            _ => return Err(Error::Compatibility(format!("optimizer tensor {name} does not fit the model"))),
        }
    }
    if filled != expected {
        return Err(Error::Compatibility(format!(
            "optimizer state has {filled} tensors, expected {expected}"
        )));
    }
    Ok(Checkpoint {
        manifest,
        generator,
        discriminator,
        g_opt,
        d_opt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::Architecture;
    use crate::nn::{Mode, Tensor, TensorShape};
    use crate::raster::NormKind;

    fn tiny() -> TrainConfig {
        let mut c = TrainConfig::smoke();
        c.generator.base_width = 2;
        c.generator.fusion_width = 2;
        c.discriminator = DiscriminatorSpec::with_base(2);
        c
    }

    fn norms() -> (NormSpec, NormSpec) {
        (
            NormSpec::new(0.0, 30.0, NormKind::Height).unwrap(),
            NormSpec::new(0.0, 1.0, NormKind::Intensity).unwrap(),
        )
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = tiny();
        let mut g = build_generator(&c.generator, 4).unwrap();
        let d = build_discriminator(&c.discriminator, 4).unwrap();
        let mut g_opt = Adam::new(c.adam(), &g);
        let d_opt = Adam::new(c.adam(), &d);
        g.visit_mut(&mut |p| p.grad.iter_mut().for_each(|v| *v = 0.01));
        g_opt.step(&mut g).unwrap();
        let (n, pn) = norms();
        let dir = tempfile::tempdir().unwrap();
        let m = CheckpointManifest::new(&c, 3, 17, n, pn);
        save_checkpoint(dir.path(), &m, &g, &d, &g_opt, &d_opt).unwrap();

        let ck = load_checkpoint(dir.path()).unwrap();
        assert_eq!(ck.manifest, m);
        assert_eq!(ck.g_opt, g_opt);
        assert_eq!(ck.d_opt, d_opt);
        let x = Tensor::full(TensorShape::new(1, 1, 64, 64), 0.3);
        let mut g2 = ck.generator;
        assert_eq!(
            g.forward(&x, &x, Mode::Eval).unwrap(),
            g2.forward(&x, &x, Mode::Eval).unwrap()
        );
        let (_, mut g3) = load_generator(&dir.path().join(CHECKPOINT_NAME)).unwrap();
        assert_eq!(
            g.forward(&x, &x, Mode::Eval).unwrap(),
            g3.forward(&x, &x, Mode::Eval).unwrap()
        );
    }

    #[test]
    fn spec_changes_are_compatibility_errors() {
        let c = tiny();
        let m = CheckpointManifest::new(&c, 0, 0, norms().0, norms().1);
        let mut other = c.clone();
        other.generator.architecture = Architecture::SingleStream;
        assert!(matches!(m.ensure_compatible(&other), Err(Error::Compatibility(_))));
        let mut other = c.clone();
        other.discriminator.widths[0] = 3;
        assert!(matches!(m.ensure_compatible(&other), Err(Error::Compatibility(_))));
        m.ensure_compatible(&c).unwrap();

        // weights written for one width cannot be loaded into another
        let dir = tempfile::tempdir().unwrap();
        let g = build_generator(&c.generator, 0).unwrap();
        let d = build_discriminator(&c.discriminator, 0).unwrap();
        save_checkpoint(dir.path(), &m, &g, &d, &Adam::new(c.adam(), &g), &Adam::new(c.adam(), &d)).unwrap();
        let mut tampered = m.clone();
        tampered.generator_spec.base_width = 4;
        fs::write(dir.path().join(CHECKPOINT_NAME), serde_json::to_string(&tampered).unwrap()).unwrap();
        assert!(matches!(load_generator(dir.path()), Err(Error::Compatibility(_))));
    }

    #[test]
    fn truncated_weights_are_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        write_tensors(&p, &[("a".into(), vec![2], &[1.0, 2.0][..])]).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_tensors(&p), Err(Error::Corruption(_))));
        assert!(matches!(load_checkpoint(dir.path()), Err(Error::Io { .. })));
    }
}
