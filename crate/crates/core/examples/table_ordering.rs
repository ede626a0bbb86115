//! Degraded stereo DSM vs single-stream cGAN vs WNet-cGAN on a synthetic
//! test split, over footprints dilated by 3 px.
//!
//! `cargo run --release --example table_ordering -- [scenes] [epochs] [seeds]`

use std::path::Path;

use dsm_refine::metrics::{evaluate_pooled, format_table, MetricsReport, DEFAULT_DILATION_PX};
use dsm_refine::nets::Architecture;
use dsm_refine::synth::{DegradationSpec, generate_dataset, DatasetManifest, SceneSpec, SynthConfig};
use dsm_refine::train::{infer_with, load_generator, train, TrainConfig};
use dsm_refine::{RasterGrid, Result};

fn evaluate_model(arch: Option<Architecture>, data: &DatasetManifest, seed: u64, epochs: u32, dir: &Path) -> Result<MetricsReport> {
    let test = data.load_split(&data.splits.test)?;
    let preds: Vec<RasterGrid> = match arch {
        None => test.iter().map(|s| s.stereo.clone()).collect(),
        Some(a) => {
            let mut config = TrainConfig { epochs, seed, checkpoint_every: epochs, ..TrainConfig::smoke() };
            config.generator.architecture = a;
            let out = train(&config, data, &dir.join(format!("{a:?}_{seed}")))?;
            let (m, mut g) = load_generator(&out.final_checkpoint)?;
            test.iter()
                .map(|s| Ok(infer_with(&mut g, &m.norm_spec, &m.pan_norm_spec, &s.stereo, &s.pan)?.refined))
                .collect::<Result<_>>()?
        }
    };
    evaluate_pooled(preds.iter().zip(&test).map(|(p, s)| (p, &s.gt, &s.mask)), DEFAULT_DILATION_PX)
}

fn main() -> Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let scenes = *args.first().unwrap_or(&64) as usize;
    let epochs = *args.get(1).unwrap_or(&40) as u32;
    let seeds = *args.get(2).unwrap_or(&3);
    let dir = tempfile::tempdir().expect("temp dir");
    let dir = dir.path();
    for seed in 0..seeds {
        let config = SynthConfig {
            seed,
            scene: SceneSpec { rows: 128, cols: 128, n_buildings: 4, ..SceneSpec::default() },
            degradation: DegradationSpec { smooth_radius_px: 5, ..DegradationSpec::default() },
            ..SynthConfig::default()
        };
        let data = generate_dataset(&config, scenes, &dir.join(format!("data_{seed}")))?;
        let t = std::time::Instant::now();
        let rows = [
            ("Stereo DSM", evaluate_model(None, &data, seed, epochs, dir)?),
            ("cGAN", evaluate_model(Some(Architecture::SingleStream), &data, seed, epochs, dir)?),
            ("WNet-cGAN", evaluate_model(Some(Architecture::Wnet), &data, seed, epochs, dir)?),
        ];
        println!("seed {seed} ({:.0} s)", t.elapsed().as_secs_f64());
        print!("{}", format_table(&rows.iter().map(|(l, r)| (*l, r)).collect::<Vec<_>>()));
    }
    Ok(())
}

