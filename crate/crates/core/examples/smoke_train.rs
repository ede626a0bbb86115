//! Short training run on the reduced 64 px profile, then resumes from the
//! mid-run checkpoint and checks that the logs agree.
//!
//! `cargo run --release --example smoke_train -- [scenes] [epochs]`

use dsm_refine::synth::{generate_dataset, SceneSpec, SynthConfig};
use dsm_refine::train::{resume, train, TrainConfig, TRAIN_LOG_NAME};
use dsm_refine::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u32>().expect("numeric argument"));
    let scenes = args.next().unwrap_or(16) as usize;
    let epochs = args.next().unwrap_or(4);
    let root = std::env::temp_dir().join("dsm_refine_smoke_train");
    let _ = std::fs::remove_dir_all(&root);
    let data = generate_dataset(
        &SynthConfig { seed: 1, scene: SceneSpec { rows: 96, cols: 96, n_buildings: 3, ..SceneSpec::default() }, ..SynthConfig::default() },
        scenes,
        &root.join("data"),
    )?;
    let config = TrainConfig { epochs, checkpoint_every: 1, seed: 3, ..TrainConfig::smoke() };

    let t = std::time::Instant::now();
    let full = train(&config, &data, &root.join("full"))?;
    println!("{} steps in {:.1} s", full.records.len(), t.elapsed().as_secs_f64());
    for r in full.records.iter().step_by(full.records.len().div_ceil(8)) {
        println!("step {:>3} epoch {}: d {:.4} adv {:.4} l1 {:.4}", r.step, r.epoch, r.d_loss, r.g_adv, r.g_l1);
    }
    for v in &full.validation {
        println!("validation L1 after epoch {}: {:.4}", v.epoch, v.val_l1);
    }

    let half = root.join("full/checkpoints").join(format!("epoch_{:04}", epochs / 2));
    let resumed_dir = root.join("resumed");
    std::fs::create_dir_all(&resumed_dir).map_err(|e| dsm_refine::Error::Internal(e.to_string()))?;
    let tail = resume(&half, &config, &data, &resumed_dir)?;
    let agree = full.records[full.records.len() - tail.records.len()..] == tail.records[..];
    println!("resume from epoch {} reproduces the remaining {} steps: {agree}", epochs / 2, tail.records.len());
    println!("log: {}", root.join("full").join(TRAIN_LOG_NAME).display());
    Ok(())
}
