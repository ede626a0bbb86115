//! Generates a small synthetic dataset and summarizes `dataset.json`.
//!
//! `cargo run --example synth_dataset -- [out_dir] [count]`

use dsm_refine::metrics::evaluate;
use dsm_refine::synth::{generate_dataset, SceneSpec, SynthConfig};
use dsm_refine::Result;

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map_or_else(|| std::env::temp_dir().join("dsm_refine_synth"), Into::into);
    let count = args.next().map_or(10, |c| c.parse().expect("count"));
    let config = SynthConfig {
        seed: 7,
        scene: SceneSpec { rows: 128, cols: 128, n_buildings: 5, ..SceneSpec::default() },
        ..SynthConfig::default()
    };
    let data = generate_dataset(&config, count, &out)?;
    println!("dataset at {}", out.display());
    println!(
        "height normalization [{}, {}] m, splits {}/{}/{}",
        data.norm_spec.h_min,
        data.norm_spec.h_max,
        data.splits.train.len(),
        data.splits.val.len(),
        data.splits.test.len()
    );
    for entry in data.scenes.iter().take(5) {
        let s = data.load_scene(&entry.id)?;
        let r = evaluate(&s.stereo, &s.gt, &s.mask, 3)?;
        println!(
            "{}: {}/{} buildings, stereo MAE {:.2} m, NCC {:.3}",
            entry.id, entry.buildings_placed, entry.buildings_requested, r.mae_m, r.ncc
        );
    }
    Ok(())
}
