//! Trains briefly, refines a test scene, writes the preview PNG, evaluates
//! both DSMs over dilated footprints and extracts a height profile.

use dsm_refine::metrics::{evaluate, extract_profile, format_table, profile_csv, ProfileLine};
use dsm_refine::preview::write_preview;
use dsm_refine::synth::{generate_dataset, SceneSpec, SynthConfig};
use dsm_refine::train::{infer, train, TrainConfig};
use dsm_refine::Result;

fn main() -> Result<()> {
    let root = std::env::temp_dir().join("dsm_refine_refine");
    let _ = std::fs::remove_dir_all(&root);
    let data = generate_dataset(
        &SynthConfig { seed: 5, scene: SceneSpec { rows: 128, cols: 128, n_buildings: 4, ..SceneSpec::default() }, ..SynthConfig::default() },
        20,
        &root.join("data"),
    )?;
    let config = TrainConfig { epochs: 20, checkpoint_every: 20, patches_per_scene: 4, ..TrainConfig::smoke() };
    let outcome = train(&config, &data, &root.join("run"))?;

    let scene = data.load_scene(&data.splits.test[0])?;
    let refined = infer(&outcome.final_checkpoint, &scene.stereo, &scene.pan)?;
    write_preview(&refined.refined, &root.join("refined.png"))?;
    write_preview(&scene.gt, &root.join("gt.png"))?;

    let stereo = evaluate(&scene.stereo, &scene.gt, &scene.mask, 3)?;
    let ours = evaluate(&refined.refined, &scene.gt, &scene.mask, 3)?;
    print!("{}", format_table(&[("Stereo DSM", &stereo), ("WNet-cGAN", &ours)]));
    println!("{}", ours.to_json());

    let line = ProfileLine::new((0.0, 64.0), (127.0, 64.0), 128);
    let csv = root.join("gt.profile.csv");
    std::fs::write(&csv, profile_csv(&extract_profile(&scene.gt, &line)?)).map_err(|e| dsm_refine::Error::Internal(e.to_string()))?;
    let refined_profile = extract_profile(&refined.refined, &line)?;
    println!("profile samples: {}, previews and CSV in {}", refined_profile.len(), root.display());
    Ok(())
}
