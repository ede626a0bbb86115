//! Drives every `dsm-refine` subcommand in-process, as a shell script would.

use dsm_refine::cli::main_with_args;

fn run(args: &[&str]) {
    println!("$ dsm-refine {}", args.join(" "));
    let code = main_with_args(std::iter::once("dsm-refine").chain(args.iter().copied()));
    assert_eq!(code, 0, "exit code {code}");
}

fn main() {
    let root = std::env::temp_dir().join("dsm_refine_cli");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root).unwrap();
    let spec = root.join("synth.toml");
    std::fs::write(&spec, "[scene]\nrows = 96\ncols = 96\nn_buildings = 3\n").unwrap();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();

    run(&["--seed", "4", "synth", "--spec", &p("synth.toml"), "--out", &p("data"), "--count", "12"]);
    run(&["--seed", "4", "--deterministic", "train", "--smoke", "--data", &p("data"), "--out", &p("run"), "--epochs", "2"]);
    let ck = p("run/checkpoints/epoch_0002");
    let stereo = p("data/scenes/scene_0000_stereo.r32");
    let pan = p("data/scenes/scene_0000_pan.r32");
    let gt = p("data/scenes/scene_0000_gt.r32");
    let mask = p("data/scenes/scene_0000_mask.r32");
    run(&["infer", "--checkpoint", &ck, "--dsm", &stereo, "--pan", &pan, "--out", &p("out/refined.r32")]);
    run(&["eval", "--pred", &p("out/refined.r32"), "--gt", &gt, "--mask", &mask, "--label", "WNet-cGAN"]);
    run(&["eval", "--pred", &stereo, "--gt", &gt, "--mask", &mask, "--out", &p("out/stereo.metrics.json")]);
    run(&["profile", &gt, &p("out/refined.r32"), "--line", "0,48,95,48", "--samples", "96", "--out-dir", &p("profiles")]);
    println!("artifacts in {}", root.display());
}
