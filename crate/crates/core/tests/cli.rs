//! End-to-end runs of the `dsm-refine` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dsm_refine::cli::RunManifest;
use dsm_refine::metrics::MetricsReport;
use dsm_refine::raster::load_raster;
use dsm_refine::synth::DatasetManifest;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsm-refine")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_spec(dir: &Path) -> PathBuf {
    let p = dir.join("synth.toml");
    std::fs::write(&p, "[scene]\nrows = 96\ncols = 96\nn_buildings = 3\n").unwrap();
    p
}

#[test]
fn synth_counts_files_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = synth_spec(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--seed", "3", "synth", "--spec", s(&spec), "--out", s(&a), "--count", "3"]);
    ok(&["--seed", "3", "synth", "--spec", s(&spec), "--out", s(&b), "--count", "3"]);
    let m = DatasetManifest::load(&a.join("dataset.json")).unwrap();
    assert_eq!(m.scenes.len(), 3);
    let r32 = std::fs::read_dir(a.join("scenes"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "r32"))
        .count();
    assert_eq!(r32, 12);
    assert_eq!(std::fs::read(a.join("dataset.json")).unwrap(), std::fs::read(b.join("dataset.json")).unwrap());
    for e in &m.scenes {
        for f in [&e.gt, &e.stereo, &e.pan, &e.mask] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
    }
    let run_manifest = RunManifest::load(&a.join("run_manifest.json")).unwrap();
    assert_eq!((run_manifest.command.as_str(), run_manifest.seed), ("synth", Some(3)));

    let empty = tmp.path().join("empty");
    ok(&["synth", "--out", s(&empty), "--count", "0"]);
    let m = DatasetManifest::load(&empty.join("dataset.json")).unwrap();
    assert!(m.scenes.is_empty() && m.splits.train.is_empty());
}

#[test]
fn usage_and_missing_inputs_exit_2() {
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
    assert_eq!(run(&["train", "--data"]).status.code(), Some(2));
    let out = run(&["train", "--data", "/definitely/missing/dataset.json", "--out", "/tmp/unused_dsm_refine"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn train_infer_eval_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = root.join("data");
    ok(&["--seed", "2", "synth", "--spec", s(&synth_spec(root)), "--out", s(&data), "--count", "8"]);

    let run_dir = root.join("run");
    ok(&["--seed", "2", "--deterministic", "train", "--smoke", "--data", s(&data), "--out", s(&run_dir), "--epochs", "2"]);
    let manifest = RunManifest::load(&run_dir.join("run_manifest.json")).unwrap();
    assert_eq!(manifest.config["epochs"], 2);
    assert_eq!(manifest.config["batch_size"], 5);
    assert!(manifest.deterministic && manifest.args.contains(&"--epochs".to_string()));
    let log = std::fs::read_to_string(run_dir.join("train_log.ndjson")).unwrap();
    let first: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    for key in ["step", "epoch", "d_loss", "g_adv", "g_l1", "g_total"] {
        assert!(first.get(key).is_some(), "{key}");
    }

    let scenes = data.join("scenes");
    let (stereo, pan, gt, mask) = (
        scenes.join("scene_0000_stereo.r32"),
        scenes.join("scene_0000_pan.r32"),
        scenes.join("scene_0000_gt.r32"),
        scenes.join("scene_0000_mask.r32"),
    );
    let refined = root.join("out/refined.r32");
    let ck = run_dir.join("checkpoints/epoch_0002");
    ok(&["infer", "--checkpoint", s(&ck), "--dsm", s(&stereo), "--pan", s(&pan), "--out", s(&refined)]);
    let r = load_raster(&refined).unwrap();
    assert_eq!(r.shape(), load_raster(&stereo).unwrap().shape());
    assert_eq!(load_raster(root.join("out/refined.valid.r32")).unwrap().shape(), r.shape());
    let png = image::open(root.join("out/refined.png")).unwrap();
    assert_eq!((png.width() as usize, png.height() as usize), (r.cols(), r.rows()));
    assert!(root.join("out/refined.run.json").exists());

    // pred == gt
    let json = root.join("self.json");
    let table = ok(&["eval", "--pred", s(&gt), "--gt", s(&gt), "--mask", s(&mask), "--out", s(&json), "--label", "GT"]);
    let row = table.lines().find(|l| l.starts_with("GT")).unwrap();
    assert!(row.ends_with("0.00     0.00     0.00  1.00"), "{row}");
    let report = MetricsReport::load_json(&json).unwrap();
    assert_eq!((report.mae_m, report.ncc), (0.0, 1.0));

    // JSON re-parses to the printed values, and dilation grows the mask
    let counts: Vec<usize> = [0, 3]
        .iter()
        .map(|d| {
            let j = root.join(format!("d{d}.json"));
            let d = d.to_string();
            let printed = ok(&["eval", "--pred", s(&refined), "--gt", s(&gt), "--mask", s(&mask), "--dilation", &d, "--out", s(&j)]);
            let rep = MetricsReport::load_json(&j).unwrap();
            let row = printed.lines().nth(2).unwrap();
            let shown: Vec<&str> = row.split_whitespace().rev().take(4).collect();
            let expect: Vec<String> = rep.values().iter().rev().map(|v| format!("{v:.2}")).collect();
            assert_eq!(shown, expect);
            rep.n_pixels
        })
        .collect();
    assert!(counts[1] > counts[0], "{counts:?}");

    let prof = root.join("profiles");
    ok(&["profile", s(&gt), s(&refined), "--line", "0,40,95,40", "--samples", "2", "--out-dir", s(&prof)]);
    let a = std::fs::read_to_string(prof.join("scene_0000_gt.profile.csv")).unwrap();
    let b = std::fs::read_to_string(prof.join("refined.profile.csv")).unwrap();
    assert_eq!((a.lines().count(), b.lines().count()), (3, 3));
    let dist = |t: &str| t.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect::<Vec<_>>();
    assert_eq!(dist(&a), dist(&b));
    assert_eq!(run(&["profile", s(&gt), "--line", "0,0,500,0"]).status.code(), Some(2));
}
