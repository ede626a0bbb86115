//! The `dsm-refine` command: `synth`, `train`, `infer`, `eval` and `profile`.
//!
//! Every run writes a [`RunManifest`] next to its outputs. Exit codes are 0
//! on success, 1 for internal failures and 2 for usage or input errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate, extract_profile, format_table, profile_csv, ProfileLine, DEFAULT_DILATION_PX};
use crate::nets::{Architecture, DiscriminatorSpec};
use crate::preview::write_preview;
use crate::raster::{load_raster, write_raster, RasterKind};
use crate::synth::{generate_dataset, DatasetManifest, SynthConfig, MANIFEST_NAME};
use crate::train::{infer, resume, train, TrainConfig};

pub const RUN_MANIFEST_NAME: &str = "run_manifest.json";

/// Build identifier recorded in run manifests. `DSM_REFINE_GIT_DESCRIBE` at
/// compile time replaces the package version.
pub const VERSION: &str = match option_env!("DSM_REFINE_GIT_DESCRIBE") {
    Some(v) => v,
    None => concat!("v", env!("CARGO_PKG_VERSION")),
};

#[derive(Debug, Parser)]
#[command(name = "dsm-refine", version, about = "Refine stereo DSMs with a dual-stream conditional GAN")]
pub struct Cli {
    /// Seed for every random draw; overrides the seed in config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Single-threaded, bit-reproducible execution. Runs are always
    /// single-threaded, so this only gets recorded in the run manifest.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with `dataset.json`.
    Synth(SynthArgs),
    /// Train (or resume) the generator and discriminator.
    Train(TrainArgs),
    /// Refine a DSM with a trained checkpoint.
    Infer(InferArgs),
    /// Masked accuracy of a DSM against ground truth.
    Eval(EvalArgs),
    /// Height profiles along a line, one CSV per raster.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings (JSON, or TOML by extension). Defaults otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config (JSON, or TOML by extension). Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `dataset.json` or the directory holding it.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint directory or `checkpoint.json`.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Start from the reduced 64 px profile instead of the full defaults.
    #[arg(long)]
    pub smoke: bool,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

/// One flag per training setting.
#[derive(Debug, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr_alpha: Option<f64>,
    #[arg(long)]
    pub adam_beta1: Option<f64>,
    #[arg(long)]
    pub adam_beta2: Option<f64>,
    #[arg(long)]
    pub adam_eps: Option<f64>,
    #[arg(long)]
    pub lambda_l1: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<u32>,
    /// Sets both the crop size and the generator input size.
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub patches_per_scene: Option<usize>,
    #[arg(long)]
    pub hflip: Option<bool>,
    #[arg(long)]
    pub base_width: Option<usize>,
    #[arg(long)]
    pub n_levels: Option<usize>,
    #[arg(long)]
    pub fusion_width: Option<usize>,
    #[arg(long)]
    pub dropout_rate: Option<f32>,
    /// `wnet` or `single_stream`.
    #[arg(long, value_parser = parse_architecture)]
    pub architecture: Option<Architecture>,
    /// Discriminator widths become `b, 2b, 4b, 8b, 1`.
    #[arg(long)]
    pub disc_base: Option<usize>,
    #[arg(long)]
    pub disc_slope: Option<f32>,
    #[arg(long)]
    pub disc_norm: Option<bool>,
}

fn parse_architecture(s: &str) -> std::result::Result<Architecture, String> {
    match s {
        "wnet" => Ok(Architecture::Wnet),
        "single_stream" | "single-stream" => Ok(Architecture::SingleStream),
        _ => Err(format!("unknown architecture {s:?}; expected wnet or single_stream")),
    }
}

impl TrainOverrides {
    pub fn apply(&self, c: &mut TrainConfig) {
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { c.$($field).+ = v; })*
            };
        }
        set!(
            epochs => epochs,
            batch_size => batch_size,
            lr_alpha => lr_alpha,
            adam_beta1 => adam_beta1,
            adam_beta2 => adam_beta2,
            adam_eps => adam_eps,
            lambda_l1 => lambda_l1,
            checkpoint_every => checkpoint_every,
            patch_size => patch_size,
            patch_size => generator.in_size,
            patches_per_scene => patches_per_scene,
            hflip => hflip,
            base_width => generator.base_width,
            n_levels => generator.n_levels,
            fusion_width => generator.fusion_width,
            dropout_rate => generator.dropout_rate,
            architecture => generator.architecture,
            disc_slope => discriminator.leaky_slope,
            disc_norm => discriminator.norm,
        );
        if let Some(b) = self.disc_base {
            c.discriminator.widths = DiscriminatorSpec::with_base(b).widths;
        }
    }
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Stereo DSM (`.r32` or GeoTIFF).
    #[arg(long)]
    pub dsm: PathBuf,
    /// PAN image on the same grid (`.r32` or GeoTIFF).
    #[arg(long)]
    pub pan: PathBuf,
    /// Output `.r32`; `<stem>.valid.r32` and `<stem>.png` are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Binary building footprints.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DILATION_PX)]
    pub dilation: usize,
    /// Report JSON; defaults to `<pred stem>.metrics.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Row label in the printed table; defaults to the prediction file stem.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(required = true)]
    pub rasters: Vec<PathBuf>,
    /// `x0,y0,x1,y1` in pixel coordinates (x = column, y = row).
    #[arg(long, value_parser = parse_line, allow_hyphen_values = true)]
    pub line: [f64; 4],
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Directory for `<stem>.profile.csv` files; defaults to each raster's directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_line(s: &str) -> std::result::Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 4 comma-separated numbers, got {}", v.len()))
}

/// Record of one invocation, enough to re-run it: `args` is the full
/// command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub deterministic: bool,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub duration_s: f64,
}

impl RunManifest {
    /// Writes to a temporary file in the same directory, then renames.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))? + "\n";
        atomic_write(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a JSON or TOML (by extension) config file.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
        toml::from_str(&text).map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("config types serialize to JSON")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Outputs of one subcommand, before timing is added.
struct Ran {
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    manifest_path: PathBuf,
}

fn cmd_synth(a: &SynthArgs, seed: Option<u64>) -> Result<Ran> {
    let mut config: SynthConfig = match &a.spec {
        Some(p) => load_config(p)?,
        None => SynthConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    create_dir(&a.out)?;
    let manifest = generate_dataset(&config, a.count, &a.out)?;
    println!("wrote {} scenes to {}", manifest.scenes.len(), a.out.display());
    Ok(Ran {
        config: to_value(&config),
        inputs: a.spec.iter().cloned().collect(),
        outputs: vec![a.out.join(MANIFEST_NAME)],
        manifest_path: a.out.join(RUN_MANIFEST_NAME),
    })
}

/// Resolves the training config: file (or built-in profile), then flags,
/// then the global seed.
pub fn train_config(a: &TrainArgs, seed: Option<u64>) -> Result<TrainConfig> {
    let mut config = match &a.config {
        Some(p) => load_config(p)?,
        None if a.smoke => TrainConfig::smoke(),
        None => TrainConfig::default(),
    };
    a.overrides.apply(&mut config);
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_train(a: &TrainArgs, seed: Option<u64>) -> Result<Ran> {
    let config = train_config(a, seed)?;
    let data_path = if a.data.is_dir() { a.data.join(MANIFEST_NAME) } else { a.data.clone() };
    let data = DatasetManifest::load(&data_path)?;
    create_dir(&a.out)?;
    let outcome = match &a.resume {
        Some(ck) => resume(ck, &config, &data, &a.out)?,
        None => train(&config, &data, &a.out)?,
    };
    if let Some(last) = outcome.records.last() {
        println!(
            "epoch {} step {}: d_loss {:.4} g_adv {:.4} g_l1 {:.4}",
            last.epoch, last.step, last.d_loss, last.g_adv, last.g_l1
        );
    }
    println!("checkpoint: {}", outcome.final_checkpoint.display());
    let mut inputs = vec![data_path];
    inputs.extend(a.config.iter().cloned());
    inputs.extend(a.resume.iter().cloned());
    Ok(Ran {
        config: to_value(&config),
        inputs,
        outputs: vec![outcome.final_checkpoint, outcome.log_path, outcome.val_log_path],
        manifest_path: a.out.join(RUN_MANIFEST_NAME),
    })
}

fn cmd_infer(a: &InferArgs) -> Result<Ran> {
    let dsm = load_raster(&a.dsm)?;
    let pan = load_raster(&a.pan)?;
    let out = infer(&a.checkpoint, &dsm, &pan)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let valid_path = with_suffix(&a.out, ".valid.r32");
    let png_path = with_suffix(&a.out, ".png");
    write_raster(&out.refined, &a.out)?;
    write_raster(&out.validity, &valid_path)?;
    write_preview(&out.refined, &png_path)?;
    if out.clamped > 0 {
        eprintln!("warning: {} generator outputs clamped into the height range", out.clamped);
    }
    println!("refined DSM: {}", a.out.display());
    Ok(Ran {
        config: serde_json::json!({ "checkpoint": a.checkpoint }),
        inputs: vec![a.checkpoint.clone(), a.dsm.clone(), a.pan.clone()],
        outputs: vec![a.out.clone(), valid_path, png_path],
        manifest_path: with_suffix(&a.out, ".run.json"),
    })
}

fn cmd_eval(a: &EvalArgs) -> Result<Ran> {
    let pred = load_raster(&a.pred)?;
    let gt = load_raster(&a.gt)?;
    let mask = load_raster(&a.mask)?;
    if mask.kind() != RasterKind::Mask {
        return Err(Error::Input(format!("{} is not a mask raster", a.mask.display())));
    }
    let report = evaluate(&pred, &gt, &mask, a.dilation)?;
    let label = a
        .label
        .clone()
        .unwrap_or_else(|| a.pred.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    print!("{}", format_table(&[(&label, &report)]));
    println!("pixels: {} (nodata excluded: {})", report.n_pixels, report.excluded_nodata);
    let json = a.out.clone().unwrap_or_else(|| with_suffix(&a.pred, ".metrics.json"));
    report.save_json(&json)?;
    Ok(Ran {
        config: serde_json::json!({ "dilation_px": a.dilation }),
        inputs: vec![a.pred.clone(), a.gt.clone(), a.mask.clone()],
        manifest_path: with_suffix(&json, ".run.json"),
        outputs: vec![json],
    })
}

fn cmd_profile(a: &ProfileArgs) -> Result<Ran> {
    let [x0, y0, x1, y1] = a.line;
    let line = ProfileLine::new((x0, y0), (x1, y1), a.samples);
    let mut outputs = Vec::with_capacity(a.rasters.len());
    if let Some(d) = &a.out_dir {
        create_dir(d)?;
    }
    for path in &a.rasters {
        let points = extract_profile(&load_raster(path)?, &line)?;
        let name = with_suffix(path, ".profile.csv");
        let csv_path = match &a.out_dir {
            Some(d) => d.join(name.file_name().unwrap_or_default()),
            None => name,
        };
        std::fs::write(&csv_path, profile_csv(&points)).map_err(|e| Error::io(&csv_path, e))?;
        println!("{}", csv_path.display());
        outputs.push(csv_path);
    }
    let first = outputs.first().cloned().unwrap_or_else(|| PathBuf::from("profile"));
    Ok(Ran {
        config: to_value(&line),
        inputs: a.rasters.clone(),
        manifest_path: with_suffix(&first, ".run.json"),
        outputs,
    })
}

/// Runs a parsed command and writes its run manifest.
pub fn execute(cli: &Cli, args: Vec<String>) -> Result<RunManifest> {
    let start = Instant::now();
    let (name, ran) = match &cli.command {
        Command::Synth(a) => ("synth", cmd_synth(a, cli.seed)?),
        Command::Train(a) => ("train", cmd_train(a, cli.seed)?),
        Command::Infer(a) => ("infer", cmd_infer(a)?),
        Command::Eval(a) => ("eval", cmd_eval(a)?),
        Command::Profile(a) => ("profile", cmd_profile(a)?),
    };
    let manifest = RunManifest {
        command: name.into(),
        args,
        config: ran.config,
        seed: cli.seed,
        deterministic: cli.deterministic,
        inputs: ran.inputs,
        outputs: ran.outputs,
        version: VERSION.into(),
        duration_s: start.elapsed().as_secs_f64(),
    };
    manifest.save(&ran.manifest_path)?;
    Ok(manifest)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let argv = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, argv) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
