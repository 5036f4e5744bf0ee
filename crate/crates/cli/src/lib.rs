//! Command implementations behind the `dsc-jscc` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dsc_jscc::complexity::{self, format_layers, format_table};
use dsc_jscc::config::ExperimentConfig;
use dsc_jscc::model::{default_base_architecture, CodecModel, InputShape, VariantId};
use dsc_jscc::train::{
    evaluate_sweep, load_checkpoint, load_dataset, save_checkpoint, sweep_to_csv, synthetic_dataset, train, Dataset,
    Split,
};

const CHECKPOINT_FILE: &str = "checkpoint.dscj";
const LOSS_FILE: &str = "loss.csv";
const SWEEP_FILE: &str = "sweep.csv";

#[derive(Parser)]
#[command(name = "dsc-jscc", version, about = "Selective depthwise-separable JSCC toolkit")]
pub struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (train/eval) or CSV path (analyze).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List every model and which layers it replaces.
    Variants,
    /// Parameter and FLOP accounting.
    Analyze(AnalyzeArgs),
    /// Train the configured model; writes a checkpoint and a loss CSV.
    Train,
    /// Evaluate a checkpoint over an SNR sweep; writes a sweep CSV.
    Eval(EvalArgs),
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Model to break down layer by layer.
    #[arg(long)]
    variant: Option<VariantId>,
    /// Input size as WxH or WxHxC.
    #[arg(long)]
    input: Option<InputShape>,
    /// Encoder output channels.
    #[arg(long)]
    c: Option<usize>,
    /// Table of every model.
    #[arg(long)]
    all: bool,
    /// Percentage reduction from the first model to the second.
    #[arg(long, num_args = 2, value_names = ["FROM", "TO"])]
    compare: Option<Vec<VariantId>>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Comma-separated SNRs in dB; `inf` means noiseless.
    #[arg(long, value_delimiter = ',')]
    snr_list: Option<Vec<f64>>,
    /// Checkpoint to evaluate (default: <out>/checkpoint.dscj).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Noise draws per image.
    #[arg(long)]
    draws: Option<usize>,
}

/// Executes one command, writing results to `out` and progress to `log`.
pub fn run(cli: Cli, out: &mut dyn Write, log: &mut dyn Write) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Some(ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?),
        None => None,
    };
    match &cli.command {
        Command::Variants => Ok(write!(out, "{}", variants_listing())?),
        Command::Analyze(args) => analyze(args, config.as_ref(), cli.out.as_deref(), out),
        Command::Train => {
            let cfg = with_seed(require(config)?, cli.seed);
            cmd_train(&cfg, &out_dir(&cfg, cli.out.as_deref()), log)
        }
        Command::Eval(args) => {
            let cfg = with_seed(require(config)?, cli.seed);
            cmd_eval(&cfg, &out_dir(&cfg, cli.out.as_deref()), args, out)
        }
    }
}

fn require(config: Option<ExperimentConfig>) -> Result<ExperimentConfig> {
    config.context("this command needs --config <file>")
}

fn with_seed(mut cfg: ExperimentConfig, seed: Option<u64>) -> ExperimentConfig {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg
}

fn out_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone())
}

fn variants_listing() -> String {
    let join = |kinds: &[dsc_jscc::model::LayerKind]| kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(",");
    let mut out = String::new();
    for v in VariantId::ALL {
        let (enc, dec) = (v.encoder_kinds(), v.decoder_kinds());
        let replaced = enc.iter().chain(&dec).filter(|k| k.is_separable()).count();
        out.push_str(&format!(
            "{}: enc {} | dec {} | replaced {}%\n",
            v.name(),
            join(&enc),
            join(&dec),
            replaced * 10
        ));
    }
    out
}

fn analyze(
    args: &AnalyzeArgs,
    config: Option<&ExperimentConfig>,
    csv_out: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let derived = config.map(ExperimentConfig::derive).transpose()?;
    let input = args.input.or(derived.map(|d| d.input)).unwrap_or(InputShape::REFERENCE);
    let c = args.c.or(derived.map(|d| d.c)).unwrap_or(8);
    let base = default_base_architecture(input, c)?;

    let variant = args.variant.or(config.map(|cfg| cfg.variant));
    let reports = if args.all || variant.is_none() {
        complexity::all_variants(&base)?
    } else {
        vec![complexity::model_complexity(
            variant.unwrap_or(VariantId::Baseline),
            &base,
        )?]
    };
    writeln!(out, "input {input}, c = {c}")?;
    write!(out, "{}", format_table(&reports))?;
    if !args.all {
        if let Some(v) = variant {
            writeln!(out)?;
            write!(out, "{}", format_layers(&complexity::model_complexity(v, &base)?))?;
        }
    }
    if let Some(pair) = &args.compare {
        let r = complexity::reduction_report(pair[0], pair[1], &base)?;
        writeln!(out)?;
        writeln!(
            out,
            "{} -> {}: params -{:.2}%, FLOPs -{:.2}%",
            pair[0], pair[1], r.params_pct, r.flops_pct
        )?;
    }
    if let Some(path) = args.csv.as_deref().or(csv_out) {
        write(path, &complexity::to_csv(&reports))?;
    }
    Ok(())
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn dataset(cfg: &ExperimentConfig, split: Split) -> Result<Dataset> {
    let side = |shape: InputShape| -> Result<usize> {
        if shape.width != shape.height || shape.channels != 3 {
            bail!("images are RGB squares; input {shape} is not supported for training");
        }
        Ok(shape.width)
    };
    let shape = cfg.input_shape()?;
    let dir = match split {
        Split::Train => cfg.train_dir.as_ref(),
        Split::Test => cfg.test_dir.as_ref(),
    };
    let data = match (dir, &cfg.synthetic_images) {
        (Some(dir), _) => load_dataset(dir, cfg.crop, split)
            .with_context(|| format!("loading {split:?} images from {}", dir.display()))?,
        (None, Some(syn)) => {
            let (count, seed) = match split {
                Split::Train => (syn.train, syn.seed),
                Split::Test if syn.test > 0 => (syn.test, syn.seed.wrapping_add(1)),
                Split::Test => (syn.train, syn.seed),
            };
            synthetic_dataset(count, side(shape)?, seed)?
        }
        (None, None) => bail!("no {split:?} dataset: set a directory or `synthetic_images` in the config"),
    };
    if (data.width(), data.height()) != (shape.width, shape.height) {
        bail!(
            "dataset images are {}x{}, the model expects {}x{}",
            data.width(),
            data.height(),
            shape.width,
            shape.height
        );
    }
    Ok(data)
}

fn cmd_train(cfg: &ExperimentConfig, out: &Path, log: &mut dyn Write) -> Result<()> {
    let data = dataset(cfg, Split::Train)?;
    let mut model = CodecModel::new(cfg.architecture()?, cfg.variant, cfg.power, cfg.seed)?;
    writeln!(
        log,
        "{}: {}, {} parameters",
        cfg.variant,
        cfg.derive()?,
        model.scalar_count()
    )?;
    let report = train(&mut model, &data, &cfg.train_config(), cfg.train_channel()?)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    save_checkpoint(&model, &out.join(CHECKPOINT_FILE))?;
    write(&out.join(LOSS_FILE), &report.to_csv())?;
    if let (Some(first), Some(last)) = (report.history.first(), report.history.last()) {
        writeln!(
            log,
            "{} steps, loss {:.6} -> {:.6}",
            report.history.len(),
            first.mse,
            last.mse
        )?;
    }
    Ok(())
}

fn cmd_eval(cfg: &ExperimentConfig, out_dir: &Path, args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let path = args.checkpoint.clone().unwrap_or_else(|| out_dir.join(CHECKPOINT_FILE));
    let model = load_checkpoint(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let data = dataset(cfg, Split::Test)?;
    let snrs = args.snr_list.clone().unwrap_or_else(|| cfg.eval_snr_db.clone());
    if snrs.is_empty() || snrs.iter().any(|s| s.is_nan()) {
        bail!("--snr-list needs at least one numeric SNR");
    }
    let rows = evaluate_sweep(&model, &data, &snrs, args.draws.unwrap_or(cfg.eval_draws), cfg.seed)?;
    let csv = sweep_to_csv(&rows);
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write(&out_dir.join(SWEEP_FILE), &csv)?;
    write!(out, "{csv}")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Run {
        result: Result<()>,
        out: String,
        log: String,
    }

    fn exec(args: &[&str]) -> Run {
        let cli = Cli::try_parse_from(std::iter::once("dsc-jscc").chain(args.iter().copied())).unwrap();
        let (mut out, mut log) = (Vec::new(), Vec::new());
        let result = run(cli, &mut out, &mut log);
        Run {
            result,
            out: String::from_utf8(out).unwrap(),
            log: String::from_utf8(log).unwrap(),
        }
    }

    fn tiny_config(dir: &Path) -> String {
        let path = dir.join("cfg.json");
        fs::write(
            &path,
            r#"{"variant": "dsc-jscc-60-e2d2", "input": "16x16", "c": 4, "max_steps": 3, "batch_size": 4,
                "synthetic_images": {"train": 8, "test": 4, "seed": 2}}"#,
        )
        .unwrap();
        path.to_str().unwrap().to_string()
    }

    #[test]
    fn variants_lists_every_model() {
        let r = exec(&["variants"]);
        assert!(r.result.is_ok());
        assert_eq!(r.out.lines().count(), 11);
        assert!(r.out.contains("dsc-jscc-60-e2d2: enc Conv,DSConv,DSConv,DSConv,Conv"));
    }

    #[test]
    fn analyze_single_variant_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("t.csv");
        let r = exec(&["analyze", "--variant", "dsc-jscc-100", "--csv", csv.to_str().unwrap()]);
        r.result.unwrap();
        assert!(r.out.contains("D5     DSTConv"));
        assert_eq!(
            fs::read_to_string(csv).unwrap(),
            "variant,params,flops,params_display,flops_display\ndsc-jscc-100,12297,92684288,12.3,92.7\n"
        );
    }

    #[test]
    fn analyze_compare_prints_reductions() {
        let r = exec(&["analyze", "--compare", "dsc-jscc-60-e1d1", "dsc-jscc-60-e2d2"]);
        r.result.unwrap();
        assert!(r
            .out
            .contains("dsc-jscc-60-e1d1 -> dsc-jscc-60-e2d2: params -52.65%, FLOPs -54.20%"));
    }

    #[test]
    fn analyze_other_geometry() {
        let r = exec(&["analyze", "--variant", "baseline", "--input", "32x32", "--c", "2"]);
        r.result.unwrap();
        assert!(r.out.starts_with("input 32x32x3, c = 2"));
    }

    #[test]
    fn analyze_rejects_unknown_variants() {
        let parsed = Cli::try_parse_from(["dsc-jscc", "analyze", "--variant", "bogus"]);
        assert!(parsed.is_err());
    }

    #[test]
    fn train_then_eval_writes_csvs() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let out = dir.path().join("out");
        let out_s = out.to_str().unwrap();
        let t = exec(&["--config", &cfg, "--out", out_s, "train"]);
        t.result.unwrap();
        assert!(t.log.contains("k=32 c=4"), "{}", t.log);
        assert_eq!(fs::read_to_string(out.join(LOSS_FILE)).unwrap().lines().count(), 4);

        let e = exec(&["--config", &cfg, "--out", out_s, "eval", "--snr-list", "0,5,10,15,19"]);
        e.result.unwrap();
        let sweep = fs::read_to_string(out.join(SWEEP_FILE)).unwrap();
        assert!(sweep.starts_with("snr_db,mean_psnr_db,std_psnr_db,n_images,n_draws\n"));
        assert_eq!(sweep.lines().count(), 6);
        assert_eq!(e.out, sweep);
    }

    #[test]
    fn seed_flag_changes_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let loss = |seed: &str, name: &str| {
            let out = dir.path().join(name);
            exec(&[
                "--config",
                &cfg,
                "--seed",
                seed,
                "--out",
                out.to_str().unwrap(),
                "train",
            ])
            .result
            .unwrap();
            fs::read(out.join(LOSS_FILE)).unwrap()
        };
        assert_eq!(loss("1", "a"), loss("1", "b"));
        assert_ne!(loss("1", "a"), loss("2", "c"));
    }

    #[test]
    fn missing_dataset_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(
            &path,
            r#"{"c": 4, "input": "16x16", "train_dir": "/nonexistent/images"}"#,
        )
        .unwrap();
        let r = exec(&[
            "--config",
            path.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "train",
        ]);
        let msg = format!("{:#}", r.result.unwrap_err());
        assert!(msg.contains("/nonexistent/images"), "{msg}");
    }

    #[test]
    fn corrupted_checkpoint_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config(dir.path());
        let bad = dir.path().join("bad.dscj");
        fs::write(&bad, b"DSCJ\x01\x00\x00\x00\xff\xff").unwrap();
        let r = exec(&["--config", &cfg, "eval", "--checkpoint", bad.to_str().unwrap()]);
        assert!(format!("{:#}", r.result.unwrap_err()).starts_with("loading checkpoint"));
    }

    #[test]
    fn config_errors_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"rho": "1/12", "c": 16}"#).unwrap();
        let r = exec(&["--config", path.to_str().unwrap(), "train"]);
        assert!(format!("{:#}", r.result.unwrap_err()).contains("implies c=8"));
        assert!(exec(&["train"]).result.is_err());
    }
}
