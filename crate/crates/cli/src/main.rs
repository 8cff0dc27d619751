//! `simnet` — train the digit classifier, measure per-filter ablation
//! importance, and render localization heatmaps.
//!
//! Exit codes: 0 success, 1 usage or invalid configuration, 2 missing or
//! unreadable data, 3 numeric failure during training.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use simnet_core::checkpoint::{load_checkpoint, save_checkpoint};
use simnet_core::data::{load_pgm, Dataset, Polarity};
use simnet_core::interpret::{
    accuracy_by_class, compute_importance, extract, heatmap, ImportanceOptions, ImportanceReport,
};
use simnet_core::model::{ModelSpec, Network};
use simnet_core::optim::AdamConfig;
use simnet_core::train::{train, TrainConfig};
use simnet_core::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "simnet",
    version,
    about = "Digit-classifier training and ablation-based localization heatmaps",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the classifier on MNIST and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the MNIST test set (JSON report).
    Eval(EvalArgs),
    /// Measure per-filter ablation importance and write the report JSON.
    Importance(ImportanceArgs),
    /// Render a localization heatmap for an image as PGM.
    Heatmap(HeatmapArgs),
    /// Render the heatmap and threshold it into a binary extraction mask.
    Extract(ExtractArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Directory holding the four canonical MNIST idx files.
    #[arg(long, value_name = "DIR")]
    mnist_dir: PathBuf,
    /// Output checkpoint path.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Training epochs (0 writes the freshly initialized checkpoint).
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 300)]
    batch: usize,
    /// Adam base learning rate.
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    /// Per-batch learning-rate decay d in lr/(1 + d*t).
    #[arg(long, default_value_t = 0.00001)]
    decay: f64,
    /// Seed for initialization and batch shuffling.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_name = "DIR")]
    mnist_dir: PathBuf,
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Optional path for the JSON report (always printed to stdout).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long, value_name = "DIR")]
    mnist_dir: PathBuf,
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Output path for the importance report JSON.
    #[arg(long, value_name = "PATH")]
    report: PathBuf,
    /// Evaluate on a seeded random subset of the test set.
    #[arg(long, value_name = "N")]
    subset: Option<usize>,
    /// Seed for the subset draw (recorded in the report).
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Weight filters by e_i - E instead of the default E - e_i.
    #[arg(long, default_value_t = false)]
    negate_importance: bool,
}

#[derive(Args)]
struct HeatmapArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Importance report JSON produced by `importance`.
    #[arg(long, value_name = "PATH")]
    report: PathBuf,
    /// Input image (binary PGM, any size of at least 4x4).
    #[arg(long, value_name = "PGM")]
    image: PathBuf,
    /// Output heatmap PGM.
    #[arg(long, value_name = "PGM")]
    out: PathBuf,
    /// Glyph polarity handling: keep, invert, or auto.
    #[arg(long, default_value = "auto")]
    polarity: Polarity,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    heatmap: HeatmapArgs,
    /// Nearest-rank percentile threshold in (0, 100).
    #[arg(long, default_value_t = 95.0)]
    percentile: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{}", e);
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{}", e);
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Importance(args) => cmd_importance(args),
        Command::Heatmap(args) => cmd_heatmap(args),
        Command::Extract(args) => cmd_extract(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// 1 usage/config, 2 data, 3 numeric.
fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument { .. } | Error::EmptyEvalSet => 1,
        Error::NonFinite { .. } => 3,
        _ => 2,
    }
}

fn invalid(what: &'static str, detail: String) -> Error {
    Error::InvalidArgument { what, detail }
}

fn check_positive(value: f64, what: &'static str) -> Result<(), Error> {
    if !(value.is_finite() && value > 0.0) {
        return Err(invalid(
            what,
            format!("{} must be positive and finite", value),
        ));
    }
    Ok(())
}

fn load_train_split(dir: &Path) -> Result<Dataset, Error> {
    Dataset::load_mnist(dir, "train")
}

fn load_test_split(dir: &Path) -> Result<Dataset, Error> {
    Dataset::load_mnist(dir, "t10k")
}

fn cmd_train(args: TrainArgs) -> Result<(), Error> {
    check_positive(args.lr, "--lr")?;
    if !(args.decay.is_finite() && args.decay >= 0.0) {
        return Err(invalid("--decay", "must be finite and non-negative".into()));
    }
    if args.batch == 0 {
        return Err(invalid("--batch", "must be at least 1".into()));
    }

    let train_set = load_train_split(&args.mnist_dir)?;
    let test_set = load_test_split(&args.mnist_dir)?;
    println!(
        "loaded {} training and {} test images",
        train_set.len(),
        test_set.len()
    );

    let mut net = Network::<f32>::init(ModelSpec::lenet(), args.seed)?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        seed: args.seed,
        adam: AdamConfig {
            learning_rate: args.lr,
            decay: args.decay,
            ..AdamConfig::default()
        },
    };
    train(&mut net, &train_set, Some(&test_set), &config, |stats| {
        println!(
            "epoch {:>3}  loss {:.6}  test accuracy {:.4}",
            stats.epoch + 1,
            stats.mean_loss,
            stats.test_accuracy.unwrap_or(f64::NAN)
        );
    })?;
    save_checkpoint(&net, &args.model)?;
    println!("checkpoint written to {}", args.model.display());
    Ok(())
}

#[derive(Serialize)]
struct ClassAccuracy {
    class: usize,
    correct: usize,
    total: usize,
    accuracy: f64,
}

#[derive(Serialize)]
struct EvalReport {
    overall_accuracy: f64,
    eval_set_size: usize,
    per_class: Vec<ClassAccuracy>,
}

fn cmd_eval(args: EvalArgs) -> Result<(), Error> {
    let net = load_checkpoint(&args.model, ModelSpec::lenet())?;
    let test_set = load_test_split(&args.mnist_dir)?;
    let (overall, per_class) = accuracy_by_class(&net, &test_set)?;
    let report = EvalReport {
        overall_accuracy: overall,
        eval_set_size: test_set.len(),
        per_class: per_class
            .iter()
            .enumerate()
            .map(|(class, &(correct, total))| ClassAccuracy {
                class,
                correct,
                total,
                accuracy: correct as f64 / total.max(1) as f64,
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    print!("{}", json);
    if let Some(out) = args.out {
        simnet_core::checkpoint::write_atomic(&out, json.as_bytes())?;
    }
    Ok(())
}

fn cmd_importance(args: ImportanceArgs) -> Result<(), Error> {
    if args.subset == Some(0) {
        return Err(invalid("--subset", "must be at least 1".into()));
    }
    let net = load_checkpoint(&args.model, ModelSpec::lenet())?;
    let full = load_test_split(&args.mnist_dir)?;
    let eval_set = match args.subset {
        Some(n) => full.sample_subset(n, args.seed),
        None => full,
    };
    let report = compute_importance(
        &net,
        &eval_set,
        ImportanceOptions {
            negate: args.negate_importance,
            seed: args.seed,
            parallel: true,
        },
    )?;
    println!(
        "baseline error E = {:.6} over {} samples{}",
        report.baseline_error,
        report.eval_set_size,
        if report.negated {
            " (negated weights)"
        } else {
            ""
        }
    );
    println!("{:>3}  {:>10}  {:>12}  {:>10}", "i", "e_i", "w'_i", "w_i");
    for i in 0..report.n_filters() {
        println!(
            "{:>3}  {:>10.6}  {:>+12.6}  {:>10.6}",
            i, report.errors[i], report.raw_weights[i], report.weights[i]
        );
    }
    report.save(&args.report)?;
    println!("report written to {}", args.report.display());
    Ok(())
}

/// Shared by `heatmap` and `extract`: load everything and build the heatmap.
fn build_heatmap(
    args: &HeatmapArgs,
) -> Result<(simnet_core::interpret::Heatmap, usize, usize), Error> {
    let net = load_checkpoint(&args.model, ModelSpec::lenet())?;
    let report = ImportanceReport::load(&args.report)?;
    if report.n_filters() != net.n_final_filters() {
        return Err(invalid(
            "--report",
            format!(
                "report covers {} filters, model has {}",
                report.n_filters(),
                net.n_final_filters()
            ),
        ));
    }
    let image = load_pgm(&args.image)?;
    let input = simnet_core::data::preprocess(&image, args.polarity);
    let stack = net.features(&input)?;
    let hm = heatmap(&stack, &report)?;
    Ok((hm, image.width(), image.height()))
}

fn write_values_pgm(values: &[f32], width: usize, height: usize, path: &Path) -> Result<(), Error> {
    let bytes = simnet_core::data::encode_pgm(values, width, height);
    simnet_core::checkpoint::write_atomic(path, &bytes)
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<(), Error> {
    let (hm, width, height) = build_heatmap(&args)?;
    write_values_pgm(&hm.to_pixels(), width, height, &args.out)?;
    println!(
        "heatmap ({}x{}) written to {}",
        width,
        height,
        args.out.display()
    );
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<(), Error> {
    let (hm, width, height) = build_heatmap(&args.heatmap)?;
    let mask = extract(&hm, args.percentile)?;
    write_values_pgm(
        &hm.to_pixels(),
        width,
        height,
        &heatmap_sibling(&args.heatmap.out),
    )?;
    write_values_pgm(mask.data(), width, height, &args.heatmap.out)?;
    let selected = mask.data().iter().filter(|&&v| v == 1.0).count();
    println!(
        "mask ({}x{}, {} pixels at p{}) written to {}; heatmap written to {}",
        width,
        height,
        selected,
        args.percentile,
        args.heatmap.out.display(),
        heatmap_sibling(&args.heatmap.out).display()
    );
    Ok(())
}

/// `extract` also writes the heatmap next to the mask: `out.pgm` gets a
/// sibling `out.heatmap.pgm`.
fn heatmap_sibling(mask_path: &Path) -> PathBuf {
    let stem = mask_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mask".into());
    mask_path.with_file_name(format!("{}.heatmap.pgm", stem))
}
