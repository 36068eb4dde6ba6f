//! Command line for the pixelrl crate: train a model, evaluate a checkpoint
//! with PSNR/SSIM and optional test-time augmentation, dump per-step states
//! and action maps, or run the brute-force verification suites.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use pixelrl::checkpoint::load_model;
use pixelrl::env::{load_dir, load_image, synthetic_dataset, Task};
use pixelrl::eval::{evaluate, EvalOptions};
use pixelrl::metrics::format_db;
use pixelrl::oracle;
use pixelrl::trainer::{parse_config_file, train, training_dataset, ActionSelection, TrainConfig};
use pixelrl::viz::visualize;
use pixelrl::{PixelRlError, Result};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pixelrl", version, about = "Per-pixel RL image restoration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// `key = value` config file, applied before command-line overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// denoise_gauss, denoise_sp, denoise_poisson, restore, or color.
    #[arg(long, global = true)]
    task: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model; writes a training log and checkpoints.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset; writes report.csv and restored PNGs.
    Eval(EvalArgs),
    /// Dump per-step states, action maps, and the palette legend.
    Visualize(VizArgs),
    /// Run the independent verification suites against the implementation.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Config override, `key=value`; repeatable, wins over --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Model checkpoint to score.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory of clean PNG images; synthetic images when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Synthetic image count when --data is absent.
    #[arg(long, default_value_t = 4)]
    images: usize,
    /// Synthetic image side length.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Average the eight dihedral variants of each input.
    #[arg(long)]
    tta: bool,
    /// Steps per image; defaults to the checkpoint's training horizon.
    #[arg(long)]
    t_max: Option<usize>,
    /// Sample actions instead of taking the argmax.
    #[arg(long)]
    sample: bool,
    /// Gaussian noise sigma on the 0..255 scale.
    #[arg(long)]
    sigma: Option<f64>,
    /// Salt-and-pepper corruption density.
    #[arg(long)]
    sp_density: Option<f64>,
    /// Poisson noise peak event count.
    #[arg(long)]
    poisson_peak: Option<f64>,
    /// Color cast gain amplitude.
    #[arg(long)]
    color_cast: Option<f64>,
}

#[derive(Args)]
struct VizArgs {
    /// Model checkpoint to run.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Input image; a corrupted synthetic image when absent.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Corrupt the provided --image with the task's default corruption.
    #[arg(long)]
    corrupt: bool,
    /// Synthetic image side length.
    #[arg(long, default_value_t = 64)]
    size: usize,
    /// Steps to run; defaults to the checkpoint's training horizon.
    #[arg(long)]
    t_max: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Check the fast filters against naive re-implementations.
    #[arg(long)]
    filter: bool,
    /// Check the return recursion against explicit kernel powers.
    #[arg(long)]
    returns: bool,
    /// Check analytic gradients against finite differences.
    #[arg(long)]
    grads: bool,
    /// Check exhaustive tiny-instance search against the reward formula.
    #[arg(long)]
    optimality: bool,
    /// Case count per suite; each suite has its own default budget.
    #[arg(long)]
    cases: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1 usage, 2 data, 3 numeric; io and checkpoint problems count as data.
fn exit_code(e: &PixelRlError) -> u8 {
    match e {
        PixelRlError::Config(_) | PixelRlError::InvalidAction(_) => 1,
        PixelRlError::Numeric(_) => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => run_train(&cli.global, &args),
        Command::Eval(args) => run_eval(&cli.global, &args),
        Command::Visualize(args) => run_viz(&cli.global, &args),
        Command::Verify(args) => run_verify(&cli.global, &args),
    }
}

fn run_train(global: &Global, args: &TrainArgs) -> Result<()> {
    let file_pairs = match &global.config {
        Some(path) => parse_config_file(path)?,
        None => Vec::new(),
    };
    let mut cli_pairs = Vec::new();
    for pair in &args.set {
        let (k, v) = pair.split_once('=').ok_or_else(|| {
            PixelRlError::Config(format!("expected KEY=VALUE in --set, got `{pair}`"))
        })?;
        cli_pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    // Dedicated flags win over --set duplicates.
    for (key, value) in [
        ("task", global.task.clone()),
        ("seed", global.seed.map(|s| s.to_string())),
        ("out", global.out.as_ref().map(|p| p.display().to_string())),
    ] {
        if let Some(value) = value {
            cli_pairs.retain(|(k, _)| k != key);
            cli_pairs.push((key.to_string(), value));
        }
    }
    let cfg = TrainConfig::build(&file_pairs, &cli_pairs)?;
    let dataset = training_dataset(&cfg)?;
    println!(
        "training {} for {} episodes on {} images (t_max {}, batch {})",
        cfg.task.name(),
        cfg.episodes,
        dataset.len(),
        cfg.t_max,
        cfg.batch
    );
    let outcome = train(&cfg, &dataset)?;
    if let Some(last) = outcome.history.last() {
        println!(
            "final episode: mean reward {:.4}, policy loss {:.4}, value loss {:.4}",
            last.mean_reward, last.policy_loss, last.value_loss
        );
    }
    println!("log: {}", outcome.log_path.display());
    println!("model: {}", outcome.final_path.display());
    Ok(())
}

fn run_eval(global: &Global, args: &EvalArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let task = match &global.task {
        Some(name) => Task::from_name(name)?,
        None => model.meta.task,
    };
    let seed = global.seed.unwrap_or(0);
    let dataset = match &args.data {
        Some(dir) => load_dir(dir, task.channels())?,
        None => synthetic_dataset(args.images, args.size, args.size, task.channels(), seed),
    };
    let mut opts = EvalOptions {
        t_max: args.t_max,
        tta: args.tta,
        selection: if args.sample {
            ActionSelection::Sample
        } else {
            ActionSelection::Greedy
        },
        seed,
        out_dir: Some(global.out.clone().unwrap_or_else(|| PathBuf::from("eval_out"))),
        ..EvalOptions::default()
    };
    if let Some(v) = args.sigma {
        opts.corruption.gaussian_sigma = v;
    }
    if let Some(v) = args.sp_density {
        opts.corruption.sp_density = v;
    }
    if let Some(v) = args.poisson_peak {
        opts.corruption.poisson_peak = v;
    }
    if let Some(v) = args.color_cast {
        opts.corruption.color_cast = v;
    }
    let report = evaluate(&model, &dataset, task, &opts)?;
    for s in &report.images {
        println!(
            "{}: psnr {} -> {} dB, ssim {:.4} -> {:.4}",
            s.name,
            format_db(s.psnr_in),
            format_db(s.psnr_out),
            s.ssim_in,
            s.ssim_out
        );
    }
    println!(
        "mean: psnr {} -> {} dB, ssim {:.4} -> {:.4}",
        format_db(report.mean_psnr_in),
        format_db(report.mean_psnr_out),
        report.mean_ssim_in,
        report.mean_ssim_out
    );
    let set = task.default_action_set();
    println!("actions per step:");
    for (id, spec) in set.specs().iter().enumerate() {
        let row: Vec<String> = report
            .action_counts
            .iter()
            .map(|step| step[id].to_string())
            .collect();
        println!("  {:<24} {}", spec.name(), row.join(" "));
    }
    if let Some(dir) = &opts.out_dir {
        println!("report: {}", dir.join("report.csv").display());
    }
    Ok(())
}

fn run_viz(global: &Global, args: &VizArgs) -> Result<()> {
    let model = load_model(&args.checkpoint)?;
    let task = model.meta.task;
    let seed = global.seed.unwrap_or(0);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let input = match &args.image {
        Some(path) => {
            let img = load_image(path, task.channels())?;
            if args.corrupt {
                pixelrl::env::CorruptionConfig::default().corrupt(&img, task, &mut rng)?
            } else {
                img
            }
        }
        None => {
            let clean = synthetic_dataset(1, args.size, args.size, task.channels(), seed)
                .images
                .remove(0);
            pixelrl::env::CorruptionConfig::default().corrupt(&clean, task, &mut rng)?
        }
    };
    let t_max = args.t_max.unwrap_or(model.meta.t_max);
    let out_dir = global.out.clone().unwrap_or_else(|| PathBuf::from("viz_out"));
    let out = visualize(&model, &input, t_max, seed, &out_dir)?;
    println!(
        "wrote {} states, {} action maps, and {} to {}",
        out.states.len(),
        out.actions.len(),
        out.legend.file_name().unwrap().to_string_lossy(),
        out_dir.display()
    );
    Ok(())
}

fn run_verify(global: &Global, args: &VerifyArgs) -> Result<()> {
    let seed = global.seed.unwrap_or(0);
    let all = !(args.filter || args.returns || args.grads || args.optimality);
    let mut failures = Vec::new();
    let mut ran = |name: &str, result: std::result::Result<(), String>, cases: usize| {
        match result {
            Ok(()) => println!("{name}: ok ({cases} cases)"),
            Err(msg) => {
                println!("{name}: FAIL ({msg})");
                failures.push(name.to_string());
            }
        }
    };
    if all || args.filter {
        let cases = args.cases.unwrap_or(20);
        ran("filters", oracle::verify_filters(seed, cases), cases);
    }
    if all || args.returns {
        let cases = args.cases.unwrap_or(50);
        ran("returns", oracle::verify_returns(seed, cases), cases);
    }
    if all || args.grads {
        let cases = args.cases.unwrap_or(2);
        ran("gradients", oracle::verify_gradients(seed, cases), cases);
    }
    if all || args.optimality {
        let cases = args.cases.unwrap_or(100);
        ran("optimality", oracle::verify_optimality(seed, cases), cases);
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(PixelRlError::Numeric(format!(
            "verification failed: {}",
            failures.join(", ")
        )))
    }
}
