//! `dasr`: degradation analysis, synthetic degradation, sweeps, noise
//! statistics, gradient checks and toy training from the command line.
//!
//! Exit status: 0 on success, 1 when a check or threshold fails (the report
//! is still written), 2 on usage or I/O errors.

mod config;

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dasr_core::adapter::io::WeightFile;
use dasr_core::degradations::{corpus, sweep, write_sweep_csv, Axis, DegradationRecipe};
use dasr_core::descriptor::{descriptor_with, DescriptorRecord};
use dasr_core::diffusion::{gradcheck_all, toy_corpus, train_toy, TrainConfig};
use dasr_core::sani::{sani_stats, STATS_E_LEVELS};
use dasr_core::{netpbm, Execution};

use config::Config;

const DESCENT_THRESHOLD: f64 = 0.5;

#[derive(Parser, Debug)]
#[command(name = "dasr", version, about = "Degradation descriptors, token adapter and edge-modulated diffusion noise")]
struct Cli {
    /// Base seed for every random draw (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// JSON file with lambda, epsilon_blur, sobel_threshold, D, T,
    /// beta_start, beta_end and seed.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Descriptor JSON (one line per image) for PGM/PPM files.
    Analyze {
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Apply a degradation recipe to a PGM/PPM file.
    Degrade(DegradeArgs),
    /// Descriptor CSV for the built-in corpus along one severity axis.
    Sweep {
        /// blur, noise, block, brightness or contrast.
        #[arg(long)]
        axis: Axis,
        /// Comma-separated severity levels; the axis defaults when absent.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
    },
    /// Empirical vs theoretical std of edge-modulated noise.
    SaniStats {
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Finite-difference check of every backward pass.
    Gradcheck,
    /// Train the toy denoiser and adapter; CSV of step,loss.
    TrainToy(TrainArgs),
}

#[derive(Args, Debug)]
struct DegradeArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    blur: f64,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0.0)]
    block: f64,
    #[arg(long, default_value_t = 0.0)]
    brightness: f64,
    #[arg(long, default_value_t = 1.0)]
    contrast: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Use the static token instead of the timestep-modulated one.
    #[arg(long)]
    static_token: bool,
    /// Train without the degradation token.
    #[arg(long)]
    no_token: bool,
    /// Latent channels (1 to 4).
    #[arg(long)]
    channels: Option<usize>,
    /// Write the JSON summary here (standard error otherwise).
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Save adapter and denoiser weights to this file.
    #[arg(long)]
    weights: Option<PathBuf>,
}

enum Failure {
    /// Bad input, unreadable or unwritable file.
    Usage(String),
    /// The command ran and its report was written, but a check failed.
    Check(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| Failure::Usage(format!("stdout: {e}"))),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path).map_err(Failure::Usage)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let out = cli.out.as_deref();

    match cli.command {
        Command::Analyze { images } => {
            let params = cfg.descriptor_params();
            let mut text = String::new();
            for path in &images {
                let img = netpbm::read(path)?;
                let d = descriptor_with(&img, &params)?;
                let record = DescriptorRecord::new(path.display().to_string(), &d, &params);
                writeln!(text, "{}", record.to_json()).expect("writing to a String");
            }
            write_output(out, text.as_bytes())
        }
        Command::Degrade(a) => {
            let img = netpbm::read(&a.input)?;
            let recipe = DegradationRecipe {
                blur_sigma: a.blur,
                noise_sigma: a.noise,
                block_strength: a.block,
                brightness_shift: a.brightness,
                contrast_scale: a.contrast,
                seed: cfg.seed,
            };
            let degraded = recipe.apply(&img)?;
            write_output(out, &netpbm::encode(&degraded))
        }
        Command::Sweep { axis, levels } => {
            let levels = levels.unwrap_or_else(|| axis.default_levels());
            let rows = sweep(&corpus(), axis, &levels, cfg.seed, exec)?;
            let mut buf = Vec::new();
            write_sweep_csv(&rows, &mut buf)?;
            write_output(out, &buf)
        }
        Command::SaniStats { lambda, samples } => {
            let lambda = lambda.unwrap_or(cfg.lambda);
            let stats = sani_stats(lambda, &STATS_E_LEVELS, samples, cfg.seed, exec)?;
            let json = serde_json::to_string_pretty(&stats)? + "\n";
            write_output(out, json.as_bytes())
        }
        Command::Gradcheck => {
            let report = gradcheck_all(cfg.seed, exec);
            let json = serde_json::to_string_pretty(&report)? + "\n";
            write_output(out, json.as_bytes())?;
            if report.passed {
                Ok(())
            } else {
                Err(Failure::Check(format!(
                    "gradient check failed: max relative error {:.3e}",
                    report.max_rel_err()
                )))
            }
        }
        Command::TrainToy(a) => train(a, &cfg, out),
    }
}

fn train(a: TrainArgs, cfg: &Config, out: Option<&Path>) -> Result<(), Failure> {
    let defaults = TrainConfig::default();
    let tc = TrainConfig {
        steps: a.steps.unwrap_or(defaults.steps),
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        lambda: a.lambda.unwrap_or(cfg.lambda),
        seed: cfg.seed,
        use_token: !a.no_token,
        dynamic_token: !a.static_token,
        token_dim: cfg.token_dim,
        latent_channels: a.channels.unwrap_or(defaults.latent_channels),
        schedule_steps: cfg.steps,
        beta_start: cfg.beta_start,
        beta_end: cfg.beta_end,
        ..defaults
    };
    let pairs = toy_corpus(tc.latent_channels, tc.latent_side, tc.lr_side, tc.seed)?;
    let report = train_toy(&pairs, &tc)?;

    let mut csv = String::from("step,loss\n");
    for (i, l) in report.losses.iter().enumerate() {
        writeln!(csv, "{},{l}", i + 1).expect("writing to a String");
    }
    write_output(out, csv.as_bytes())?;

    let summary = serde_json::to_string_pretty(&report.summary)? + "\n";
    match &a.summary {
        Some(path) => std::fs::write(path, &summary).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
        None => eprint!("{summary}"),
    }
    if let Some(path) = &a.weights {
        let file = WeightFile {
            token_dim: tc.token_dim as u32,
            adapter: report.adapter.as_ref().map(|w| w.to_arrays()).unwrap_or_default(),
            toy: Some(report.denoiser.to_arrays()),
        };
        file.save(path)?;
    }
    if report.summary.ratio <= DESCENT_THRESHOLD {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "loss ratio {:.4} above {DESCENT_THRESHOLD}",
            report.summary.ratio
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
