use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use drnet::bench::{compare_decoders, BenchOptions};
use drnet::checkpoint;
use drnet::data::netpbm::{load_ppm, save_pgm16};
use drnet::data::{generate_dataset, Dataset};
use drnet::gradsuite::{run_suite, TOLERANCE};
use drnet::train::{evaluate, Trainer};
use drnet::RunConfig;

#[derive(Parser)]
#[command(name = "drnet", version, about = "Double refinement depth network: data, training, evaluation and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic RGB-D dataset with a manifest.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        /// HxW, both divisible by 32
        #[arg(long, value_parser = parse_size)]
        size: (usize, usize),
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Train a model and write a checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print depth metrics of a checkpoint on a dataset as JSON.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
    },
    /// Predict a depth map (16-bit PGM, millimetres) for one PPM image.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compare the DRNet and full-resolution decoders.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "64,128,224")]
        resolutions: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1,4,16")]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
        #[arg(long, default_value_t = 20)]
        iters: usize,
        #[arg(long, default_value_t = 1 << 30)]
        max_activation_bytes: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for bench_report.json and the effective config
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run the finite-difference gradient suite.
    Gradcheck,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
        return Err(format!("{h}x{w} is not divisible by 32"));
    }
    Ok((h, w))
}

fn threads() -> Result<usize, String> {
    match std::env::var("DRNET_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("DRNET_THREADS must be a positive integer, got {v:?}")),
        },
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        Some(p) => Ok(RunConfig::load(p)?),
        None => Ok(RunConfig::default()),
    }
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn run(command: Command, threads: usize) -> anyhow::Result<bool> {
    match command {
        Command::Gen { out, count, size, seed, split } => {
            let entries = generate_dataset(&out, count, size, seed, &split, threads)?;
            eprintln!("wrote {} scenes to {}", entries.len(), out.display());
        }
        Command::Train { config, data, out } => {
            let config = load_config(config.as_deref())?;
            let dataset = Dataset::load(&data)?;
            if dataset.is_empty() {
                bail!("{}: dataset is empty", data.display());
            }
            std::fs::create_dir_all(parent_dir(&out))?;
            let mut trainer = Trainer::new(&config)?;
            let mut log = Vec::new();
            for _ in 0..config.train.epochs {
                let r = trainer.train_epoch(&dataset)?;
                eprintln!(
                    "epoch {:>3}  loss {:>10.5}  depth {:>9.5}  grad {:>9.5}  normal {:>8.5}",
                    r.epoch, r.loss, r.depth, r.grad, r.normal
                );
                log.push(r);
            }
            checkpoint::save(&out, &trainer.model, &trainer.optim, &config)?;
            let mut log_path = out.clone().into_os_string();
            log_path.push(".log.json");
            std::fs::write(&log_path, serde_json::to_string_pretty(&log)?)?;
            eprintln!("saved {}", out.display());
        }
        Command::Eval { ckpt, data, batch_size } => {
            let loaded = checkpoint::load(&ckpt, None)?;
            let dataset = Dataset::load(&data)?;
            let metrics = evaluate(&loaded.model, &dataset, batch_size)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
        }
        Command::Predict { ckpt, input, output } => {
            let loaded = checkpoint::load(&ckpt, None)?;
            let img = load_ppm(&input).with_context(|| input.display().to_string())?;
            let depth = loaded.model.predict(&img)?;
            save_pgm16(&output, &depth).with_context(|| output.display().to_string())?;
        }
        Command::Bench { config, resolutions, batch_sizes, warmup, iters, max_activation_bytes, seed, out } => {
            let config = load_config(config.as_deref())?;
            for &r in &resolutions {
                drnet::backbone::check_divisible(r, r)?;
            }
            let opts = BenchOptions { warmup, iters, batch_sizes, max_activation_bytes, seed };
            let report = compare_decoders(&config, &resolutions, &opts)?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("bench_report.json"), report.to_json())?;
            std::fs::write(out.join("config.json"), config.to_json())?;
            print!("{}", report.table());
        }
        Command::Gradcheck => {
            let report = run_suite()?;
            for c in &report.checks {
                println!("{:<4} {:<48} {:.3e}", if c.passed { "ok" } else { "FAIL" }, c.name, c.max_rel_error);
            }
            println!(
                "{} checks, {} failed (tolerance {TOLERANCE:e}) in {:.1}s",
                report.checks.len(),
                report.failures().count(),
                report.elapsed_secs
            );
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match threads() {
        Ok(n) => n,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command, threads) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
