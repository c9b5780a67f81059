//! Command-line surface for the forecasting engine.
//!
//! Subcommands: `generate` (synthetic series → CSV), `train` (config →
//! per-seed artifacts + metrics.json), `eval` (checkpoint + CSV →
//! metrics), `ablate` (config + tag list → comparison table), and
//! `gradcheck` (finite-difference verification, exit 0/1).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pamnet::data::{make_windows, split_chronological, standardize, synth_generate, SeriesFrame};
use pamnet::error::{PamError, Result};
use pamnet::harness::{
    ablation_tags, evaluate, load_checkpoint, parse_config_file, run_experiment, DataSource,
    ExperimentReport,
};
use pamnet::model::ModelConfig;
use pamnet::train::{grad_check, LossConfig, LossMode};

#[derive(Parser)]
#[command(name = "pamnet", version, about = "Cycle-aware phase-amplitude forecasting engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the config's synthetic series as a CSV file.
    Generate {
        /// Experiment config declaring a synthetic source (synth.* keys).
        #[arg(long)]
        config: PathBuf,
        /// Destination CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the configured data: per-seed checkpoints, prediction
    /// and training-report CSVs, and a metrics.json summary.
    Train {
        /// Experiment config file (flat key=value lines).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a series CSV and print metrics.
    ///
    /// The checkpoint's embedded model settings decide lookback and
    /// horizon. With --config, the file's split/stride/target settings
    /// reproduce the training-time test protocol (train-split
    /// standardization, test-range windows); without it, the whole
    /// file is standardized against itself and every complete window
    /// is scored.
    Eval {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Series CSV to score.
        #[arg(long)]
        data: PathBuf,
        /// Optional experiment config supplying split, stride,
        /// target_channel, and unit settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run several ablation tags over the same config and write a
    /// comparison table (ablation_summary.csv) plus per-tag artifacts
    /// in tag-named subdirectories.
    Ablate {
        /// Experiment config file; its own ablation key is ignored.
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated registry tags. Defaults to the full registry.
        #[arg(long, value_delimiter = ',')]
        tags: Vec<String>,
    },
    /// Verify analytic gradients against finite differences on a tiny
    /// fixed model (L=8, H=4, N=3, d=6, c=12) under all three loss
    /// modes, in 64-bit. Exits 0 when every parameter group passes.
    Gradcheck {
        /// Maximum tolerated relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Seed for the probe data and parameter draw.
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate { config, out } => generate(&config, &out),
        Command::Train { config, out_dir } => train(&config, out_dir),
        Command::Eval {
            checkpoint,
            data,
            config,
        } => eval(&checkpoint, &data, config.as_deref()),
        Command::Ablate { config, tags } => ablate(&config, &tags),
        Command::Gradcheck { tolerance, seed } => gradcheck(tolerance, seed),
    }
}

fn generate(config: &Path, out: &Path) -> Result<ExitCode> {
    let cfg = parse_config_file(config)?;
    let DataSource::Synth(spec) = &cfg.source else {
        return Err(PamError::Config(
            "generate needs a synthetic source; the config names a CSV".into(),
        ));
    };
    let frame = synth_generate(spec)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    frame.write_csv(out)?;
    println!(
        "wrote {} rows x {} channels to {}",
        frame.rows(),
        frame.channels(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn train(config: &Path, out_dir: Option<PathBuf>) -> Result<ExitCode> {
    let mut cfg = parse_config_file(config)?;
    if let Some(dir) = out_dir {
        cfg.out_dir = dir;
    }
    let report = run_experiment(&cfg)?;
    print_report(&report);
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(exit_for(&report))
}

fn print_report(report: &ExperimentReport) {
    for row in &report.per_seed {
        let target = match (row.target_mse, row.target_mae) {
            (Some(m), Some(a)) => format!("  target mse {m:.6} mae {a:.6}"),
            _ => String::new(),
        };
        println!(
            "seed {}: mse {:.6} mae {:.6} (best epoch {}, {} run{}){}",
            row.seed,
            row.mse,
            row.mae,
            row.best_epoch,
            row.epochs_run,
            if row.stopped_early { ", stopped early" } else { "" },
            target
        );
    }
    if let Some(agg) = &report.aggregate {
        let spread = |s: Option<f64>| s.map(|v| format!(" +/- {v:.6}")).unwrap_or_default();
        println!(
            "aggregate: mse {:.6}{} mae {:.6}{}",
            agg.mse_mean,
            spread(agg.mse_std),
            agg.mae_mean,
            spread(agg.mae_std)
        );
    }
    for failure in &report.failures {
        eprintln!("seed {} failed: {}", failure.seed, failure.error);
    }
}

fn exit_for(report: &ExperimentReport) -> ExitCode {
    if report.all_completed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn eval(checkpoint: &Path, data: &Path, config: Option<&Path>) -> Result<ExitCode> {
    let loaded = load_checkpoint(checkpoint)?;
    let frame = SeriesFrame::load_csv(data)?;
    let model: &ModelConfig = &loaded.config;
    if frame.channels() != model.channels {
        return Err(PamError::Config(format!(
            "checkpoint expects {} channels but {} has {}",
            model.channels,
            data.display(),
            frame.channels()
        )));
    }

    let cfg = config.map(parse_config_file).transpose()?;
    let (score_range, stats_range, stride) = match &cfg {
        Some(c) => {
            let ranges =
                split_chronological(frame.rows(), &c.split, model.lookback, model.horizon)?;
            (ranges.test, ranges.train, c.stride)
        }
        None => (0..frame.rows(), 0..frame.rows(), 1),
    };
    let (scaled, stats) = standardize(&frame, stats_range)?;
    let windows = make_windows(&scaled, score_range, model.lookback, model.horizon, stride)?;

    let target_index = match cfg.as_ref().and_then(|c| c.target_channel.as_deref()) {
        Some(name) => Some(frame.channel_index(name).ok_or_else(|| {
            PamError::Config(format!(
                "target channel `{name}` not found; channels: {}",
                frame.channel_names().join(", ")
            ))
        })?),
        None => None,
    };
    let raw_units = cfg.as_ref().is_some_and(|c| c.raw_units);

    let result = evaluate(
        &loaded.params,
        model,
        &windows,
        target_index,
        raw_units.then_some(&stats),
    )?;
    println!(
        "{} windows: mse {:.6} mae {:.6}",
        windows.len(),
        result.mse,
        result.mae
    );
    if let (Some(m), Some(a)) = (result.target_mse, result.target_mae) {
        println!("target channel: mse {m:.6} mae {a:.6}");
    }
    Ok(ExitCode::SUCCESS)
}

fn ablate(config: &Path, tags: &[String]) -> Result<ExitCode> {
    let base = parse_config_file(config)?;
    let tags: Vec<&str> = if tags.is_empty() {
        ablation_tags().to_vec()
    } else {
        tags.iter().map(String::as_str).collect()
    };

    let mut table = String::from("tag,mse_mean,mse_std,mae_mean,mae_std,completed,failed\n");
    let mut all_ok = true;
    for tag in &tags {
        let mut cfg = base.clone();
        cfg.ablation = (*tag).to_string();
        cfg.out_dir = base.out_dir.join(tag);
        cfg.validate()?;
        let report = run_experiment(&cfg)?;
        println!("[{tag}]");
        print_report(&report);
        all_ok &= report.all_completed();
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let (mse_mean, mse_std, mae_mean, mae_std) = match &report.aggregate {
            Some(a) => (a.mse_mean.to_string(), fmt(a.mse_std), a.mae_mean.to_string(), fmt(a.mae_std)),
            None => Default::default(),
        };
        table.push_str(&format!(
            "{tag},{mse_mean},{mse_std},{mae_mean},{mae_std},{},{}\n",
            report.per_seed.len(),
            report.failures.len()
        ));
    }
    std::fs::create_dir_all(&base.out_dir)?;
    let summary = base.out_dir.join("ablation_summary.csv");
    std::fs::write(&summary, table)?;
    println!("summary table: {}", summary.display());
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn gradcheck(tolerance: f64, seed: u64) -> Result<ExitCode> {
    let config = ModelConfig {
        embed_dim: 6,
        dropout_rate: 0.0,
        ..ModelConfig::for_dims(8, 4, 3, 12)
    };
    let mut ok = true;
    for mode in [LossMode::Hybrid, LossMode::Mse, LossMode::Mae] {
        let loss = LossConfig {
            mode,
            ..LossConfig::default()
        };
        let report = grad_check(&config, &loss, seed, tolerance)?;
        let (name, worst) = report
            .worst()
            .map(|e| (e.name.as_str(), e.max_rel_error))
            .unwrap_or(("none", 0.0));
        println!(
            "{mode}: {} parameter groups, worst relative error {worst:.3e} ({name}) -> {}",
            report.entries.len(),
            if report.passed() { "ok" } else { "FAIL" }
        );
        ok &= report.passed();
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
