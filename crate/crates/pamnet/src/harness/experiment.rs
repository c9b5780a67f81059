//! Multi-seed experiment runs with on-disk artifacts.
//!
//! One invocation builds the data once, then trains and evaluates the
//! configured model once per seed — concurrently up to the thread cap.
//! Every file an individual run writes carries its seed in the name;
//! the shared `metrics.json` summary is written once, after all runs
//! join. Failures abort only their own seed and are recorded in the
//! summary.
//!
//! Runs compute at 32-bit precision, matching the checkpoint payload
//! format, so a saved checkpoint replays its run's predictions
//! bit-identically.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    corrupt, make_windows, split_chronological, standardize, synth_generate, NormStats,
    SeriesFrame, Window,
};
use crate::error::{PamError, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::train::{fit, LossConfig, TrainReport};

use super::ablation::apply_ablation;
use super::checkpoint::save_checkpoint;
use super::config_file::{DataSource, ExperimentConfig};
use super::metrics::{evaluate, EvalResult, PredictionRow};
use super::parallel::{run_parallel, thread_cap};

/// Stream-separation constant for the corruption generator, so input
/// masking never shares draws with shuffling or dropout.
const CORRUPT_SALT: u64 = 0xc0ff_ee00_dead_beef;

/// One completed seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target_mae: Option<f64>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    pub best_val_loss: f64,
}

/// One failed seed and why.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: String,
}

/// Mean and population standard deviation across completed seeds; the
/// std is reported only when at least two seeds completed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mse_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse_std: Option<f64>,
    pub mae_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mae_std: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target_mse_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target_mae_mean: Option<f64>,
}

/// The summary document: per-seed rows in input order, aggregate
/// statistics, and recorded failures. Serialized as `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub ablation: String,
    pub loss_mode: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub target_channel: Option<String>,
    pub per_seed: Vec<SeedRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub aggregate: Option<Aggregate>,
    pub failures: Vec<SeedFailure>,
}

impl ExperimentReport {
    /// True when every requested seed completed — the exit-0 condition.
    pub fn all_completed(&self) -> bool {
        self.failures.is_empty()
    }

    /// Median test MSE across completed seeds.
    pub fn median_mse(&self) -> Option<f64> {
        let mut values: Vec<f64> = self.per_seed.iter().map(|r| r.mse).collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let mid = values.len() / 2;
        Some(if values.len() % 2 == 1 {
            values[mid]
        } else {
            0.5 * (values[mid - 1] + values[mid])
        })
    }
}

/// Runs the full experiment: build data, apply the ablation tag, then
/// train and evaluate once per seed, writing artifacts into the
/// config's output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let frame = match &cfg.source {
        DataSource::Csv(path) => SeriesFrame::load_csv(path)?,
        DataSource::Synth(spec) => synth_generate(spec)?,
    };
    let cycle_len = cfg.resolve_cycle()?;
    if cycle_len > frame.rows() {
        return Err(PamError::Config(format!(
            "cycle length {cycle_len} exceeds the series length {}",
            frame.rows()
        )));
    }
    let target_index = match &cfg.target_channel {
        Some(name) => Some(frame.channel_index(name).ok_or_else(|| {
            PamError::Config(format!(
                "target channel `{name}` not found; channels: {}",
                frame.channel_names().join(", ")
            ))
        })?),
        None => None,
    };

    let (model_base, loss_cfg) =
        apply_ablation(&cfg.model_config(frame.channels())?, &cfg.loss, &cfg.ablation)?;

    let ranges = split_chronological(frame.rows(), &cfg.split, cfg.lookback, cfg.horizon)?;
    let (scaled, stats) = standardize(&frame, ranges.train.clone())?;
    let train = make_windows(&scaled, ranges.train, cfg.lookback, cfg.horizon, cfg.stride)?;
    let val = make_windows(&scaled, ranges.val, cfg.lookback, cfg.horizon, cfg.stride)?;
    let test = make_windows(&scaled, ranges.test, cfg.lookback, cfg.horizon, cfg.stride)?;

    std::fs::create_dir_all(&cfg.out_dir)?;

    let outcomes = run_parallel(cfg.seeds.len(), thread_cap(), |slot| {
        let seed = cfg.seeds[slot];
        run_seed(
            cfg, &model_base, &loss_cfg, &train, &val, &test, &stats, target_index, seed, slot,
        )
        .map_err(|e| SeedFailure {
            seed,
            error: e.to_string(),
        })
    });

    let mut per_seed = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(row) => per_seed.push(row),
            Err(failure) => failures.push(failure),
        }
    }

    let report = ExperimentReport {
        ablation: cfg.ablation.clone(),
        loss_mode: loss_cfg.mode.to_string(),
        target_channel: cfg.target_channel.clone(),
        aggregate: aggregate(&per_seed),
        per_seed,
        failures,
    };

    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| PamError::Config(format!("cannot serialize metrics: {e}")))?;
    write_atomic(
        &cfg.out_dir.join("metrics.json"),
        format!("{json}\n").as_bytes(),
        usize::MAX,
    )?;
    Ok(report)
}

/// Trains and evaluates one seed, writing its artifact files.
#[allow(clippy::too_many_arguments)]
fn run_seed(
    cfg: &ExperimentConfig,
    model_cfg: &ModelConfig,
    loss_cfg: &LossConfig,
    train_windows: &[Window],
    val_windows: &[Window],
    test_windows: &[Window],
    stats: &NormStats,
    target_index: Option<usize>,
    seed: u64,
    slot: usize,
) -> std::result::Result<SeedRow, PamError> {
    // Corruption applies to training-time inputs (train and validation
    // lookbacks); the test set stays clean.
    let mut corrupt_rng = ChaCha8Rng::seed_from_u64(seed ^ CORRUPT_SALT);
    let train_c = corrupt(train_windows, &cfg.corruption, &mut corrupt_rng)?;
    let val_c = corrupt(val_windows, &cfg.corruption, &mut corrupt_rng)?;

    let mut params = ModelParams::<f32>::init(model_cfg, seed)?;
    let report = fit(
        &mut params,
        model_cfg,
        &train_c,
        &val_c,
        loss_cfg,
        &cfg.optim,
        seed,
    )?;
    let eval = evaluate(
        &params,
        model_cfg,
        test_windows,
        target_index,
        cfg.raw_units.then_some(stats),
    )?;

    write_predictions(
        &cfg.out_dir.join(format!("predictions_{seed}.csv")),
        &eval.rows,
        slot,
    )?;
    write_train_report(
        &cfg.out_dir.join(format!("train_report_{seed}.csv")),
        &report,
        slot,
    )?;
    save_checkpoint(
        &cfg.out_dir.join(format!("checkpoint_{seed}.bin")),
        &params,
        model_cfg,
        seed,
        report.best_epoch as u32,
    )?;
    write_carriers(cfg, &params, seed, slot)?;

    Ok(seed_row(seed, &report, &eval))
}

fn seed_row(seed: u64, report: &TrainReport, eval: &EvalResult) -> SeedRow {
    SeedRow {
        seed,
        mse: eval.mse,
        mae: eval.mae,
        target_mse: eval.target_mse,
        target_mae: eval.target_mae,
        best_epoch: report.best_epoch,
        epochs_run: report.val_losses.len(),
        stopped_early: report.stopped_early,
        best_val_loss: report.val_losses[report.best_epoch],
    }
}

fn aggregate(rows: &[SeedRow]) -> Option<Aggregate> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&SeedRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let std = |f: fn(&SeedRow) -> f64, mu: f64| {
        if rows.len() < 2 {
            None
        } else {
            let var = rows.iter().map(|r| (f(r) - mu) * (f(r) - mu)).sum::<f64>() / n;
            Some(var.sqrt())
        }
    };
    let mse_mean = mean(|r| r.mse);
    let mae_mean = mean(|r| r.mae);
    let target = rows.iter().all(|r| r.target_mse.is_some());
    Some(Aggregate {
        mse_std: std(|r| r.mse, mse_mean),
        mae_std: std(|r| r.mae, mae_mean),
        mse_mean,
        mae_mean,
        target_mse_mean: target
            .then(|| rows.iter().filter_map(|r| r.target_mse).sum::<f64>() / n),
        target_mae_mean: target
            .then(|| rows.iter().filter_map(|r| r.target_mae).sum::<f64>() / n),
    })
}

/// Writes via a uniquely named temp file plus rename, so a path is
/// always either absent or complete even when duplicate seeds race.
fn write_atomic(path: &Path, contents: &[u8], slot: usize) -> Result<()> {
    let mut tmp = path.to_path_buf();
    tmp.set_extension(format!("tmp{slot}"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_predictions(path: &Path, rows: &[PredictionRow], slot: usize) -> Result<()> {
    let mut out = String::from("window,step,channel,y,yhat\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.window, r.step, r.channel, r.y, r.yhat
        ));
    }
    write_atomic(path, out.as_bytes(), slot)
}

fn write_train_report(path: &Path, report: &TrainReport, slot: usize) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss,is_best,wall_seconds\n");
    for (epoch, (t, v)) in report
        .train_losses
        .iter()
        .zip(&report.val_losses)
        .enumerate()
    {
        out.push_str(&format!(
            "{epoch},{t},{v},{},{}\n",
            u8::from(epoch == report.best_epoch),
            report.wall_seconds
        ));
    }
    write_atomic(path, out.as_bytes(), slot)
}

fn write_carriers(
    cfg: &ExperimentConfig,
    params: &ModelParams<f32>,
    seed: u64,
    slot: usize,
) -> Result<()> {
    for (param_name, file_stem, column_prefix) in [
        ("carrier.phase", "carriers_phase", "d"),
        ("carrier.amplitude", "carriers_amplitude", "a"),
    ] {
        let Some(param) = params.by_name(param_name) else {
            continue;
        };
        let table = &param.value;
        let mut out = String::new();
        let names: Vec<String> = (0..table.cols())
            .map(|j| format!("{column_prefix}{j}"))
            .collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for i in 0..table.rows() {
            for j in 0..table.cols() {
                if j > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", table.at(i, j)));
            }
            out.push('\n');
        }
        write_atomic(
            &cfg.out_dir.join(format!("{file_stem}_{seed}.csv")),
            out.as_bytes(),
            slot,
        )?;
    }
    Ok(())
}
