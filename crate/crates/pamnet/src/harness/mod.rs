//! Experiment orchestration: evaluation metrics, the ablation
//! registry, checkpoints, config files, multi-seed runs, and the
//! dataset cycle-length table.

mod ablation;
mod checkpoint;
mod config_file;
mod cycles;
mod experiment;
mod metrics;
mod parallel;

pub use ablation::{ablation_tags, apply_ablation};
pub use checkpoint::{load_checkpoint, save_checkpoint, LoadedCheckpoint, CHECKPOINT_VERSION};
pub use config_file::{parse_config_file, parse_config_text, DataSource, ExperimentConfig};
pub use cycles::default_cycle_length;
pub use experiment::{run_experiment, Aggregate, ExperimentReport, SeedFailure, SeedRow};
pub use metrics::{evaluate, mae, mse, EvalResult, PredictionRow};
pub use parallel::{run_parallel, thread_cap};
