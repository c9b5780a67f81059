//! Flat key=value experiment configuration.
//!
//! One setting per line, `#` comments and blank lines ignored, keys
//! namespaced by component (`model.d=64`, `loss.alpha=0.25`,
//! `data.split=0.7,0.1,0.2`, `seeds=1,2,3`). Later assignments to the
//! same key win. Unknown keys are rejected so typos fail loudly.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{CorruptionSpec, SplitSpec, SynthSpec};
use crate::error::{PamError, Result};
use crate::model::ModelConfig;
use crate::tape::ActKind;
use crate::train::{LossConfig, OptimConfig};

use super::ablation::apply_ablation;
use super::cycles::default_cycle_length;

/// Where the series comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synth(SynthSpec),
}

/// A full experiment description, as read from a config file.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// Benchmark tag used to look up a default cycle length when
    /// `model.c` is not given explicitly.
    pub dataset_tag: Option<String>,
    pub split: SplitSpec,
    /// Window stride applied to every split.
    pub stride: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub embed_dim: usize,
    /// Explicit cycle length; falls back to the dataset tag's table
    /// entry, then to a synthetic source's own cycle length.
    pub cycle_len: Option<usize>,
    pub dropout_rate: f64,
    pub activation: ActKind,
    pub use_phase: bool,
    pub use_amplitude: bool,
    pub sinusoidal_carriers: bool,
    pub use_modulator: bool,
    pub share_modulator_weights: bool,
    pub dropout_before_product: bool,
    pub instance_norm: bool,
    pub norm_eps: f64,
    pub loss: LossConfig,
    pub optim: OptimConfig,
    pub corruption: CorruptionSpec,
    pub seeds: Vec<u64>,
    pub ablation: String,
    pub target_channel: Option<String>,
    pub out_dir: PathBuf,
    /// Report metrics in raw units (inverse of the train-stat
    /// standardization) instead of standardized units.
    pub raw_units: bool,
}

impl ExperimentConfig {
    /// A config for a given source with every other knob at its
    /// default.
    pub fn with_source(source: DataSource) -> Self {
        Self {
            source,
            dataset_tag: None,
            split: SplitSpec::default(),
            stride: 1,
            lookback: 96,
            horizon: 24,
            embed_dim: 512,
            cycle_len: None,
            dropout_rate: 0.5,
            activation: ActKind::Silu,
            use_phase: true,
            use_amplitude: true,
            sinusoidal_carriers: false,
            use_modulator: true,
            share_modulator_weights: false,
            dropout_before_product: false,
            instance_norm: true,
            norm_eps: 1e-5,
            loss: LossConfig::default(),
            optim: OptimConfig::default(),
            corruption: CorruptionSpec::default(),
            seeds: vec![1],
            ablation: "full".to_string(),
            target_channel: None,
            out_dir: PathBuf::from("runs"),
            raw_units: false,
        }
    }

    /// Checks everything that can be checked without the data.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(PamError::Config("at least one seed is required".into()));
        }
        // Registry membership; the returned configs are discarded.
        let probe = ModelConfig::for_dims(8, 4, 2, 8);
        apply_ablation(&probe, &self.loss, &self.ablation)?;
        self.loss.validate()?;
        self.optim.validate()?;
        self.corruption.validate()?;
        if let DataSource::Synth(spec) = &self.source {
            spec.validate()?;
        }
        if self.stride == 0 {
            return Err(PamError::Config("stride must be at least 1".into()));
        }
        self.resolve_cycle()?;
        Ok(())
    }

    /// The cycle length this experiment runs with: an explicit
    /// `model.c` wins, then the dataset tag's table entry, then a
    /// synthetic source's own cycle length.
    pub fn resolve_cycle(&self) -> Result<usize> {
        if let Some(c) = self.cycle_len {
            return Ok(c);
        }
        if let Some(tag) = &self.dataset_tag {
            return default_cycle_length(tag);
        }
        if let DataSource::Synth(spec) = &self.source {
            return Ok(spec.cycle_len);
        }
        Err(PamError::Config(
            "no cycle length: set model.c or dataset=<tag>".into(),
        ))
    }

    /// Materializes the model config once the channel count is known.
    pub fn model_config(&self, channels: usize) -> Result<ModelConfig> {
        let cycle_len = self.resolve_cycle()?;
        let config = ModelConfig {
            lookback: self.lookback,
            horizon: self.horizon,
            channels,
            embed_dim: self.embed_dim,
            cycle_len,
            dropout_rate: self.dropout_rate,
            activation: self.activation,
            use_phase: self.use_phase,
            use_amplitude: self.use_amplitude,
            sinusoidal_carriers: self.sinusoidal_carriers,
            use_modulator: self.use_modulator,
            share_modulator_weights: self.share_modulator_weights,
            dropout_before_product: self.dropout_before_product,
            instance_norm: self.instance_norm,
            norm_eps: self.norm_eps,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Reads and parses a config file.
pub fn parse_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_text(&text)
}

fn parsed<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| {
        PamError::Config(format!("invalid value `{value}` for key `{key}`"))
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(PamError::Config(format!(
            "invalid value `{other}` for key `{key}` (expected true or false)"
        ))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parsed(key, v.trim())).collect()
}

/// Parses config text into an [`ExperimentConfig`] and validates it.
pub fn parse_config_text(text: &str) -> Result<ExperimentConfig> {
    // Source-selection keys are gathered first so the rest of the file
    // can be order-independent.
    let mut csv_path: Option<PathBuf> = None;
    let mut synth = SynthSpec::new(6000, 4, 24, 0);
    let mut synth_requested = false;
    let mut cfg = ExperimentConfig::with_source(DataSource::Synth(synth.clone()));

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            PamError::Config(format!(
                "line {}: expected key=value, got `{line}`",
                lineno + 1
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "data.csv" => csv_path = Some(PathBuf::from(value)),
            "dataset" => cfg.dataset_tag = Some(value.to_string()),
            "data.split" => {
                let f: Vec<f64> = parse_list(key, value)?;
                if f.len() != 3 {
                    return Err(PamError::Config(format!(
                        "key `{key}` needs three comma-separated fractions"
                    )));
                }
                cfg.split = SplitSpec::Fractions {
                    train: f[0],
                    val: f[1],
                    test: f[2],
                };
            }
            "data.split_counts" => {
                let c: Vec<usize> = parse_list(key, value)?;
                if c.len() != 3 {
                    return Err(PamError::Config(format!(
                        "key `{key}` needs three comma-separated counts"
                    )));
                }
                cfg.split = SplitSpec::Counts {
                    train: c[0],
                    val: c[1],
                    test: c[2],
                };
            }
            "data.stride" => cfg.stride = parsed(key, value)?,

            "synth.rows" => {
                synth.rows = parsed(key, value)?;
                synth_requested = true;
            }
            "synth.channels" => {
                let channels: usize = parsed(key, value)?;
                // Re-stagger the default per-channel phases.
                synth = SynthSpec {
                    rows: synth.rows,
                    mean_amp: synth.mean_amp,
                    drift_cycles: synth.drift_cycles,
                    drift_depth: synth.drift_depth,
                    noise_std: synth.noise_std,
                    seed: synth.seed,
                    ..SynthSpec::new(synth.rows, channels, synth.cycle_len, synth.seed)
                };
                synth_requested = true;
            }
            "synth.cycle_len" => {
                synth.cycle_len = parsed(key, value)?;
                synth_requested = true;
            }
            "synth.mean_amp" => {
                synth.mean_amp = parsed(key, value)?;
                synth_requested = true;
            }
            "synth.drift_cycles" => {
                synth.drift_cycles = parsed(key, value)?;
                synth_requested = true;
            }
            "synth.drift_depth" => {
                synth.drift_depth = parsed(key, value)?;
                synth_requested = true;
            }
            "synth.noise_std" => {
                synth.noise_std = parsed(key, value)?;
                synth_requested = true;
            }
            "synth.seed" => {
                synth.seed = parsed(key, value)?;
                synth_requested = true;
            }

            "model.lookback" => cfg.lookback = parsed(key, value)?,
            "model.horizon" => cfg.horizon = parsed(key, value)?,
            "model.d" => cfg.embed_dim = parsed(key, value)?,
            "model.c" => cfg.cycle_len = Some(parsed(key, value)?),
            "model.dropout" => cfg.dropout_rate = parsed(key, value)?,
            "model.activation" => cfg.activation = value.parse::<ActKind>()?,
            "model.use_phase" => cfg.use_phase = parse_bool(key, value)?,
            "model.use_amplitude" => cfg.use_amplitude = parse_bool(key, value)?,
            "model.sinusoidal" => cfg.sinusoidal_carriers = parse_bool(key, value)?,
            "model.use_modulator" => cfg.use_modulator = parse_bool(key, value)?,
            "model.share_weights" => cfg.share_modulator_weights = parse_bool(key, value)?,
            "model.dropout_before_product" => {
                cfg.dropout_before_product = parse_bool(key, value)?
            }
            "model.instance_norm" => cfg.instance_norm = parse_bool(key, value)?,
            "model.norm_eps" => cfg.norm_eps = parsed(key, value)?,

            "loss.alpha" => cfg.loss.alpha = parsed(key, value)?,
            "loss.mode" => cfg.loss.mode = value.parse()?,

            "optim.lr" => cfg.optim.learning_rate = parsed(key, value)?,
            "optim.beta1" => cfg.optim.beta1 = parsed(key, value)?,
            "optim.beta2" => cfg.optim.beta2 = parsed(key, value)?,
            "optim.eps" => cfg.optim.eps_adam = parsed(key, value)?,
            "optim.max_epochs" => cfg.optim.max_epochs = parsed(key, value)?,
            "optim.patience" => cfg.optim.patience = parsed(key, value)?,
            "optim.batch_size" => cfg.optim.batch_size = parsed(key, value)?,

            "corrupt.p" => cfg.corruption.probability = parsed(key, value)?,
            "corrupt.mode" => cfg.corruption.mode = value.parse()?,
            "corrupt.per_timestep" => cfg.corruption.per_timestep = parse_bool(key, value)?,

            "seeds" => cfg.seeds = parse_list(key, value)?,
            "ablation" => cfg.ablation = value.to_string(),
            "target_channel" => cfg.target_channel = Some(value.to_string()),
            "out_dir" => cfg.out_dir = PathBuf::from(value),
            "eval.raw_units" => cfg.raw_units = parse_bool(key, value)?,

            unknown => {
                return Err(PamError::Config(format!(
                    "line {}: unknown config key `{unknown}`",
                    lineno + 1
                )))
            }
        }
    }

    cfg.source = match (csv_path, synth_requested) {
        (Some(_), true) => {
            return Err(PamError::Config(
                "config sets both data.csv and synth.* keys; pick one source".into(),
            ))
        }
        (Some(path), false) => DataSource::Csv(path),
        (None, _) => DataSource::Synth(synth),
    };

    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::LossMode;

    #[test]
    fn a_full_config_file_parses() {
        let text = "\
# robustness run
synth.rows = 600
synth.channels = 3
synth.cycle_len = 12
synth.noise_std = 0.05
data.split = 0.6,0.2,0.2
model.lookback = 24
model.horizon = 12
model.d = 64
model.dropout = 0.25
model.activation = gelu
loss.alpha = 0.5
loss.mode = hybrid
optim.lr = 0.002
optim.max_epochs = 5
optim.batch_size = 16
corrupt.p = 0.1
corrupt.mode = noise
seeds = 1,2,3
ablation = no_EP
target_channel = ch1
out_dir = /tmp/exp
eval.raw_units = true
";
        let cfg = parse_config_text(text).expect("parse");
        match &cfg.source {
            DataSource::Synth(s) => {
                assert_eq!(s.rows, 600);
                assert_eq!(s.channels, 3);
                assert_eq!(s.cycle_len, 12);
                assert_eq!(s.noise_std, 0.05);
                assert_eq!(s.phases.len(), 3);
            }
            other => panic!("wrong source: {other:?}"),
        }
        assert_eq!(
            cfg.split,
            SplitSpec::Fractions {
                train: 0.6,
                val: 0.2,
                test: 0.2
            }
        );
        assert_eq!((cfg.lookback, cfg.horizon, cfg.embed_dim), (24, 12, 64));
        assert_eq!(cfg.dropout_rate, 0.25);
        assert_eq!(cfg.activation, ActKind::Gelu);
        assert_eq!(cfg.loss.alpha, 0.5);
        assert_eq!(cfg.loss.mode, LossMode::Hybrid);
        assert_eq!(cfg.optim.learning_rate, 0.002);
        assert_eq!(cfg.optim.max_epochs, 5);
        assert_eq!(cfg.corruption.probability, 0.1);
        assert_eq!(cfg.seeds, [1, 2, 3]);
        assert_eq!(cfg.ablation, "no_EP");
        assert_eq!(cfg.target_channel.as_deref(), Some("ch1"));
        assert_eq!(cfg.out_dir, PathBuf::from("/tmp/exp"));
        assert!(cfg.raw_units);
        // Cycle falls back to the synthetic spec.
        assert_eq!(cfg.resolve_cycle().unwrap(), 12);
    }

    #[test]
    fn defaults_match_the_published_protocol() {
        let cfg = parse_config_text("synth.rows = 500\n").expect("parse");
        assert_eq!(cfg.optim.max_epochs, 30);
        assert_eq!(cfg.optim.patience, 5);
        assert_eq!(cfg.dropout_rate, 0.5);
        assert_eq!(cfg.embed_dim, 512);
        assert_eq!(cfg.loss.alpha, 0.25);
        assert_eq!(cfg.optim.learning_rate, 1e-3);
        assert_eq!(cfg.ablation, "full");
        assert!(cfg.instance_norm);
    }

    #[test]
    fn unknown_keys_and_bad_values_name_the_problem() {
        let err = parse_config_text("model.dee = 64\n").unwrap_err();
        match err {
            PamError::Config(msg) => assert!(msg.contains("model.dee"), "msg: {msg}"),
            other => panic!("expected config error, got {other}"),
        }
        let err = parse_config_text("model.d = many\n").unwrap_err();
        match err {
            PamError::Config(msg) => {
                assert!(msg.contains("model.d") && msg.contains("many"), "msg: {msg}")
            }
            other => panic!("expected config error, got {other}"),
        }
        let err = parse_config_text("model.d 64\n").unwrap_err();
        match err {
            PamError::Config(msg) => assert!(msg.contains("key=value"), "msg: {msg}"),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn cycle_resolution_precedence() {
        // Explicit model.c wins over the dataset table.
        let cfg = parse_config_text("data.csv = x.csv\ndataset = ETTh1\nmodel.c = 48\n")
            .expect("parse");
        assert_eq!(cfg.resolve_cycle().unwrap(), 48);
        // Dataset table next.
        let cfg = parse_config_text("data.csv = x.csv\ndataset = ETTm2\n").expect("parse");
        assert_eq!(cfg.resolve_cycle().unwrap(), 96);
        // A CSV source with no tag and no explicit c cannot resolve.
        assert!(parse_config_text("data.csv = x.csv\n").is_err());
    }

    #[test]
    fn split_counts_and_dataset_lookup_errors_surface() {
        let cfg =
            parse_config_text("synth.rows = 300\ndata.split_counts = 200,50,50\n").unwrap();
        assert_eq!(
            cfg.split,
            SplitSpec::Counts {
                train: 200,
                val: 50,
                test: 50
            }
        );
        let err = parse_config_text("data.csv = x.csv\ndataset = NOPE\n").unwrap_err();
        assert!(matches!(err, PamError::Lookup { .. }));
    }

    #[test]
    fn conflicting_sources_are_rejected() {
        let err = parse_config_text("data.csv = x.csv\nsynth.rows = 100\nmodel.c = 4\n")
            .unwrap_err();
        match err {
            PamError::Config(msg) => assert!(msg.contains("source"), "msg: {msg}"),
            other => panic!("expected config error, got {other}"),
        }
    }

    #[test]
    fn unregistered_ablation_fails_validation() {
        let err = parse_config_text("synth.rows = 100\nablation = bogus\n").unwrap_err();
        assert!(matches!(err, PamError::Registry { .. }));
    }

    #[test]
    fn model_config_materializes_with_the_channel_count() {
        let cfg = parse_config_text(
            "synth.rows = 400\nsynth.channels = 5\nmodel.lookback = 12\nmodel.horizon = 6\nmodel.d = 8\n",
        )
        .unwrap();
        let model = cfg.model_config(5).unwrap();
        assert_eq!(model.channels, 5);
        assert_eq!(model.lookback, 12);
        assert_eq!(model.cycle_len, 24);
        model.validate().unwrap();
    }
}
