//! Synthetic periodic series with amplitude drift.
//!
//! Each channel carries a sinusoid locked to a shared cycle length,
//! with a per-channel phase offset, a cycle-position-dependent mean
//! profile, a slow amplitude envelope spanning several cycles, and
//! i.i.d. Gaussian noise:
//!
//! ```text
//! x_i(tau) = A(tau) * sin(2*pi*(tau mod c)/c + phi_i)
//!          + mean_amp * cos(2*pi*(tau mod c)/c + phi_i)
//!          + noise_std * z
//! A(tau)   = 1 + drift_depth * sin(2*pi*tau / (drift_cycles * c))
//! ```
//!
//! The envelope makes the series cycle-aware in a way a purely
//! lookback-driven predictor must work to recover: the same cycle
//! position recurs with different amplitudes depending on where the
//! slow drift currently sits.

use std::f64::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{PamError, Result};
use crate::tensor::Tensor;

use super::frame::SeriesFrame;

/// Parameters for the synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    /// Number of time steps to generate.
    pub rows: usize,
    /// Number of channels.
    pub channels: usize,
    /// Cycle length `c` (at least 2).
    pub cycle_len: usize,
    /// Per-channel base phase, one entry per channel.
    pub phases: Vec<f64>,
    /// Amplitude of the cycle-position mean profile (0 disables it).
    pub mean_amp: f64,
    /// Envelope period in cycles (`k`, at least 1).
    pub drift_cycles: usize,
    /// Envelope depth, in `[0, 1)` so the amplitude never flips sign.
    pub drift_depth: f64,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_std: f64,
    /// Generator seed.
    pub seed: u64,
}

impl SynthSpec {
    /// A spec with evenly staggered channel phases and moderate drift,
    /// mean profile, and noise.
    pub fn new(rows: usize, channels: usize, cycle_len: usize, seed: u64) -> Self {
        let phases = (0..channels)
            .map(|i| TAU * i as f64 / channels.max(1) as f64)
            .collect();
        Self {
            rows,
            channels,
            cycle_len,
            phases,
            mean_amp: 0.5,
            drift_cycles: 4,
            drift_depth: 0.5,
            noise_std: 0.1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.channels == 0 {
            return Err(PamError::Config(
                "synthetic series needs at least one row and one channel".into(),
            ));
        }
        if self.cycle_len < 2 {
            return Err(PamError::Config(format!(
                "cycle length must be at least 2, got {}",
                self.cycle_len
            )));
        }
        if self.phases.len() != self.channels {
            return Err(PamError::Config(format!(
                "expected {} channel phases, got {}",
                self.channels,
                self.phases.len()
            )));
        }
        if !self.drift_depth.is_finite() || !(0.0..1.0).contains(&self.drift_depth) {
            return Err(PamError::Config(format!(
                "drift depth must lie in [0, 1), got {}",
                self.drift_depth
            )));
        }
        if self.drift_cycles == 0 {
            return Err(PamError::Config(
                "drift period must span at least one cycle".into(),
            ));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(PamError::Config(format!(
                "noise std must be finite and non-negative, got {}",
                self.noise_std
            )));
        }
        if !self.mean_amp.is_finite() {
            return Err(PamError::Config("mean profile amplitude must be finite".into()));
        }
        Ok(())
    }
}

/// Generates the series described by `spec`. Channels are named
/// `ch0..chN-1`; noise draws happen in row-major order so equal seeds
/// give bit-identical frames.
pub fn synth_generate(spec: &SynthSpec) -> Result<SeriesFrame> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.cycle_len as f64;
    let drift_period = (spec.drift_cycles * spec.cycle_len) as f64;

    let mut data = Vec::with_capacity(spec.rows * spec.channels);
    for tau in 0..spec.rows {
        let position = (tau % spec.cycle_len) as f64;
        let envelope = 1.0 + spec.drift_depth * (TAU * tau as f64 / drift_period).sin();
        for phi in &spec.phases {
            let angle = TAU * position / c + phi;
            let carrier = envelope * angle.sin();
            let mean_profile = spec.mean_amp * angle.cos();
            let noise = if spec.noise_std > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                spec.noise_std * z
            } else {
                0.0
            };
            data.push(carrier + mean_profile + noise);
        }
    }

    let names = (0..spec.channels).map(|i| format!("ch{i}")).collect();
    let values = Tensor::new(vec![spec.rows, spec.channels], data)?;
    SeriesFrame::new(
        names,
        values,
        format!(
            "synthetic(c={}, depth={}, noise={}, seed={})",
            spec.cycle_len, spec.drift_depth, spec.noise_std, spec.seed
        ),
    )
}
