//! Input corruption for robustness studies.
//!
//! Corruption applies to lookback blocks only — targets are never
//! touched, so the evaluation ground truth stays clean. Replacement
//! noise is scaled per window by the empirical standard deviation of
//! that window's (uncorrupted) input block.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};

use super::windows::{Window, WindowBatch};

/// What masked input elements are replaced with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptMode {
    /// Replace with exact zeros.
    Zeros,
    /// Replace with draws from `Normal(0, sigma_w^2)`, where `sigma_w`
    /// is the window's own input standard deviation.
    Noise,
}

impl FromStr for CorruptMode {
    type Err = PamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zeros" => Ok(CorruptMode::Zeros),
            "noise" => Ok(CorruptMode::Noise),
            other => Err(PamError::Config(format!(
                "unknown corruption mode `{other}` (expected zeros or noise)"
            ))),
        }
    }
}

impl fmt::Display for CorruptMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorruptMode::Zeros => "zeros",
            CorruptMode::Noise => "noise",
        })
    }
}

/// Corruption settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Probability of masking each element (or each time step when
    /// `per_timestep` is set). Must lie in `[0, 1)`.
    pub probability: f64,
    pub mode: CorruptMode,
    /// When set, whole lookback rows are masked together instead of
    /// independent elements.
    pub per_timestep: bool,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        Self {
            probability: 0.0,
            mode: CorruptMode::Zeros,
            per_timestep: false,
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.probability.is_finite() || !(0.0..1.0).contains(&self.probability) {
            return Err(PamError::Config(format!(
                "corruption probability must lie in [0, 1), got {}",
                self.probability
            )));
        }
        Ok(())
    }
}

/// Applies corruption to the input block of every window, leaving the
/// targets bitwise untouched. With probability zero the batch is
/// returned unchanged and the generator is never consulted, so a
/// pipeline with corruption disabled is bit-identical to one without a
/// corruption stage at all.
pub fn corrupt<R: Rng + ?Sized>(
    batch: &[Window],
    spec: &CorruptionSpec,
    rng: &mut R,
) -> Result<WindowBatch> {
    spec.validate()?;
    if spec.probability == 0.0 {
        return Ok(batch.to_vec());
    }

    let mut out = Vec::with_capacity(batch.len());
    for window in batch {
        let sigma = input_std(window);
        let mut x = window.x.clone();
        let (rows, cols) = (x.shape()[0], x.shape()[1]);
        if spec.per_timestep {
            for i in 0..rows {
                if rng.random::<f64>() < spec.probability {
                    for j in 0..cols {
                        *x.at_mut(i, j) = replacement(spec.mode, sigma, rng);
                    }
                }
            }
        } else {
            for i in 0..rows {
                for j in 0..cols {
                    if rng.random::<f64>() < spec.probability {
                        *x.at_mut(i, j) = replacement(spec.mode, sigma, rng);
                    }
                }
            }
        }
        out.push(Window {
            x,
            y: window.y.clone(),
            tau_end: window.tau_end,
        });
    }
    Ok(out)
}

/// Population standard deviation over all elements of the window's
/// input block, computed before any masking.
fn input_std(window: &Window) -> f64 {
    let data = window.x.data();
    let count = data.len() as f64;
    let mean: f64 = data.iter().sum::<f64>() / count;
    let var: f64 = data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
    var.sqrt()
}

fn replacement<R: Rng + ?Sized>(mode: CorruptMode, sigma: f64, rng: &mut R) -> f64 {
    match mode {
        CorruptMode::Zeros => 0.0,
        CorruptMode::Noise => {
            let z: f64 = rng.sample(StandardNormal);
            sigma * z
        }
    }
}
