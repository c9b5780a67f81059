//! Forecasting losses: time-domain MAE, frequency-domain MAE over the
//! per-channel discrete Fourier transform of the error, and their
//! convex blend.
//!
//! Plain tensor functions serve evaluation and tests; [`loss_node`]
//! builds the same quantity on a tape so it can be differentiated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dft::dft;
use crate::error::{PamError, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::{Real, Tensor};

/// Which training objective to optimize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// `(1 - alpha) * time_mae + alpha * freq_mae`.
    Hybrid,
    /// Mean squared error.
    Mse,
    /// Mean absolute error.
    Mae,
}

impl FromStr for LossMode {
    type Err = PamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hybrid" => Ok(LossMode::Hybrid),
            "mse" => Ok(LossMode::Mse),
            "mae" => Ok(LossMode::Mae),
            other => Err(PamError::Config(format!(
                "unknown loss mode `{other}` (expected hybrid, mse, or mae)"
            ))),
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossMode::Hybrid => "hybrid",
            LossMode::Mse => "mse",
            LossMode::Mae => "mae",
        })
    }
}

/// Loss settings. `alpha` weighs the frequency term of the hybrid loss
/// and is ignored by the pure modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub mode: LossMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            mode: LossMode::Hybrid,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !(0.0..=1.0).contains(&self.alpha) {
            return Err(PamError::Config(format!(
                "loss alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

fn check_same_shape<T: Real>(op: &'static str, y: &Tensor<T>, yhat: &Tensor<T>) -> Result<()> {
    if y.shape() != yhat.shape() {
        return Err(PamError::Dimension {
            op,
            left: y.shape().to_vec(),
            right: yhat.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean absolute error over all elements.
pub fn time_mae<T: Real>(y: &Tensor<T>, yhat: &Tensor<T>) -> Result<T> {
    check_same_shape("time_mae", y, yhat)?;
    let mut acc = 0.0f64;
    for (&a, &b) in y.data().iter().zip(yhat.data()) {
        acc += (a.to_f64() - b.to_f64()).abs();
    }
    Ok(T::from_f64(acc / y.len() as f64))
}

/// Mean squared error over all elements.
pub fn time_mse<T: Real>(y: &Tensor<T>, yhat: &Tensor<T>) -> Result<T> {
    check_same_shape("time_mse", y, yhat)?;
    let mut acc = 0.0f64;
    for (&a, &b) in y.data().iter().zip(yhat.data()) {
        let d = a.to_f64() - b.to_f64();
        acc += d * d;
    }
    Ok(T::from_f64(acc / y.len() as f64))
}

/// Mean modulus of the per-channel discrete Fourier transform of the
/// error `y - yhat`, averaged over every (frequency, channel) pair.
pub fn freq_mae<T: Real>(y: &Tensor<T>, yhat: &Tensor<T>) -> Result<T> {
    check_same_shape("freq_mae", y, yhat)?;
    if y.rank() != 2 {
        return Err(PamError::Domain(format!(
            "freq_mae expects rank-2 horizon-by-channel tensors, got rank {}",
            y.rank()
        )));
    }
    let (h, n) = (y.rows(), y.cols());
    let mut acc = 0.0f64;
    let mut column = vec![0.0f64; h];
    for j in 0..n {
        for i in 0..h {
            column[i] = y.at(i, j).to_f64() - yhat.at(i, j).to_f64();
        }
        for bin in dft(&column) {
            acc += bin.modulus();
        }
    }
    Ok(T::from_f64(acc / (h * n) as f64))
}

/// The value of the configured loss for a prediction.
pub fn hybrid_loss<T: Real>(y: &Tensor<T>, yhat: &Tensor<T>, cfg: &LossConfig) -> Result<T> {
    cfg.validate()?;
    match cfg.mode {
        LossMode::Mae => time_mae(y, yhat),
        LossMode::Mse => time_mse(y, yhat),
        LossMode::Hybrid => {
            let t = time_mae(y, yhat)?.to_f64();
            let f = freq_mae(y, yhat)?.to_f64();
            Ok(T::from_f64((1.0 - cfg.alpha) * t + cfg.alpha * f))
        }
    }
}

/// Builds the configured loss on the tape, rooted at the difference
/// between `prediction` and a constant `target`, so that a backward
/// pass yields gradients for every parameter the prediction touches.
pub fn loss_node<T: Real>(
    tape: &mut Tape<T>,
    prediction: NodeId,
    target: &Tensor<T>,
    cfg: &LossConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    let y = tape.constant(target.clone());
    let diff = tape.sub(prediction, y)?;
    match cfg.mode {
        LossMode::Mae => tape.mean_abs(diff),
        LossMode::Mse => tape.mean_sq(diff),
        LossMode::Hybrid => {
            let t = tape.mean_abs(diff)?;
            let f = tape.spectral_mae(diff)?;
            tape.lincomb(t, f, T::from_f64(1.0 - cfg.alpha), T::from_f64(cfg.alpha))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn time_mae_hand_examples() {
        // |1-0| + |0-0| over 2 elements.
        let y = t(vec![1, 2], vec![1.0, 0.0]);
        let yhat = t(vec![1, 2], vec![0.0, 0.0]);
        assert_eq!(time_mae(&y, &yhat).unwrap(), 0.5);

        // |1-2| + |3-1| over 2 elements.
        let y = t(vec![1, 2], vec![1.0, 3.0]);
        let yhat = t(vec![1, 2], vec![2.0, 1.0]);
        assert_eq!(time_mae(&y, &yhat).unwrap(), 1.5);
        assert_eq!(time_mse(&y, &yhat).unwrap(), 2.5);
    }

    #[test]
    fn freq_mae_of_a_unit_impulse_error() {
        // The error column (1, 0): every frequency bin has modulus 1,
        // so the mean over 2 bins x 1 channel is 1.
        let y = t(vec![2, 1], vec![1.0, 0.0]);
        let yhat = t(vec![2, 1], vec![0.0, 0.0]);
        let f = freq_mae(&y, &yhat).unwrap();
        assert!((f - 1.0).abs() < 1e-12, "got {f}");
    }

    #[test]
    fn freq_mae_is_positively_homogeneous() {
        // Scaling the error by c > 0 scales every bin modulus by c.
        let y = t(vec![4, 2], vec![0.5, -1.0, 2.0, 0.25, -0.75, 1.5, 0.0, -2.0]);
        let zeros = t(vec![4, 2], vec![0.0; 8]);
        let base = freq_mae(&y, &zeros).unwrap();
        let scaled_y = y.map(|v| v * 3.0);
        let scaled = freq_mae(&scaled_y, &zeros).unwrap();
        assert!((scaled - 3.0 * base).abs() < 1e-12);
    }

    #[test]
    fn hybrid_blends_time_and_frequency_terms() {
        // time_mae = 0.5, freq_mae = 1.0; with alpha = 0.25 the blend is
        // 0.75 * 0.5 + 0.25 * 1.0 = 0.625.
        let y = t(vec![2, 1], vec![1.0, 0.0]);
        let yhat = t(vec![2, 1], vec![0.0, 0.0]);
        let cfg = LossConfig::default();
        let loss = hybrid_loss(&y, &yhat, &cfg).unwrap();
        assert!((loss - 0.625).abs() < 1e-12, "got {loss}");

        // Alpha boundaries reduce to the pure terms.
        let all_time = LossConfig {
            alpha: 0.0,
            mode: LossMode::Hybrid,
        };
        assert_eq!(hybrid_loss(&y, &yhat, &all_time).unwrap(), 0.5);
        let all_freq = LossConfig {
            alpha: 1.0,
            mode: LossMode::Hybrid,
        };
        assert!((hybrid_loss(&y, &yhat, &all_freq).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tape_loss_matches_the_plain_functions() {
        let y = t(vec![3, 2], vec![1.0, -0.5, 2.0, 0.0, -1.5, 0.75]);
        let yhat = t(vec![3, 2], vec![0.5, 0.5, 1.0, -1.0, 0.25, 0.0]);
        for mode in [LossMode::Hybrid, LossMode::Mse, LossMode::Mae] {
            let cfg = LossConfig { alpha: 0.25, mode };
            let plain = hybrid_loss(&y, &yhat, &cfg).unwrap();
            let mut tape = Tape::new();
            let pred = tape.constant(yhat.clone());
            let node = loss_node(&mut tape, pred, &y, &cfg).unwrap();
            let taped = tape.scalar_value(node);
            assert!(
                (plain - taped).abs() < 1e-12,
                "{mode}: plain {plain} vs taped {taped}"
            );
        }
    }

    #[test]
    fn alpha_outside_unit_interval_is_rejected() {
        for alpha in [-0.1, 1.1, f64::NAN] {
            let cfg = LossConfig {
                alpha,
                mode: LossMode::Hybrid,
            };
            assert!(cfg.validate().is_err(), "accepted alpha={alpha}");
        }
    }

    #[test]
    fn loss_mode_round_trips_through_strings() {
        for mode in [LossMode::Hybrid, LossMode::Mse, LossMode::Mae] {
            let parsed: LossMode = mode.to_string().parse().unwrap();
            assert_eq!(parsed, mode);
        }
        assert!("huber".parse::<LossMode>().is_err());
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let y = t(vec![2, 1], vec![1.0, 2.0]);
        let yhat = t(vec![1, 2], vec![1.0, 2.0]);
        assert!(time_mae(&y, &yhat).is_err());
        assert!(freq_mae(&y, &yhat).is_err());
    }
}
