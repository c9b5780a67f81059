//! Evaluation metrics and test-set evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{NormStats, Window};
use crate::error::{PamError, Result};
use crate::model::{forward, ModelConfig, ModelParams};
use crate::tape::Tape;
use crate::tensor::{Real, Tensor};
use crate::train::{time_mae, time_mse};

/// Mean squared residual over all entries.
pub fn mse(y: &Tensor<f64>, yhat: &Tensor<f64>) -> Result<f64> {
    time_mse(y, yhat)
}

/// Mean absolute residual over all entries. Agrees exactly with the
/// training module's time-domain MAE.
pub fn mae(y: &Tensor<f64>, yhat: &Tensor<f64>) -> Result<f64> {
    time_mae(y, yhat)
}

/// One (window, step, channel) prediction next to its ground truth —
/// the row format of the dumped predictions CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionRow {
    pub window: usize,
    pub step: usize,
    pub channel: usize,
    pub y: f64,
    pub yhat: f64,
}

/// Metrics for one trained model over one test batch, plus every
/// prediction that produced them.
#[derive(Clone, Debug)]
pub struct EvalResult {
    pub mse: f64,
    pub mae: f64,
    /// Present when a target channel was requested: the same metrics
    /// restricted to that channel's residuals.
    pub target_mse: Option<f64>,
    pub target_mae: Option<f64>,
    pub rows: Vec<PredictionRow>,
}

/// Evaluates trained parameters over a test batch with dropout
/// disabled. The model always consumes all N input channels;
/// `target_channel` only restricts the metric reduction. When `stats`
/// is given, predictions and targets are mapped back to raw units
/// before the residuals are computed.
pub fn evaluate<T: Real>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    test: &[Window],
    target_channel: Option<usize>,
    stats: Option<&NormStats>,
) -> Result<EvalResult> {
    // The generator argument is required by the forward signature but
    // never consulted when training is off.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    evaluate_with(test, target_channel, stats, |window| {
        let x = window.x.cast::<T>();
        let mut tape = Tape::new();
        let (pred, _) = forward(&mut tape, params, config, &x, window.tau_end, false, &mut rng)?;
        Ok(tape.value(pred).cast::<f64>())
    })
}

/// Shared evaluation core, parameterized over the predictor so tests
/// can substitute a perfect oracle.
pub(crate) fn evaluate_with(
    test: &[Window],
    target_channel: Option<usize>,
    stats: Option<&NormStats>,
    mut predict: impl FnMut(&Window) -> Result<Tensor<f64>>,
) -> Result<EvalResult> {
    if test.is_empty() {
        return Err(PamError::Config("cannot evaluate zero windows".into()));
    }
    let channels = test[0].y.cols();
    if let Some(c) = target_channel {
        if c >= channels {
            return Err(PamError::Config(format!(
                "target channel index {c} out of range for {channels} channels"
            )));
        }
    }

    let mut rows = Vec::new();
    for (w, window) in test.iter().enumerate() {
        let yhat = predict(window)?;
        if yhat.shape() != window.y.shape() {
            return Err(PamError::Dimension {
                op: "evaluate",
                left: window.y.shape().to_vec(),
                right: yhat.shape().to_vec(),
            });
        }
        for step in 0..window.y.rows() {
            for channel in 0..channels {
                let (mut y, mut p) = (window.y.at(step, channel), yhat.at(step, channel));
                if let Some(stats) = stats {
                    y = stats.invert(channel, y);
                    p = stats.invert(channel, p);
                }
                rows.push(PredictionRow {
                    window: w,
                    step,
                    channel,
                    y,
                    yhat: p,
                });
            }
        }
    }

    let (mse, mae) = metrics_over(rows.iter());
    let (target_mse, target_mae) = match target_channel {
        Some(c) => {
            let (m, a) = metrics_over(rows.iter().filter(|r| r.channel == c));
            (Some(m), Some(a))
        }
        None => (None, None),
    };
    Ok(EvalResult {
        mse,
        mae,
        target_mse,
        target_mae,
        rows,
    })
}

/// Mean squared and absolute residual over an iterator of rows, in row
/// order — the same arithmetic an external recomputation from the
/// dumped CSV performs.
pub(crate) fn metrics_over<'a>(rows: impl Iterator<Item = &'a PredictionRow>) -> (f64, f64) {
    let mut count = 0usize;
    let mut sq = 0.0f64;
    let mut abs = 0.0f64;
    for row in rows {
        let d = row.y - row.yhat;
        sq += d * d;
        abs += d.abs();
        count += 1;
    }
    (sq / count as f64, abs / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor<f64> {
        Tensor::new(shape, data).unwrap()
    }

    fn windows(count: usize, h: usize, n: usize) -> Vec<Window> {
        (0..count)
            .map(|w| Window {
                x: t(vec![4, n], (0..4 * n).map(|i| (w + i) as f64 * 0.1).collect()),
                y: t(
                    vec![h, n],
                    (0..h * n).map(|i| ((w * 31 + i * 7) % 11) as f64 * 0.5).collect(),
                ),
                tau_end: 3 + w,
            })
            .collect()
    }

    #[test]
    fn hand_examples() {
        let y = t(vec![1, 2], vec![1.0, 3.0]);
        let yhat = t(vec![1, 2], vec![2.0, 1.0]);
        assert_eq!(mse(&y, &yhat).unwrap(), 2.5);
        assert_eq!(mae(&y, &yhat).unwrap(), 1.5);

        assert_eq!(mse(&y, &y).unwrap(), 0.0);
        assert_eq!(mae(&y, &y).unwrap(), 0.0);

        // A constant offset of delta gives MSE delta^2 and MAE |delta|.
        let offset = y.map(|v| v - 0.75);
        assert!((mse(&y, &offset).unwrap() - 0.5625).abs() < 1e-15);
        assert_eq!(mae(&y, &offset).unwrap(), 0.75);
    }

    #[test]
    fn mae_agrees_exactly_with_the_training_loss() {
        let y = t(vec![3, 2], vec![0.1, -2.0, 3.5, 0.0, 1.25, -0.5]);
        let yhat = t(vec![3, 2], vec![0.0, -1.0, 3.25, 0.5, 2.0, -0.25]);
        assert_eq!(mae(&y, &yhat).unwrap(), time_mae(&y, &yhat).unwrap());
    }

    #[test]
    fn perfect_oracle_scores_zero() {
        let batch = windows(3, 2, 2);
        let result =
            evaluate_with(&batch, Some(1), None, |w| Ok(w.y.clone())).expect("evaluate");
        assert_eq!(result.mse, 0.0);
        assert_eq!(result.mae, 0.0);
        assert_eq!(result.target_mse, Some(0.0));
        assert_eq!(result.target_mae, Some(0.0));
        assert_eq!(result.rows.len(), 3 * 2 * 2);
    }

    #[test]
    fn metrics_match_recomputation_from_the_dumped_rows() {
        let batch = windows(4, 3, 2);
        // An imperfect predictor: constant 0.2 under the truth.
        let result = evaluate_with(&batch, None, None, |w| Ok(w.y.map(|v| v - 0.2)))
            .expect("evaluate");
        // Recompute the metrics from the rows exactly as an external
        // reader of the CSV would.
        let mut sq = 0.0;
        let mut abs = 0.0;
        for row in &result.rows {
            sq += (row.y - row.yhat) * (row.y - row.yhat);
            abs += (row.y - row.yhat).abs();
        }
        let n = result.rows.len() as f64;
        assert_eq!(result.mse, sq / n);
        assert_eq!(result.mae, abs / n);
        assert!((result.mse - 0.04).abs() < 1e-12);
        assert!((result.mae - 0.2).abs() < 1e-12);
    }

    #[test]
    fn target_channel_restricts_the_reduction() {
        let batch = windows(2, 2, 3);
        // Channel 2 gets a large error, others a small one.
        let result = evaluate_with(&batch, Some(2), None, |w| {
            let mut p = w.y.clone();
            for i in 0..p.rows() {
                *p.at_mut(i, 2) += 2.0;
                *p.at_mut(i, 0) += 0.1;
            }
            Ok(p)
        })
        .expect("evaluate");
        assert_eq!(result.target_mse, Some(4.0));
        assert_eq!(result.target_mae, Some(2.0));
        assert!(result.mse < 4.0);

        // Degenerate single-channel case: target metrics equal overall.
        let single = windows(3, 2, 1);
        let result = evaluate_with(&single, Some(0), None, |w| Ok(w.y.map(|v| v + 0.3)))
            .expect("evaluate");
        assert_eq!(result.target_mse, Some(result.mse));
        assert_eq!(result.target_mae, Some(result.mae));
    }

    #[test]
    fn raw_unit_metrics_apply_the_inverse_transform() {
        let batch = windows(2, 2, 2);
        let stats = NormStats {
            mean: vec![10.0, -5.0],
            std: vec![2.0, 0.5],
        };
        // Constant standardized error of 0.1 per channel becomes a raw
        // error of 0.1 * std per channel.
        let result = evaluate_with(&batch, None, Some(&stats), |w| Ok(w.y.map(|v| v - 0.1)))
            .expect("evaluate");
        let expected_mae = (0.1 * 2.0 + 0.1 * 0.5) / 2.0;
        assert!((result.mae - expected_mae).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_target_channel_is_rejected() {
        let batch = windows(1, 2, 2);
        let err = evaluate_with(&batch, Some(2), None, |w| Ok(w.y.clone()))
            .map(|_| ())
            .unwrap_err();
        assert!(matches!(err, PamError::Config(_)));
    }

    #[test]
    fn model_evaluation_runs_without_dropout_noise() {
        use crate::model::{ModelConfig, ModelParams};
        let mut cfg = ModelConfig::for_dims(4, 2, 2, 6);
        cfg.embed_dim = 4;
        cfg.dropout_rate = 0.9;
        let params = ModelParams::<f64>::init(&cfg, 3).unwrap();
        let batch = windows(2, 2, 2);
        let a = evaluate(&params, &cfg, &batch, None, None).unwrap();
        let b = evaluate(&params, &cfg, &batch, None, None).unwrap();
        // With dropout disabled the evaluation is deterministic even at
        // a high configured rate.
        assert_eq!(a.mse, b.mse);
        assert_eq!(a.rows.len(), b.rows.len());
    }
}
