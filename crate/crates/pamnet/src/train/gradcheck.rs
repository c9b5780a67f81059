//! Finite-difference verification of the reverse-mode gradients.
//!
//! Checks every trainable parameter of a model against central
//! differences of the full forward-plus-loss computation at `f64`
//! precision. Dropout is forced off so the function being
//! differentiated is deterministic. Failures are reported, not thrown:
//! the caller decides what to do with a bad gradient.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{forward, ModelConfig, ModelParams};
use crate::tape::Tape;
use crate::tensor::Tensor;

use super::loss::{loss_node, LossConfig};

/// Step size for central differences.
const FD_STEP: f64 = 1e-5;

/// Worst relative error found within one named parameter tensor.
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_error: f64,
}

/// Outcome of a gradient check across all trainable parameters.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    /// True when every parameter's worst relative error is within
    /// tolerance.
    pub fn passed(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.max_rel_error <= self.tolerance)
    }

    /// The entry with the largest relative error, if any were checked.
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares reverse-mode gradients against central differences for one
/// random window under the given loss. Dropout is forced to zero for
/// the check regardless of the configured rate.
pub fn grad_check(
    config: &ModelConfig,
    loss_cfg: &LossConfig,
    seed: u64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    grad_check_impl(config, loss_cfg, seed, tolerance, None)
}

/// `tamper`, when set, adds an offset to one element of the named
/// parameter's reverse-mode gradient before comparison. It exists so
/// tests can prove the check actually detects wrong gradients.
pub(crate) fn grad_check_impl(
    config: &ModelConfig,
    loss_cfg: &LossConfig,
    seed: u64,
    tolerance: f64,
    tamper: Option<(&str, f64)>,
) -> Result<GradCheckReport> {
    let mut check_cfg = config.clone();
    check_cfg.dropout_rate = 0.0;
    check_cfg.validate()?;
    loss_cfg.validate()?;

    let mut params = ModelParams::<f64>::init(&check_cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let x = random_tensor(
        &mut rng,
        vec![check_cfg.lookback, check_cfg.channels],
    );
    let y = random_tensor(&mut rng, vec![check_cfg.horizon, check_cfg.channels]);
    let tau_end = rng.random_range(0..check_cfg.cycle_len * 4);

    // Reverse-mode gradients for every parameter at once.
    params.zero_grads();
    {
        let mut tape = Tape::new();
        let (pred, _) = forward(&mut tape, &params, &check_cfg, &x, tau_end, false, &mut rng)?;
        let loss = loss_node(&mut tape, pred, &y, loss_cfg)?;
        tape.backward_seeded(loss, 1.0)?;
        tape.accumulate_param_grads(params.items_mut());
    }
    if let Some((name, offset)) = tamper {
        if let Some(p) = params.by_name_mut(name) {
            p.grad.data_mut()[0] += offset;
        }
    }
    let analytic: Vec<(String, Tensor<f64>, bool)> = params
        .items()
        .iter()
        .map(|p| (p.name.clone(), p.grad.clone(), p.frozen))
        .collect();

    let mut entries = Vec::new();
    for (pi, (name, grad, frozen)) in analytic.iter().enumerate() {
        if *frozen {
            continue;
        }
        let mut max_rel = 0.0f64;
        for e in 0..grad.len() {
            let original = params.items()[pi].value.data()[e];
            let mut eval_at = |value: f64| -> Result<f64> {
                params.items_mut()[pi].value.data_mut()[e] = value;
                let mut tape = Tape::new();
                let (pred, _) =
                    forward(&mut tape, &params, &check_cfg, &x, tau_end, false, &mut rng)?;
                let loss = loss_node(&mut tape, pred, &y, loss_cfg)?;
                Ok(tape.scalar_value(loss))
            };
            let plus = eval_at(original + FD_STEP)?;
            let minus = eval_at(original - FD_STEP)?;
            params.items_mut()[pi].value.data_mut()[e] = original;

            let fd = (plus - minus) / (2.0 * FD_STEP);
            let got = grad.data()[e];
            let rel = (fd - got).abs() / fd.abs().max(got.abs()).max(1.0);
            max_rel = max_rel.max(rel);
        }
        entries.push(GradCheckEntry {
            name: name.clone(),
            max_rel_error: max_rel,
        });
    }

    Ok(GradCheckReport { entries, tolerance })
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| {
            let v = rng.random::<f64>() * 4.0 - 2.0;
            // Keep a margin from activation kinks and absolute-value
            // corners so central differences stay two-sided.
            if v.abs() < 0.05 {
                v + 0.1
            } else {
                v
            }
        })
        .collect();
    Tensor::new(shape, data).expect("random tensor shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::loss::LossMode;

    fn check_config() -> ModelConfig {
        let mut cfg = ModelConfig::for_dims(8, 4, 3, 12);
        cfg.embed_dim = 6;
        cfg
    }

    #[test]
    fn gradients_match_finite_differences_for_every_loss_mode() {
        for mode in [LossMode::Hybrid, LossMode::Mse, LossMode::Mae] {
            let loss_cfg = LossConfig { alpha: 0.25, mode };
            let report = grad_check(&check_config(), &loss_cfg, 17, 1e-4).unwrap();
            assert!(!report.entries.is_empty());
            assert!(
                report.passed(),
                "{mode}: worst {:?}",
                report.worst().map(|e| (e.name.clone(), e.max_rel_error))
            );
        }
    }

    #[test]
    fn shared_modulator_weights_also_pass() {
        let mut cfg = check_config();
        cfg.share_modulator_weights = true;
        let report = grad_check(&cfg, &LossConfig::default(), 3, 1e-4).unwrap();
        assert!(
            report.passed(),
            "worst {:?}",
            report.worst().map(|e| (e.name.clone(), e.max_rel_error))
        );
        assert!(report
            .entries
            .iter()
            .all(|e| !e.name.contains("modulator.amplitude")));
    }

    #[test]
    fn a_corrupted_gradient_is_detected_and_named() {
        let report = grad_check_impl(
            &check_config(),
            &LossConfig::default(),
            17,
            1e-4,
            Some(("head.out.weight", 1.0)),
        )
        .unwrap();
        assert!(!report.passed());
        let worst = report.worst().unwrap();
        assert_eq!(worst.name, "head.out.weight");
        assert!(worst.max_rel_error > 0.1);
    }

    #[test]
    fn instance_norm_path_is_also_differentiated_correctly() {
        let mut cfg = check_config();
        cfg.instance_norm = true;
        let with_norm = grad_check(&cfg, &LossConfig::default(), 6, 1e-4).unwrap();
        assert!(with_norm.passed());

        cfg.instance_norm = false;
        let without = grad_check(&cfg, &LossConfig::default(), 6, 1e-4).unwrap();
        assert!(without.passed());
    }
}
