//! The ablation registry: named configuration transforms, one per
//! studied model variant.

use crate::error::{PamError, Result};
use crate::model::ModelConfig;
use crate::tape::ActKind;
use crate::train::{LossConfig, LossMode};

const TAGS: [&str; 12] = [
    "full",
    "act_silu",
    "act_tanh",
    "act_sigmoid",
    "act_relu",
    "act_gelu",
    "no_EA",
    "no_EP",
    "sinusoidal",
    "no_modulator",
    "loss_mse",
    "loss_mae",
];

/// Every registered ablation tag.
pub fn ablation_tags() -> &'static [&'static str] {
    &TAGS
}

/// Applies a registered tag to a base configuration pair, returning
/// the modified copies. `full` (and the default-activation alias
/// `act_silu`) return the inputs unchanged.
pub fn apply_ablation(
    model: &ModelConfig,
    loss: &LossConfig,
    tag: &str,
) -> Result<(ModelConfig, LossConfig)> {
    let mut model = model.clone();
    let mut loss = *loss;
    match tag {
        "full" => {}
        "act_silu" => model.activation = ActKind::Silu,
        "act_tanh" => model.activation = ActKind::Tanh,
        "act_sigmoid" => model.activation = ActKind::Sigmoid,
        "act_relu" => model.activation = ActKind::Relu,
        "act_gelu" => model.activation = ActKind::Gelu,
        "no_EA" => model.use_amplitude = false,
        "no_EP" => model.use_phase = false,
        "sinusoidal" => model.sinusoidal_carriers = true,
        "no_modulator" => model.use_modulator = false,
        "loss_mse" => loss.mode = LossMode::Mse,
        "loss_mae" => loss.mode = LossMode::Mae,
        unknown => {
            return Err(PamError::Registry {
                tag: unknown.to_string(),
                known: TAGS.join(", "),
            })
        }
    }
    Ok((model, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, ModelParams};
    use crate::tensor::Tensor;
    use crate::tape::Tape;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn base() -> (ModelConfig, LossConfig) {
        let mut model = ModelConfig::for_dims(8, 4, 3, 12);
        model.embed_dim = 6;
        model.dropout_rate = 0.0;
        (model, LossConfig::default())
    }

    #[test]
    fn registry_enumerates_exactly_twelve_tags() {
        assert_eq!(ablation_tags().len(), 12);
        let mut sorted = ablation_tags().to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 12, "registry tags are not distinct");
        // Every registered tag applies cleanly.
        let (model, loss) = base();
        for tag in ablation_tags() {
            apply_ablation(&model, &loss, tag).expect(tag);
        }
    }

    #[test]
    fn tags_flip_the_documented_switches() {
        let (model, loss) = base();
        let (m, _) = apply_ablation(&model, &loss, "no_EA").unwrap();
        assert!(!m.use_amplitude && m.use_phase);
        let (m, _) = apply_ablation(&model, &loss, "no_EP").unwrap();
        assert!(!m.use_phase && m.use_amplitude);
        let (m, _) = apply_ablation(&model, &loss, "sinusoidal").unwrap();
        assert!(m.sinusoidal_carriers);
        let (m, _) = apply_ablation(&model, &loss, "no_modulator").unwrap();
        assert!(!m.use_modulator);
        let (m, _) = apply_ablation(&model, &loss, "act_tanh").unwrap();
        assert_eq!(m.activation, ActKind::Tanh);
        let (m, l) = apply_ablation(&model, &loss, "full").unwrap();
        assert_eq!(m, model);
        assert_eq!(l, loss);
    }

    #[test]
    fn loss_tags_leave_the_model_config_untouched() {
        let (model, loss) = base();
        for (tag, mode) in [("loss_mse", LossMode::Mse), ("loss_mae", LossMode::Mae)] {
            let (m, l) = apply_ablation(&model, &loss, tag).unwrap();
            assert_eq!(m, model, "{tag} modified the model config");
            assert_eq!(l.mode, mode);
            assert_eq!(l.alpha, loss.alpha);
        }
    }

    #[test]
    fn unknown_tag_is_rejected_with_the_registry_listing() {
        let (model, loss) = base();
        let err = apply_ablation(&model, &loss, "no_dropout").unwrap_err();
        match err {
            PamError::Registry { tag, known } => {
                assert_eq!(tag, "no_dropout");
                for t in ablation_tags() {
                    assert!(known.contains(t), "listing misses {t}");
                }
            }
            other => panic!("expected registry error, got {other}"),
        }
    }

    #[test]
    fn no_ep_output_equals_the_amplitude_only_path() {
        // The tag must produce the same model as flipping the switch by
        // hand: bitwise-equal outputs from equal seeds.
        let (model, loss) = base();
        let (ablated, _) = apply_ablation(&model, &loss, "no_EP").unwrap();
        let mut manual = model.clone();
        manual.use_phase = false;

        let x = Tensor::new(
            vec![8, 3],
            (0..24).map(|i| (i as f64 * 0.37).sin()).collect::<Vec<_>>(),
        )
        .unwrap();
        let out = |cfg: &ModelConfig| {
            let params = ModelParams::<f64>::init(cfg, 5).unwrap();
            let mut tape = Tape::new();
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (pred, _) = forward(&mut tape, &params, cfg, &x, 7, false, &mut rng).unwrap();
            tape.value(pred).data().to_vec()
        };
        assert_eq!(out(&ablated), out(&manual));
    }
}
