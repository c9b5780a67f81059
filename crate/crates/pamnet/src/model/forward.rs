//! Assembly of the forward graph on a tape.

use rand::Rng;

use super::params::ParamLayout;
use super::{cycle_index, instance_normalize, norm::denorm_factors, ModelConfig, ModelParams};
use crate::error::{PamError, Result};
use crate::tape::{NodeId, Tape};
use crate::tensor::{Real, Tensor};

/// Snapshot of the named intermediate tensors of one forward pass.
/// Disabled paths leave their slots empty; the normalization stats are
/// present only when instance normalization ran.
pub struct Activations<T> {
    pub e_x: Tensor<T>,
    pub e_p: Option<Tensor<T>>,
    pub e_a: Option<Tensor<T>>,
    pub m_p: Option<Tensor<T>>,
    pub m_a: Option<Tensor<T>>,
    pub m_x: Tensor<T>,
    pub norm_mu: Option<Tensor<T>>,
    pub norm_sigma: Option<Tensor<T>>,
}

/// E_X = Xᵀ·W + b: the L×N window becomes one d-dimensional token per
/// variate.
pub fn variate_tokenize<T: Real>(
    tape: &mut Tape<T>,
    x: NodeId,
    w: NodeId,
    b: NodeId,
) -> Result<NodeId> {
    let xt = tape.transpose(x);
    let projected = tape.matmul(xt, w)?;
    tape.add_row(projected, b)
}

/// Row t of the phase table replicated across all N variates — every
/// variate sees the same cycle-position code.
pub fn phase_carrier<T: Real>(
    tape: &mut Tape<T>,
    omega_p: NodeId,
    t: usize,
    channels: usize,
) -> Result<NodeId> {
    let row = tape.gather_row(omega_p, t)?;
    tape.repeat_row(row, channels)
}

/// Row t of the amplitude table reshaped row-major to N×d — each
/// variate gets its own intensity code for this cycle position.
pub fn amplitude_carrier<T: Real>(
    tape: &mut Tape<T>,
    omega_a: NodeId,
    t: usize,
    channels: usize,
    embed_dim: usize,
) -> Result<NodeId> {
    let row = tape.gather_row(omega_a, t)?;
    tape.reshape(row, vec![channels, embed_dim])
}

/// One modulator application: act(E_X·W1) ⊙ (S·W2), dropout, then ·W3.
/// With `dropout_before_product` the mask instead hits the activated
/// branch ahead of the Hadamard product (the alternative published
/// formulation).
pub fn modulate<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    e_x: NodeId,
    s: NodeId,
    weights: [NodeId; 3],
    config: &ModelConfig,
    training: bool,
    rng: &mut R,
) -> Result<NodeId> {
    let [w1, w2, w3] = weights;
    let activated = {
        let projected = tape.matmul(e_x, w1)?;
        tape.activation(projected, config.activation)
    };
    let carrier_side = tape.matmul(s, w2)?;
    let gated = if config.dropout_before_product {
        let dropped = tape.dropout(activated, config.dropout_rate, training, rng)?;
        tape.hadamard(dropped, carrier_side)?
    } else {
        let product = tape.hadamard(activated, carrier_side)?;
        tape.dropout(product, config.dropout_rate, training, rng)?
    };
    tape.matmul(gated, w3)
}

/// Full pipeline: optional instance normalization → tokenize → cycle
/// index → carrier modulation (enabled paths summed) → head MLP →
/// transpose to H×N → optional de-normalization. Returns the output
/// node (ready for a loss head on the same tape) plus the captured
/// intermediates.
pub fn forward<T: Real, R: Rng + ?Sized>(
    tape: &mut Tape<T>,
    params: &ModelParams<T>,
    config: &ModelConfig,
    x: &Tensor<T>,
    tau_end: usize,
    training: bool,
    rng: &mut R,
) -> Result<(NodeId, Activations<T>)> {
    if x.shape() != [config.lookback, config.channels] {
        return Err(PamError::Dimension {
            op: "forward",
            left: x.shape().to_vec(),
            right: vec![config.lookback, config.channels],
        });
    }
    x.check_finite("input")?;
    let layout: ParamLayout = *params.layout();
    let leaf = |tape: &mut Tape<T>, idx: usize| tape.param(idx, &params.items()[idx].value);

    let (x_in, norm_mu, norm_sigma) = if config.instance_norm {
        let (z, mu, sigma) = instance_normalize(x, config.norm_eps)?;
        (z, Some(mu), Some(sigma))
    } else {
        (x.clone(), None, None)
    };

    let x_node = tape.constant(x_in);
    let tok_w = leaf(tape, layout.tok_w);
    let tok_b = leaf(tape, layout.tok_b);
    let e_x = variate_tokenize(tape, x_node, tok_w, tok_b)?;
    tape.value(e_x).check_finite("tokenize")?;

    let t = cycle_index(tau_end, config.cycle_len);

    let mut e_p = None;
    let mut e_a = None;
    let mut m_p = None;
    let mut m_a = None;
    let m_x = if config.use_modulator {
        if config.use_phase {
            let omega_p = leaf(
                tape,
                layout.carrier_phase.expect("modulator implies carriers"),
            );
            let carrier = phase_carrier(tape, omega_p, t, config.channels)?;
            let w = layout.phase_w.expect("modulator implies phase weights");
            let weights = [leaf(tape, w[0]), leaf(tape, w[1]), leaf(tape, w[2])];
            let modulated = modulate(tape, e_x, carrier, weights, config, training, rng)?;
            tape.value(modulated).check_finite("modulate.phase")?;
            e_p = Some(carrier);
            m_p = Some(modulated);
        }
        if config.use_amplitude {
            let omega_a = leaf(
                tape,
                layout.carrier_amplitude.expect("modulator implies carriers"),
            );
            let carrier = amplitude_carrier(tape, omega_a, t, config.channels, config.embed_dim)?;
            let w = layout.amp_w.expect("modulator implies amplitude weights");
            let weights = [leaf(tape, w[0]), leaf(tape, w[1]), leaf(tape, w[2])];
            let modulated = modulate(tape, e_x, carrier, weights, config, training, rng)?;
            tape.value(modulated).check_finite("modulate.amplitude")?;
            e_a = Some(carrier);
            m_a = Some(modulated);
        }
        match (m_p, m_a) {
            (Some(p), Some(a)) => tape.add(p, a)?,
            (Some(p), None) => p,
            (None, Some(a)) => a,
            (None, None) => unreachable!("validated config enables at least one path"),
        }
    } else {
        e_x
    };

    let hidden = {
        let w = leaf(tape, layout.head_hidden_w);
        let b = leaf(tape, layout.head_hidden_b);
        let projected = tape.matmul(m_x, w)?;
        let biased = tape.add_row(projected, b)?;
        tape.activation(biased, config.activation)
    };
    let head_out = {
        let w = leaf(tape, layout.head_out_w);
        let b = leaf(tape, layout.head_out_b);
        let projected = tape.matmul(hidden, w)?;
        tape.add_row(projected, b)?
    };
    tape.value(head_out).check_finite("head")?;
    let mut output = tape.transpose(head_out);

    if let (Some(mu), Some(sigma)) = (&norm_mu, &norm_sigma) {
        let (scale, shift) = denorm_factors(mu, sigma, config.norm_eps);
        output = tape.scale_cols(output, &scale, &shift)?;
    }
    tape.value(output).check_finite("output")?;

    let acts = Activations {
        e_x: tape.value(e_x).clone(),
        e_p: e_p.map(|id| tape.value(id).clone()),
        e_a: e_a.map(|id| tape.value(id).clone()),
        m_p: m_p.map(|id| tape.value(id).clone()),
        m_a: m_a.map(|id| tape.value(id).clone()),
        m_x: tape.value(m_x).clone(),
        norm_mu,
        norm_sigma,
    };
    Ok((output, acts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::{ActKind, Parameter};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> ModelConfig {
        let mut cfg = ModelConfig::for_dims(8, 4, 3, 12);
        cfg.embed_dim = 6;
        cfg.dropout_rate = 0.0;
        cfg.instance_norm = false;
        cfg
    }

    fn window(config: &ModelConfig, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..config.lookback * config.channels)
            .map(|_| 4.0 * rng.random::<f64>() - 2.0)
            .collect();
        Tensor::new(vec![config.lookback, config.channels], data).unwrap()
    }

    #[test]
    fn tokenize_matches_hand_arithmetic() {
        // L=2, N=1, d=1: E_X = Xᵀ·W + b = 1·3 + 2·4 + 0.5.
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap());
        let w = tape.constant(Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
        let b = tape.constant(Tensor::new(vec![1, 1], vec![0.5]).unwrap());
        let e_x = variate_tokenize(&mut tape, x, w, b).unwrap();
        assert_eq!(tape.value(e_x).data(), &[11.5]);
    }

    #[test]
    fn tokenize_of_zero_window_reproduces_bias() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![4, 3]));
        let w = tape.constant(Tensor::zeros(vec![4, 2]).map(|_| 1.0));
        let b = tape.constant(Tensor::new(vec![1, 2], vec![0.25, -0.75]).unwrap());
        let e_x = variate_tokenize(&mut tape, x, w, b).unwrap();
        for i in 0..3 {
            assert_eq!(tape.value(e_x).at(i, 0), 0.25);
            assert_eq!(tape.value(e_x).at(i, 1), -0.75);
        }
    }

    #[test]
    fn identity_tokenizer_transposes_the_window() {
        let mut tape: Tape<f64> = Tape::new();
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
        let eye = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let b = tape.constant(Tensor::zeros(vec![1, 2]));
        let e_x = variate_tokenize(&mut tape, x, eye, b).unwrap();
        assert_eq!(tape.value(e_x).data(), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn phase_carrier_replicates_one_row_across_variates() {
        let mut tape: Tape<f64> = Tape::new();
        let table = tape.constant(
            Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap(),
        );
        let carrier = phase_carrier(&mut tape, table, 1, 3).unwrap();
        let v = tape.value(carrier);
        assert_eq!(v.shape(), &[3, 2]);
        for i in 0..3 {
            assert_eq!(v.at(i, 0), 3.0);
            assert_eq!(v.at(i, 1), 4.0);
        }
    }

    #[test]
    fn amplitude_carrier_reshapes_row_major() {
        let mut tape: Tape<f64> = Tape::new();
        let table = tape.constant(
            Tensor::from_rows(&[vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]]).unwrap(),
        );
        let carrier = amplitude_carrier(&mut tape, table, 0, 2, 2).unwrap();
        assert_eq!(tape.value(carrier).data(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(tape.value(carrier).shape(), &[2, 2]);
    }

    #[test]
    fn carrier_gradients_touch_only_the_indexed_row() {
        for t in [0usize, 2, 7] {
            let mut tape: Tape<f64> = Tape::new();
            let mut params = vec![
                Parameter::new("phase", Tensor::zeros(vec![8, 4]).map(|_| 0.3)),
                Parameter::new("amplitude", Tensor::zeros(vec![8, 12]).map(|_| -0.2)),
            ];
            let omega_p = tape.param(0, &params[0].value);
            let omega_a = tape.param(1, &params[1].value);
            let ep = phase_carrier(&mut tape, omega_p, t, 3).unwrap();
            let ea = amplitude_carrier(&mut tape, omega_a, t, 3, 4).unwrap();
            let sum = tape.add(ep, ea).unwrap();
            let loss = tape.mean_sq(sum).unwrap();
            tape.backward(loss).unwrap();
            tape.accumulate_param_grads(&mut params);
            for p in &params {
                for row in 0..8 {
                    let touched = (0..p.grad.cols()).any(|j| p.grad.at(row, j) != 0.0);
                    assert_eq!(touched, row == t, "{} row {row} (t = {t})", p.name);
                }
            }
        }
    }

    #[test]
    fn modulate_matches_scalar_oracle() {
        // d=1, unit weights, dropout off: W3·(SiLU(1)·2) = 1.462117.
        let cfg = {
            let mut c = tiny_config();
            c.embed_dim = 1;
            c
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape: Tape<f64> = Tape::new();
        let e_x = tape.constant(Tensor::new(vec![1, 1], vec![1.0]).unwrap());
        let s = tape.constant(Tensor::new(vec![1, 1], vec![2.0]).unwrap());
        let unit = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let w1 = tape.constant(unit.clone());
        let w2 = tape.constant(unit.clone());
        let w3 = tape.constant(unit);
        let out = modulate(&mut tape, e_x, s, [w1, w2, w3], &cfg, true, &mut rng).unwrap();
        assert!((tape.value(out).data()[0] - 1.462117).abs() < 1e-6);
    }

    #[test]
    fn modulate_annihilates_on_zero_carrier_or_zero_tokens() {
        let cfg = {
            let mut c = tiny_config();
            c.embed_dim = 2;
            c.activation = ActKind::Silu;
            c
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape: Tape<f64> = Tape::new();
        let w = Tensor::from_rows(&[vec![0.7, -0.3], vec![0.2, 0.9]]).unwrap();
        let w1 = tape.constant(w.clone());
        let w2 = tape.constant(w.clone());
        let w3 = tape.constant(w);
        let tokens = tape.constant(Tensor::from_rows(&[vec![1.0, -2.0]]).unwrap());
        let zeros = tape.constant(Tensor::zeros(vec![1, 2]));
        let gated = modulate(&mut tape, tokens, zeros, [w1, w2, w3], &cfg, true, &mut rng).unwrap();
        assert!(tape.value(gated).data().iter().all(|&v| v == 0.0));
        let silu_zero =
            modulate(&mut tape, zeros, tokens, [w1, w2, w3], &cfg, true, &mut rng).unwrap();
        assert!(tape.value(silu_zero).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dropout_placements_agree_when_the_mask_commutes() {
        // The two published formulations put dropout on opposite sides
        // of the Hadamard product. An elementwise mask commutes with an
        // elementwise product, so with the same seed (and a rate of 0.5,
        // whose survivor scale of exactly 2 rounds identically in either
        // association) both placements must produce bit-identical
        // output. This pins the flag to a pure graph-order choice with
        // no hidden semantic drift.
        let mut cfg = tiny_config();
        cfg.dropout_rate = 0.5;
        let params: ModelParams<f64> = ModelParams::init(&cfg, 9).unwrap();
        let x = window(&cfg, 1);
        let run = |cfg: &ModelConfig| {
            let mut rng = ChaCha8Rng::seed_from_u64(33);
            let mut tape: Tape<f64> = Tape::new();
            let (out, _) = forward(&mut tape, &params, cfg, &x, 5, true, &mut rng).unwrap();
            tape.value(out).clone()
        };
        let after = run(&cfg);
        let mut before_cfg = cfg.clone();
        before_cfg.dropout_before_product = true;
        let before = run(&before_cfg);
        assert!(after
            .data()
            .iter()
            .zip(before.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn forward_output_shape_is_horizon_by_channels() {
        for instance_norm in [false, true] {
            let mut cfg = tiny_config();
            cfg.instance_norm = instance_norm;
            let params: ModelParams<f64> = ModelParams::init(&cfg, 4).unwrap();
            let x = window(&cfg, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut tape: Tape<f64> = Tape::new();
            let (out, acts) = forward(&mut tape, &params, &cfg, &x, 17, false, &mut rng).unwrap();
            assert_eq!(tape.value(out).shape(), &[cfg.horizon, cfg.channels]);
            assert_eq!(acts.e_x.shape(), &[cfg.channels, cfg.embed_dim]);
            assert_eq!(acts.norm_mu.is_some(), instance_norm);
        }
    }

    #[test]
    fn disabling_phase_makes_fusion_equal_amplitude_path() {
        let mut cfg = tiny_config();
        cfg.use_phase = false;
        let params: ModelParams<f64> = ModelParams::init(&cfg, 11).unwrap();
        let x = window(&cfg, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape: Tape<f64> = Tape::new();
        let (_, acts) = forward(&mut tape, &params, &cfg, &x, 4, false, &mut rng).unwrap();
        assert!(acts.m_p.is_none());
        let m_a = acts.m_a.expect("amplitude path is on");
        assert!(acts
            .m_x
            .data()
            .iter()
            .zip(m_a.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn modulator_off_reduces_to_plain_mlp_on_tokens() {
        let mut cfg = tiny_config();
        cfg.use_modulator = false;
        let params: ModelParams<f64> = ModelParams::init(&cfg, 21).unwrap();
        let x = window(&cfg, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape: Tape<f64> = Tape::new();
        let (out, _) = forward(&mut tape, &params, &cfg, &x, 9, false, &mut rng).unwrap();

        // Reference composition: tokenize then the two head layers,
        // assembled by hand from the same parameters.
        let mut ref_tape: Tape<f64> = Tape::new();
        let xid = ref_tape.constant(x.clone());
        let tok_w = ref_tape.constant(params.by_name("tokenizer.weight").unwrap().value.clone());
        let tok_b = ref_tape.constant(params.by_name("tokenizer.bias").unwrap().value.clone());
        let e_x = variate_tokenize(&mut ref_tape, xid, tok_w, tok_b).unwrap();
        let hw = ref_tape.constant(params.by_name("head.hidden.weight").unwrap().value.clone());
        let hb = ref_tape.constant(params.by_name("head.hidden.bias").unwrap().value.clone());
        let h1 = ref_tape.matmul(e_x, hw).unwrap();
        let h1 = ref_tape.add_row(h1, hb).unwrap();
        let h1 = ref_tape.activation(h1, cfg.activation);
        let ow = ref_tape.constant(params.by_name("head.out.weight").unwrap().value.clone());
        let ob = ref_tape.constant(params.by_name("head.out.bias").unwrap().value.clone());
        let o = ref_tape.matmul(h1, ow).unwrap();
        let o = ref_tape.add_row(o, ob).unwrap();
        let reference = ref_tape.transpose(o);

        assert_eq!(
            tape.value(out).data(),
            ref_tape.value(reference).data()
        );
    }

    #[test]
    fn forward_is_bit_identical_under_a_fixed_seed() {
        let mut cfg = tiny_config();
        cfg.dropout_rate = 0.4;
        cfg.instance_norm = true;
        let params: ModelParams<f64> = ModelParams::init(&cfg, 13).unwrap();
        let x = window(&cfg, 6);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(77);
            let mut tape: Tape<f64> = Tape::new();
            let (out, _) = forward(&mut tape, &params, &cfg, &x, 23, true, &mut rng).unwrap();
            tape.value(out).clone()
        };
        let a = run();
        let b = run();
        assert!(a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn non_finite_input_is_reported_with_stage() {
        let cfg = tiny_config();
        let params: ModelParams<f64> = ModelParams::init(&cfg, 1).unwrap();
        let mut x = window(&cfg, 7);
        x.data_mut()[3] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape: Tape<f64> = Tape::new();
        let err = forward(&mut tape, &params, &cfg, &x, 0, false, &mut rng)
            .map(|_| ())
            .unwrap_err();
        assert!(matches!(err, PamError::Numeric { ref stage } if stage == "input"), "{err}");
    }

    #[test]
    fn forward_rejects_mis_shaped_windows() {
        let cfg = tiny_config();
        let params: ModelParams<f64> = ModelParams::init(&cfg, 1).unwrap();
        let x: Tensor<f64> = Tensor::zeros(vec![cfg.lookback + 1, cfg.channels]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape: Tape<f64> = Tape::new();
        assert!(matches!(
            forward(&mut tape, &params, &cfg, &x, 0, false, &mut rng),
            Err(PamError::Dimension { op: "forward", .. })
        ));
    }
}
