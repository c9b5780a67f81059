//! Parameter store: Xavier-normal initialization with a fixed draw
//! order, the fixed sinusoidal carrier tables, and name-based access
//! for checkpoints.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::ModelConfig;
use crate::error::Result;
use crate::tape::Parameter;
use crate::tensor::{Real, Tensor};

/// Indices of each parameter role inside the flat parameter list.
/// Optional groups exist only when the modulator does; with shared
/// modulator weights the amplitude indices alias the phase indices, so
/// the same tape leaf receives both paths' gradients.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ParamLayout {
    pub tok_w: usize,
    pub tok_b: usize,
    pub carrier_phase: Option<usize>,
    pub carrier_amplitude: Option<usize>,
    pub phase_w: Option<[usize; 3]>,
    pub amp_w: Option<[usize; 3]>,
    pub head_hidden_w: usize,
    pub head_hidden_b: usize,
    pub head_out_w: usize,
    pub head_out_b: usize,
}

/// All trainable state of one model instance, in a stable order:
/// tokenizer, carriers, phase modulator, amplitude modulator, head.
pub struct ModelParams<T> {
    items: Vec<Parameter<T>>,
    layout: ParamLayout,
}

impl<T: Real> ModelParams<T> {
    /// Draws every weight matrix from Normal(0, 2/(fan_in+fan_out)) off
    /// one seeded stream (biases start at zero), so equal (config,
    /// seed) pairs produce bit-identical parameters. Sinusoidal mode
    /// builds fixed frozen carrier tables instead of drawing them.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (l, h) = (config.lookback, config.horizon);
        let (n, d, c) = (config.channels, config.embed_dim, config.cycle_len);

        let mut items: Vec<Parameter<T>> = Vec::new();
        let push = |items: &mut Vec<Parameter<T>>, p: Parameter<T>| -> usize {
            items.push(p);
            items.len() - 1
        };

        let tok_w = push(
            &mut items,
            Parameter::new("tokenizer.weight", xavier(&mut rng, l, d)),
        );
        let tok_b = push(
            &mut items,
            Parameter::new("tokenizer.bias", Tensor::zeros(vec![1, d])),
        );

        let mut carrier_phase = None;
        let mut carrier_amplitude = None;
        let mut phase_w = None;
        let mut amp_w = None;
        if config.use_modulator {
            let (phase_table, amplitude_table) = if config.sinusoidal_carriers {
                (
                    Parameter::frozen("carrier.phase", sinusoidal_phase_table(c, d)),
                    Parameter::frozen("carrier.amplitude", sinusoidal_amplitude_table(c, n, d)),
                )
            } else {
                (
                    Parameter::new("carrier.phase", xavier(&mut rng, c, d)),
                    Parameter::new("carrier.amplitude", xavier(&mut rng, c, n * d)),
                )
            };
            carrier_phase = Some(push(&mut items, phase_table));
            carrier_amplitude = Some(push(&mut items, amplitude_table));

            let pw = [
                push(
                    &mut items,
                    Parameter::new("modulator.phase.w1", xavier(&mut rng, d, d)),
                ),
                push(
                    &mut items,
                    Parameter::new("modulator.phase.w2", xavier(&mut rng, d, d)),
                ),
                push(
                    &mut items,
                    Parameter::new("modulator.phase.w3", xavier(&mut rng, d, d)),
                ),
            ];
            phase_w = Some(pw);
            amp_w = Some(if config.share_modulator_weights {
                pw
            } else {
                [
                    push(
                        &mut items,
                        Parameter::new("modulator.amplitude.w1", xavier(&mut rng, d, d)),
                    ),
                    push(
                        &mut items,
                        Parameter::new("modulator.amplitude.w2", xavier(&mut rng, d, d)),
                    ),
                    push(
                        &mut items,
                        Parameter::new("modulator.amplitude.w3", xavier(&mut rng, d, d)),
                    ),
                ]
            });
        }

        let head_hidden_w = push(
            &mut items,
            Parameter::new("head.hidden.weight", xavier(&mut rng, d, d)),
        );
        let head_hidden_b = push(
            &mut items,
            Parameter::new("head.hidden.bias", Tensor::zeros(vec![1, d])),
        );
        let head_out_w = push(
            &mut items,
            Parameter::new("head.out.weight", xavier(&mut rng, d, h)),
        );
        let head_out_b = push(
            &mut items,
            Parameter::new("head.out.bias", Tensor::zeros(vec![1, h])),
        );

        Ok(ModelParams {
            items,
            layout: ParamLayout {
                tok_w,
                tok_b,
                carrier_phase,
                carrier_amplitude,
                phase_w,
                amp_w,
                head_hidden_w,
                head_hidden_b,
                head_out_w,
                head_out_b,
            },
        })
    }

    pub(crate) fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn items(&self) -> &[Parameter<T>] {
        &self.items
    }

    pub fn items_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.items
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.items.iter().find(|p| p.name == name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut Parameter<T>> {
        self.items.iter_mut().find(|p| p.name == name)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.items {
            p.zero_grad();
        }
    }

    /// Checked assertion that no parameter has gone NaN/Inf (run after
    /// optimizer steps).
    pub fn check_finite(&self) -> Result<()> {
        for p in &self.items {
            p.value
                .check_finite(&format!("parameter `{}`", p.name))?;
        }
        Ok(())
    }
}

/// 2-D weight draw: Normal(0, 2/(rows+cols)).
fn xavier<T: Real, R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor<T> {
    let std = (2.0 / (rows + cols) as f64).sqrt();
    let data: Vec<T> = (0..rows * cols)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            T::from_f64(z * std)
        })
        .collect();
    Tensor::new(vec![rows, cols], data).expect("xavier shape")
}

/// Fixed phase table: row t interleaves sin(2πt/c·f) and cos(2πt/c·f)
/// over d/2 integer frequencies f = 1..d/2.
fn sinusoidal_phase_table<T: Real>(cycle_len: usize, embed_dim: usize) -> Tensor<T> {
    debug_assert_eq!(embed_dim % 2, 0);
    let mut data = Vec::with_capacity(cycle_len * embed_dim);
    for t in 0..cycle_len {
        data.extend(sinusoidal_row::<T>(t, cycle_len, embed_dim));
    }
    Tensor::new(vec![cycle_len, embed_dim], data).expect("sinusoidal phase table shape")
}

/// Fixed amplitude table: the phase row for t tiled across all N
/// variate slots of the c×(N·d) layout.
fn sinusoidal_amplitude_table<T: Real>(
    cycle_len: usize,
    channels: usize,
    embed_dim: usize,
) -> Tensor<T> {
    let mut data = Vec::with_capacity(cycle_len * channels * embed_dim);
    for t in 0..cycle_len {
        let row = sinusoidal_row::<T>(t, cycle_len, embed_dim);
        for _ in 0..channels {
            data.extend(row.iter().copied());
        }
    }
    Tensor::new(vec![cycle_len, channels * embed_dim], data)
        .expect("sinusoidal amplitude table shape")
}

fn sinusoidal_row<T: Real>(t: usize, cycle_len: usize, embed_dim: usize) -> Vec<T> {
    let base = std::f64::consts::TAU * t as f64 / cycle_len as f64;
    let mut row = Vec::with_capacity(embed_dim);
    for k in 0..embed_dim / 2 {
        let angle = base * (k + 1) as f64;
        row.push(T::from_f64(angle.sin()));
        row.push(T::from_f64(angle.cos()));
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        let mut cfg = ModelConfig::for_dims(8, 4, 3, 12);
        cfg.embed_dim = 6;
        cfg.dropout_rate = 0.0;
        cfg
    }

    #[test]
    fn same_seed_gives_bit_identical_parameters() {
        let cfg = tiny_config();
        let a: ModelParams<f32> = ModelParams::init(&cfg, 7).unwrap();
        let b: ModelParams<f32> = ModelParams::init(&cfg, 7).unwrap();
        assert_eq!(a.items.len(), b.items.len());
        for (pa, pb) in a.items().iter().zip(b.items()) {
            assert_eq!(pa.name, pb.name);
            assert!(pa
                .value
                .data()
                .iter()
                .zip(pb.value.data())
                .all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let c: ModelParams<f32> = ModelParams::init(&cfg, 8).unwrap();
        assert!(a.items()[0].value.data() != c.items()[0].value.data());
    }

    #[test]
    fn biases_start_at_zero_and_shapes_follow_config() {
        let cfg = tiny_config();
        let params: ModelParams<f32> = ModelParams::init(&cfg, 1).unwrap();
        assert_eq!(
            params.by_name("tokenizer.weight").unwrap().value.shape(),
            &[8, 6]
        );
        assert_eq!(
            params.by_name("carrier.phase").unwrap().value.shape(),
            &[12, 6]
        );
        assert_eq!(
            params.by_name("carrier.amplitude").unwrap().value.shape(),
            &[12, 18]
        );
        assert_eq!(
            params.by_name("head.out.weight").unwrap().value.shape(),
            &[6, 4]
        );
        for name in ["tokenizer.bias", "head.hidden.bias", "head.out.bias"] {
            let bias = params.by_name(name).unwrap();
            assert!(bias.value.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn xavier_std_matches_formula_at_d64() {
        // 64×64 weight ⇒ std √(2/128) = 0.125; aggregate 25 seeds of
        // one such matrix (102 400 draws) and compare the empirical
        // std, Monte Carlo tolerance 5%.
        let want = (2.0f64 / 128.0).sqrt();
        let mut draws: Vec<f64> = Vec::new();
        for seed in 0..25 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w: Tensor<f64> = xavier(&mut rng, 64, 64);
            draws.extend(w.data().iter().copied());
        }
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!(
            (std - want).abs() / want < 0.05,
            "std {std}, want {want}"
        );
    }

    #[test]
    fn xavier_unit_fan_gives_unit_std() {
        // fan_in = fan_out = 1 ⇒ sampling std √(2/2) = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| xavier::<f64, _>(&mut rng, 1, 1).data()[0])
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!((var.sqrt() - 1.0).abs() < 0.05);
    }

    #[test]
    fn modulator_off_allocates_no_carriers_or_modulators() {
        let mut cfg = tiny_config();
        cfg.use_modulator = false;
        let params: ModelParams<f32> = ModelParams::init(&cfg, 3).unwrap();
        assert!(params.by_name("carrier.phase").is_none());
        assert!(params.by_name("carrier.amplitude").is_none());
        assert!(params
            .items()
            .iter()
            .all(|p| !p.name.starts_with("modulator.")));
        assert!(params.layout().carrier_phase.is_none());
    }

    #[test]
    fn shared_modulator_weights_alias_one_parameter_set() {
        let mut cfg = tiny_config();
        cfg.share_modulator_weights = true;
        let params: ModelParams<f32> = ModelParams::init(&cfg, 3).unwrap();
        assert!(params.by_name("modulator.amplitude.w1").is_none());
        let layout = params.layout();
        assert_eq!(layout.phase_w, layout.amp_w);
    }

    #[test]
    fn sinusoidal_tables_are_frozen_with_unit_rows_at_phase_zero() {
        let mut cfg = tiny_config();
        cfg.sinusoidal_carriers = true;
        let params: ModelParams<f64> = ModelParams::init(&cfg, 3).unwrap();
        let phase = params.by_name("carrier.phase").unwrap();
        assert!(phase.frozen);
        // Row t = 0: every sin column is 0, every cos column is 1.
        for k in 0..cfg.embed_dim / 2 {
            assert_eq!(phase.value.at(0, 2 * k), 0.0);
            assert_eq!(phase.value.at(0, 2 * k + 1), 1.0);
        }
        let amp = params.by_name("carrier.amplitude").unwrap();
        assert!(amp.frozen);
        // Amplitude row tiles the phase row across channels.
        for ch in 0..cfg.channels {
            for j in 0..cfg.embed_dim {
                assert_eq!(
                    amp.value.at(5, ch * cfg.embed_dim + j),
                    phase.value.at(5, j)
                );
            }
        }
    }

    #[test]
    fn finite_check_names_the_offending_parameter() {
        let cfg = tiny_config();
        let mut params: ModelParams<f32> = ModelParams::init(&cfg, 1).unwrap();
        params.check_finite().unwrap();
        params.by_name_mut("head.out.weight").unwrap().value.data_mut()[0] = f32::NAN;
        let err = params.check_finite().unwrap_err();
        assert!(err.to_string().contains("head.out.weight"), "{err}");
    }
}
