//! Model hyperparameters and their validation rules.

use serde::{Deserialize, Serialize};

use crate::error::{PamError, Result};
use crate::tape::ActKind;

/// Architecture and regularization settings for one model instance.
///
/// `for_dims` fills in the published defaults (embed dim 512, dropout
/// 0.5, SiLU, both carrier paths on, instance normalization on);
/// experiments override from there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Lookback window length L.
    pub lookback: usize,
    /// Forecast horizon H.
    pub horizon: usize,
    /// Number of variates N.
    pub channels: usize,
    /// Token embedding width d.
    pub embed_dim: usize,
    /// Cycle length c indexing the carrier tables.
    pub cycle_len: usize,
    /// Dropout probability inside the modulator, in [0, 1).
    pub dropout_rate: f64,
    /// Nonlinearity used in the modulator and the head MLP.
    pub activation: ActKind,
    /// Enable the phase carrier path.
    pub use_phase: bool,
    /// Enable the amplitude carrier path.
    pub use_amplitude: bool,
    /// Replace learned carrier tables with fixed interleaved sin/cos
    /// tables (frozen). Requires an even `embed_dim`.
    pub sinusoidal_carriers: bool,
    /// Enable the modulator entirely; when false the head consumes the
    /// raw variate tokens and no carriers exist.
    pub use_modulator: bool,
    /// Use one set of W1/W2/W3 for both carrier paths.
    pub share_modulator_weights: bool,
    /// Apply dropout to the activated branch before the Hadamard
    /// product instead of after it (the two published formulations
    /// disagree; "after" is the default).
    pub dropout_before_product: bool,
    /// Standardize each window per channel on the way in and invert the
    /// mapping on the way out.
    pub instance_norm: bool,
    /// Variance floor ε inside the normalization square roots.
    pub norm_eps: f64,
}

impl ModelConfig {
    /// Default hyperparameters for the given problem dimensions.
    pub fn for_dims(lookback: usize, horizon: usize, channels: usize, cycle_len: usize) -> Self {
        ModelConfig {
            lookback,
            horizon,
            channels,
            embed_dim: 512,
            cycle_len,
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
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("lookback", self.lookback),
            ("horizon", self.horizon),
            ("channels", self.channels),
            ("embed_dim", self.embed_dim),
            ("cycle_len", self.cycle_len),
        ];
        for (name, value) in dims {
            if value == 0 {
                return Err(PamError::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(PamError::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if self.use_modulator && !self.use_phase && !self.use_amplitude {
            return Err(PamError::Config(
                "use_modulator requires at least one of use_phase/use_amplitude".to_string(),
            ));
        }
        if self.sinusoidal_carriers && self.embed_dim % 2 != 0 {
            return Err(PamError::Config(format!(
                "sinusoidal carriers interleave sin/cos pairs and need an even embed_dim, got {}",
                self.embed_dim
            )));
        }
        if self.instance_norm && self.norm_eps <= 0.0 {
            return Err(PamError::Config(format!(
                "norm_eps must be positive, got {}",
                self.norm_eps
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_match_published_settings() {
        let cfg = ModelConfig::for_dims(96, 24, 7, 24);
        cfg.validate().unwrap();
        assert_eq!(cfg.embed_dim, 512);
        assert_eq!(cfg.dropout_rate, 0.5);
        assert_eq!(cfg.activation, ActKind::Silu);
        assert!(cfg.instance_norm);
        assert!(!cfg.dropout_before_product);
        assert!(!cfg.share_modulator_weights);
        assert_eq!(cfg.norm_eps, 1e-5);
    }

    #[test]
    fn validation_rejects_degenerate_settings() {
        let base = ModelConfig::for_dims(8, 4, 3, 12);

        let mut zero_dim = base.clone();
        zero_dim.channels = 0;
        assert!(zero_dim.validate().is_err());

        let mut bad_dropout = base.clone();
        bad_dropout.dropout_rate = 1.0;
        assert!(bad_dropout.validate().is_err());

        let mut no_paths = base.clone();
        no_paths.use_phase = false;
        no_paths.use_amplitude = false;
        assert!(no_paths.validate().is_err());

        let mut odd_sinusoidal = base.clone();
        odd_sinusoidal.embed_dim = 7;
        odd_sinusoidal.sinusoidal_carriers = true;
        assert!(odd_sinusoidal.validate().is_err());

        let mut bad_eps = base;
        bad_eps.norm_eps = 0.0;
        assert!(bad_eps.validate().is_err());
    }

    #[test]
    fn modulator_off_permits_disabling_both_paths() {
        let mut cfg = ModelConfig::for_dims(8, 4, 3, 12);
        cfg.use_modulator = false;
        cfg.use_phase = false;
        cfg.use_amplitude = false;
        cfg.validate().unwrap();
    }
}
