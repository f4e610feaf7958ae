use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FfnKind {
    /// `h_o = f(h·W_in)·W_out`
    Standard,
    /// `h_o = (f(h·W_in) ⊙ (h·W_up))·W_out`, with `W_out` playing the role of `W_d`.
    Gated,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub max_seq: usize,
    pub ffn_kind: FfnKind,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_layers: 4,
            d_model: 64,
            d_ffn: 256,
            n_heads: 4,
            vocab_size: 0,
            max_seq: 32,
            ffn_kind: FfnKind::Standard,
            activation: Activation::GeluNew,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Gated FFN with SiLU, the LLaMA-style pairing.
    pub fn gated(mut self) -> Self {
        self.ffn_kind = FfnKind::Gated;
        self.activation = Activation::Silu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_layers == 0 || self.d_model == 0 || self.d_ffn == 0 || self.n_heads == 0 {
            return bad("layer count and widths must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad("n_heads must divide d_model");
        }
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive");
        }
        if self.max_seq == 0 {
            return bad("max_seq must be positive");
        }
        Ok(())
    }

    /// Edit layer at roughly 3/8 depth: `⌈3·n_layers/8⌉`.
    pub fn default_edit_layer(&self) -> usize {
        (3 * self.n_layers).div_ceil(8).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_layer_defaults() {
        let mut c = ModelConfig::default();
        assert_eq!(c.default_edit_layer(), 2);
        c.n_layers = 48;
        assert_eq!(c.default_edit_layer(), 18);
        c.n_layers = 1;
        assert_eq!(c.default_edit_layer(), 1);
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig { vocab_size: 10, ..Default::default() };
        assert!(c.validate().is_ok());
        c.n_heads = 5;
        assert!(c.validate().is_err());
        c.n_heads = 4;
        c.vocab_size = 0;
        assert!(c.validate().is_err());
    }
}
