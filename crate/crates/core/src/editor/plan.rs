use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::editor::NoisePolicy;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// Everything that controls one edit run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditPlan {
    /// Layer whose output receives δ (1-based).
    pub layer: usize,
    /// Ascending layers whose value projections are updated; ends at `layer`.
    pub critical_layers: Vec<usize>,
    pub opt_steps: usize,
    pub learning_rate: f64,
    /// δ is rescaled after every step so that ‖δ‖ ≤ clamp_factor·‖h‖.
    pub clamp_factor: f64,
    pub stop_threshold: f64,
    pub noise: NoisePolicy,
    /// Ridge added to the key covariance; `None` uses `1e-4·trace(C)/d_ffn`.
    pub covariance_ridge: Option<f64>,
    /// Weight of the covariance term in the multi-layer normal equations.
    pub memit_regularizer: f64,
    /// Texts prepended to the edit prompt when averaging keys; "" is the bare prompt.
    pub key_prefixes: Vec<String>,
}

impl EditPlan {
    /// Defaults for a model: edit at ⌈3n/8⌉ and spread over that layer and the
    /// one below it, without noise.
    pub fn for_model(config: &ModelConfig) -> Self {
        let layer = config.default_edit_layer();
        Self {
            layer,
            critical_layers: (layer.saturating_sub(1).max(1)..=layer).collect(),
            opt_steps: 25,
            learning_rate: 2.0,
            clamp_factor: 4.0,
            stop_threshold: 5e-2,
            noise: NoisePolicy::none(),
            covariance_ridge: None,
            memit_regularizer: 1.0,
            key_prefixes: vec![String::new()],
        }
    }

    pub fn with_noise(mut self, noise: NoisePolicy) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.layer == 0 || self.layer > config.n_layers {
            return bad(format!("edit layer {} outside 1..={}", self.layer, config.n_layers));
        }
        if self.critical_layers.is_empty() {
            return bad("critical_layers is empty".into());
        }
        if self.critical_layers.windows(2).any(|w| w[0] >= w[1]) {
            return bad("critical_layers must be strictly ascending".into());
        }
        if self.critical_layers[0] == 0 || self.critical_layers.last() != Some(&self.layer) {
            return bad(format!("critical_layers must be 1-based and end at layer {}", self.layer));
        }
        if self.opt_steps == 0 {
            return bad("opt_steps must be at least 1".into());
        }
        if !(self.clamp_factor > 0.0) {
            return bad("clamp_factor must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if !(self.memit_regularizer >= 0.0) {
            return bad("memit_regularizer must be non-negative".into());
        }
        if matches!(self.covariance_ridge, Some(r) if !(r >= 0.0)) {
            return bad("covariance_ridge must be non-negative".into());
        }
        if self.key_prefixes.is_empty() {
            return bad("key_prefixes needs at least one entry".into());
        }
        self.noise.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
