use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_scaled, ModelBundle, NoiseDistribution};
use crate::numerics::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NoiseVariant {
    #[serde(rename = "DNE")]
    Dne,
    #[serde(rename = "SNE")]
    Sne,
    #[serde(rename = "UN")]
    Un,
    #[serde(rename = "RNP")]
    Rnp,
    #[serde(rename = "NT")]
    Nt,
    #[serde(rename = "NE")]
    Ne,
    #[serde(rename = "NONE")]
    None,
}

impl NoiseVariant {
    pub const ALL: [NoiseVariant; 7] = [Self::Dne, Self::Sne, Self::Un, Self::Rnp, Self::Nt, Self::Ne, Self::None];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dne => "DNE",
            Self::Sne => "SNE",
            Self::Un => "UN",
            Self::Rnp => "RNP",
            Self::Nt => "NT",
            Self::Ne => "NE",
            Self::None => "NONE",
        }
    }
}

impl fmt::Display for NoiseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRange {
    /// Layers `1..=L`.
    Deep,
    /// Layer `L` only.
    Shallow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionRule {
    LastSubject,
    /// One uniformly chosen prompt position, redrawn every step.
    RandomToken,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    FfnActivation,
    Parameters,
    Embeddings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePolicy {
    pub distribution: NoiseDistribution,
    pub alpha: f64,
    pub layer_range: LayerRange,
    pub position_rule: PositionRule,
    pub target: NoiseTarget,
}

impl NoisePolicy {
    pub fn none() -> Self {
        Self {
            distribution: NoiseDistribution::None,
            alpha: 0.0,
            layer_range: LayerRange::Deep,
            position_rule: PositionRule::LastSubject,
            target: NoiseTarget::FfnActivation,
        }
    }

    pub fn is_active(&self) -> bool {
        self.distribution != NoiseDistribution::None && self.alpha != 0.0
    }

    /// Layers that receive activation noise when editing at `edit_layer`.
    pub fn layers(&self, edit_layer: usize) -> Vec<usize> {
        match self.layer_range {
            LayerRange::Deep => (1..=edit_layer).collect(),
            LayerRange::Shallow => vec![edit_layer],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "noise alpha must be finite and non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

impl Default for NoisePolicy {
    fn default() -> Self {
        Self::none()
    }
}

pub fn build_noise_policy(variant: NoiseVariant, alpha: f64, edit_layer: usize) -> Result<NoisePolicy> {
    if edit_layer == 0 {
        return Err(Error::InvalidConfig("edit layer is 1-based".into()));
    }
    let dne = NoisePolicy {
        distribution: NoiseDistribution::Gaussian,
        alpha,
        layer_range: LayerRange::Deep,
        position_rule: PositionRule::LastSubject,
        target: NoiseTarget::FfnActivation,
    };
    let policy = match variant {
        NoiseVariant::Dne => dne,
        NoiseVariant::Sne => NoisePolicy { layer_range: LayerRange::Shallow, ..dne },
        NoiseVariant::Un => NoisePolicy { distribution: NoiseDistribution::Uniform, ..dne },
        NoiseVariant::Rnp => NoisePolicy { position_rule: PositionRule::RandomToken, ..dne },
        NoiseVariant::Nt => {
            NoisePolicy { distribution: NoiseDistribution::Uniform, target: NoiseTarget::Parameters, ..dne }
        }
        NoiseVariant::Ne => {
            NoisePolicy { distribution: NoiseDistribution::Uniform, target: NoiseTarget::Embeddings, ..dne }
        }
        NoiseVariant::None => NoisePolicy::none(),
    };
    policy.validate()?;
    Ok(policy)
}

/// `α·ε` (gaussian) or `α·u` with u uniform on (−1, 1); fresh draws each call.
pub fn sample_noise(policy: &NoisePolicy, dim: usize, rng: &mut RngStream) -> Vec<f64> {
    sample_scaled(policy.distribution, policy.alpha, dim, rng)
}

/// Noise magnitude for a batch of `batch_size` edits: 0.5 at one edit down to
/// 0.1 at ten thousand, linear in log10 of the batch size between decades.
pub fn default_alpha(batch_size: usize) -> f64 {
    const BY_DECADE: [f64; 5] = [0.5, 0.4, 0.3, 0.2, 0.1];
    let x = (batch_size.max(1) as f64).log10().min(4.0);
    let lo = x.floor() as usize;
    if lo >= 4 {
        return BY_DECADE[4];
    }
    let t = x - lo as f64;
    BY_DECADE[lo] + t * (BY_DECADE[lo + 1] - BY_DECADE[lo])
}

/// Copy of `model` with every tensor perturbed by `α·std(tensor)·u`, u uniform
/// on (−1, 1). Returns the model unchanged when the policy is inactive.
pub fn perturb_parameters(model: &ModelBundle, policy: &NoisePolicy, rng: &mut RngStream) -> ModelBundle {
    let mut out = model.clone();
    if !policy.is_active() {
        return out;
    }
    for t in out.tensors_mut() {
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let std = (t.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let noise = sample_scaled(policy.distribution, policy.alpha * std, t.len(), rng);
        for (x, e) in t.data_mut().iter_mut().zip(noise) {
            *x += e;
        }
    }
    out
}
