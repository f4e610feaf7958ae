use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n / Σ(1/vᵢ)` over strictly positive values.
pub fn harmonic_score(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(&bad) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::NonPositiveInput(bad));
    }
    Ok(values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>())
}

/// Harmonic score that is 0 when any constituent is 0, as a fully failed
/// constituent drives the harmonic mean to its limit.
pub fn harmonic_or_zero(values: &[f64]) -> f64 {
    if values.contains(&0.0) {
        0.0
    } else {
        harmonic_score(values).unwrap_or(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiKind {
    /// `1.96·√(p̂(1−p̂)/n)·100` with p̂ the sample mean of values in [0, 1].
    Proportion,
    /// `1.96·s/√n` with s the sample standard deviation, in the samples' units.
    Mean,
}

/// Half-width of the 95% normal-approximation confidence interval.
pub fn confidence_interval(samples: &[f64], kind: CiKind) -> Result<f64> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientSamples(n));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    Ok(match kind {
        CiKind::Proportion => {
            let p = mean.clamp(0.0, 1.0);
            1.96 * (p * (1.0 - p) / nf).sqrt() * 100.0
        }
        CiKind::Mean => {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            1.96 * (var / nf).sqrt()
        }
    })
}
