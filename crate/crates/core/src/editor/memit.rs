use std::collections::BTreeMap;
use std::path::Path;

use crate::editor::{compute_delta, estimate_key_at, read_hidden, validate_batch, DeltaOutcome, EditBatch, EditPlan};
use crate::error::{Error, Result};
use crate::model::{read_tensors, write_tensors, ModelBundle, ModelConfig, Vocab};
use crate::numerics::{Cholesky, Tensor};

/// Additive updates to the value projections of some layers.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightDelta {
    /// 1-based layer → `d_ffn × d_model` update.
    pub updates: BTreeMap<usize, Tensor>,
}

impl WeightDelta {
    pub fn zeros(config: &ModelConfig, layers: &[usize]) -> Self {
        let updates = layers.iter().map(|&l| (l, Tensor::zeros(&[config.d_ffn, config.d_model]))).collect();
        Self { updates }
    }

    pub fn add(&mut self, layer: usize, update: &Tensor) -> Result<()> {
        let slot = self
            .updates
            .get_mut(&layer)
            .ok_or_else(|| Error::InvalidConfig(format!("layer {layer} is not part of this delta")))?;
        slot.add_assign(update)
    }

    pub fn max_abs(&self) -> f64 {
        self.updates.values().map(Tensor::max_abs).fold(0.0, f64::max)
    }

    /// Adds every update to the model's value projections.
    pub fn apply(&self, model: &mut ModelBundle) -> Result<()> {
        for (&l, u) in &self.updates {
            if model.value_projection(l)?.shape() != u.shape() {
                return Err(Error::DimensionMismatch(format!("update for layer {l} has shape {:?}", u.shape())));
            }
        }
        for (&l, u) in &self.updates {
            model.value_projection_mut(l)?.add_assign(u)?;
        }
        Ok(())
    }

    fn tensor_name(layer: usize) -> String {
        format!("layer{layer}.ffn.w_out")
    }

    /// Writes in the checkpoint weight format with the delta flag set.
    pub fn save(&self, dir: &Path, config: &ModelConfig) -> Result<()> {
        let named: Vec<(String, &Tensor)> = self.updates.iter().map(|(&l, t)| (Self::tensor_name(l), t)).collect();
        write_tensors(dir, config, true, &named)
    }

    pub fn load(dir: &Path) -> Result<(ModelConfig, Self)> {
        let (header, tensors) = read_tensors(dir)?;
        if !header.delta {
            return Err(Error::Checkpoint("not a weight delta".into()));
        }
        let mut updates = BTreeMap::new();
        for (name, t) in tensors {
            let layer = name
                .strip_prefix("layer")
                .and_then(|r| r.strip_suffix(".ffn.w_out"))
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name:?} in delta")))?;
            updates.insert(layer, t);
        }
        Ok((header.config, Self { updates }))
    }
}

/// One layer of the multi-layer update: `Δ = (λ·C + K·Kᵀ)⁻¹ · K · Rᵀ`.
///
/// `keys` is `d_ffn × n` (one column per edit), `residuals` is `d_model × n`.
/// Returns the `d_ffn × d_model` update.
pub fn memit_layer_update(covariance: &Tensor, lambda: f64, keys: &Tensor, residuals: &Tensor) -> Result<Tensor> {
    let f = covariance.rows();
    if keys.rows() != f || residuals.cols() != keys.cols() {
        return Err(Error::DimensionMismatch(format!(
            "covariance {:?}, keys {:?}, residuals {:?}",
            covariance.shape(),
            keys.shape(),
            residuals.shape()
        )));
    }
    let mut a = covariance.scale(lambda).add(&keys.matmul(&keys.transpose())?)?;
    // exact symmetry for the factorization
    for i in 0..f {
        for j in (i + 1)..f {
            let m = 0.5 * (a.get(i, j) + a.get(j, i));
            a.set(i, j, m);
            a.set(j, i, m);
        }
    }
    let b = keys.matmul(&residuals.transpose())?;
    let chol = Cholesky::factor(&a).map_err(|_| Error::SingularSystem)?;
    chol.solve(&b)
}

#[derive(Clone, Debug)]
pub struct MemitOutcome {
    pub delta: WeightDelta,
    /// Per-record δ optimization results, in batch order.
    pub deltas: Vec<DeltaOutcome>,
}

/// Spreads every record's δ over the plan's critical layers.
///
/// `covariances` must hold a key covariance for each critical layer. The
/// model is not modified; apply the returned delta to commit the edit.
pub fn apply_memit(
    model: &ModelBundle,
    vocab: &Vocab,
    batch: &EditBatch,
    plan: &EditPlan,
    covariances: &BTreeMap<usize, Tensor>,
) -> Result<MemitOutcome> {
    validate_batch(batch).map_err(Error::Conflict)?;
    plan.validate(&model.config)?;
    if batch.records.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (index, r) in batch.records.iter().enumerate() {
        r.check().map_err(|e| Error::Pair { index, source: Box::new(Error::InvalidConfig(e)) })?;
    }
    for l in &plan.critical_layers {
        if !covariances.contains_key(l) {
            return Err(Error::InvalidConfig(format!("no covariance for layer {l}")));
        }
    }

    let deltas = batch
        .records
        .iter()
        .map(|r| compute_delta(model, vocab, r, plan, batch.master_seed))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<Vec<f64>> = deltas.iter().map(DeltaOutcome::target_hidden).collect();

    let (d, f, n) = (model.config.d_model, model.config.d_ffn, batch.records.len());
    let mut current = model.clone();
    let mut total = WeightDelta::zeros(&model.config, &plan.critical_layers);
    for (i, &layer) in plan.critical_layers.iter().enumerate() {
        let remaining = (plan.critical_layers.len() - i) as f64;
        let mut keys = Tensor::zeros(&[f, n]);
        let mut resid = Tensor::zeros(&[d, n]);
        for (j, (record, outcome)) in batch.records.iter().zip(&deltas).enumerate() {
            let k = estimate_key_at(&current, vocab, &record.edit_prompt, &record.subject, layer, &plan.key_prefixes)?;
            let (h, _) = read_hidden(&current, &outcome.site.tokens, plan.layer, outcome.site.position)?;
            for (row, kv) in k.iter().enumerate() {
                keys.set(row, j, *kv);
            }
            for (row, (z, hv)) in targets[j].iter().zip(&h).enumerate() {
                resid.set(row, j, (z - hv) / remaining);
            }
        }
        let update = memit_layer_update(&covariances[&layer], plan.memit_regularizer, &keys, &resid)?;
        current.value_projection_mut(layer)?.add_assign(&update)?;
        total.add(layer, &update)?;
    }
    Ok(MemitOutcome { delta: total, deltas })
}
