use std::collections::BTreeMap;

use crate::editor::{EditPlan, EditSite, FactRecord};
use crate::error::{Error, Result};
use crate::model::forward::{build, ParamMode};
use crate::model::{forward, Intervention, ModelBundle, Vocab};
use crate::numerics::{Cholesky, Graph, Tensor};

/// Key at `layer` for the record's edit prompt: the mean value-projection
/// input at the last subject token over the plan's prefixes.
pub fn estimate_key(model: &ModelBundle, vocab: &Vocab, record: &FactRecord, plan: &EditPlan) -> Result<Vec<f64>> {
    estimate_key_at(model, vocab, &record.edit_prompt, &record.subject, plan.layer, &plan.key_prefixes)
}

pub fn estimate_key_at(
    model: &ModelBundle,
    vocab: &Vocab,
    prompt: &str,
    subject: &str,
    layer: usize,
    prefixes: &[String],
) -> Result<Vec<f64>> {
    if prefixes.is_empty() {
        return Err(Error::InvalidConfig("need at least one key prefix".into()));
    }
    let mut sum = vec![0.0; model.config.d_ffn];
    for prefix in prefixes {
        let text = if prefix.is_empty() { prompt.to_string() } else { format!("{prefix} {prompt}") };
        let site = EditSite::locate(vocab, &text, subject)?;
        let trace = forward(model, &site.tokens, &[Intervention::ReadAct { layer, position: site.position }])?;
        for (s, k) in sum.iter_mut().zip(&trace.activations[0].key) {
            *s += k;
        }
    }
    let n = prefixes.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// `(1/N)·Σ k·kᵀ + ridge·I` over the rows of `keys`, stored row-major with
/// `dim` columns.
pub fn covariance_from_keys(keys: &[f64], dim: usize, ridge: f64) -> Result<Tensor> {
    if dim == 0 || !keys.len().is_multiple_of(dim) {
        return Err(Error::DimensionMismatch(format!("{} key values for dimension {dim}", keys.len())));
    }
    let n = keys.len() / dim;
    let mut c = if n == 0 {
        Tensor::zeros(&[dim, dim])
    } else {
        let k = Tensor::matrix(n, dim, keys.to_vec())?;
        k.transpose().matmul(&k)?.scale(1.0 / n as f64)
    };
    for i in 0..dim {
        let v = c.get(i, i) + ridge;
        c.set(i, i, v);
    }
    Ok(c)
}

/// Keys of every token of `corpus` at `layer`, row-major with `d_ffn` columns.
pub fn collect_keys(model: &ModelBundle, corpus: &[Vec<u32>], layer: usize) -> Result<Vec<f64>> {
    model.check_layer(layer)?;
    let mut data = Vec::new();
    for chunk in corpus.chunks(32) {
        let seqs: Vec<&[u32]> = chunk.iter().map(Vec::as_slice).filter(|s| !s.is_empty()).collect();
        if seqs.is_empty() {
            continue;
        }
        let mut g = Graph::new();
        let built = build(&mut g, model, ParamMode::Frozen, &seqs, &[], None)?;
        data.extend_from_slice(g.value(built.layers[layer - 1].key).data());
    }
    Ok(data)
}

/// Key second-moment matrix of `corpus` at `layer` plus `ridge·I`.
pub fn estimate_covariance(model: &ModelBundle, corpus: &[Vec<u32>], layer: usize, ridge: f64) -> Result<Tensor> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidConfig(format!("ridge must be non-negative, got {ridge}")));
    }
    let keys = collect_keys(model, corpus, layer)?;
    checked(covariance_from_keys(&keys, model.config.d_ffn, ridge)?, ridge)
}

fn checked(c: Tensor, ridge: f64) -> Result<Tensor> {
    if ridge == 0.0 && Cholesky::factor(&c).is_err() {
        return Err(Error::SingularCovariance);
    }
    Ok(c)
}

/// `1e-4·trace(C)/dim`, small enough to leave well-conditioned directions alone.
pub fn default_ridge(second_moment: &Tensor) -> f64 {
    let dim = second_moment.rows();
    let trace: f64 = (0..dim).map(|i| second_moment.get(i, i)).sum();
    1e-4 * trace / dim as f64
}

/// Covariance for each layer. `ridge = None` picks [`default_ridge`] per layer.
pub fn layer_covariances(
    model: &ModelBundle,
    corpus: &[Vec<u32>],
    layers: &[usize],
    ridge: Option<f64>,
) -> Result<BTreeMap<usize, Tensor>> {
    let mut out = BTreeMap::new();
    for &l in layers {
        let mut c = covariance_from_keys(&collect_keys(model, corpus, l)?, model.config.d_ffn, 0.0)?;
        let r = ridge.unwrap_or_else(|| default_ridge(&c));
        for i in 0..c.rows() {
            let v = c.get(i, i) + r;
            c.set(i, i, v);
        }
        out.insert(l, checked(c, r)?);
    }
    Ok(out)
}
