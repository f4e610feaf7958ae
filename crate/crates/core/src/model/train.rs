use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::forward::{build, ParamMode};
use crate::model::{ModelBundle, ModelConfig};
use crate::numerics::{CeTarget, Graph, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// `θ ← θ − lr·g`
    Sgd,
    /// Adam with β = (0.9, 0.98), ε = 1e-8, no weight decay.
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { steps: 600, learning_rate: 3e-3, batch_size: 16, optimizer: Optimizer::Adam }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Mean next-token cross-entropy of each step's batch, before the update.
    pub losses: Vec<f64>,
}

impl TrainLog {
    /// Mean loss over consecutive windows of `size` steps.
    pub fn window_means(&self, size: usize) -> Vec<f64> {
        self.losses.chunks(size).filter(|c| c.len() == size).map(|c| c.iter().sum::<f64>() / size as f64).collect()
    }
}

/// Mean next-token cross-entropy of `seqs` and its gradient, in manifest order.
pub fn batch_loss_and_grads(model: &ModelBundle, seqs: &[&[u32]]) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut g = Graph::new();
    let built = build(&mut g, model, ParamMode::Train, seqs, &[], None)?;
    let n_targets: usize = seqs.iter().map(|s| s.len().saturating_sub(1)).sum();
    if n_targets == 0 {
        return Err(Error::InvalidConfig("training sequences need at least two tokens".into()));
    }
    let w = 1.0 / n_targets as f64;
    let mut targets = Vec::with_capacity(n_targets);
    for (seg, s) in built.segments.iter().zip(seqs) {
        for t in 0..s.len() - 1 {
            targets.push(CeTarget { row: seg.start + t, class: s[t + 1] as usize, weight: w });
        }
    }
    let loss = g.cross_entropy(built.logits, &targets);
    let value = g.value(loss).data()[0];
    let mut grads = g.backward(loss);
    let out = built
        .params
        .iter()
        .zip(model.named_tensors())
        .map(|(&v, (_, t))| grads.take(v).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();
    Ok((value, out))
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

/// Trains a freshly initialised model on `corpus` with next-token
/// cross-entropy. Batches are taken in order from a per-epoch shuffle drawn
/// from `rng`, so a run is reproducible from `(config.seed, rng)`.
pub fn train_toy(
    config: ModelConfig,
    corpus: &[Vec<u32>],
    options: &TrainOptions,
    rng: &mut RngStream,
) -> Result<(ModelBundle, TrainLog)> {
    let model = ModelBundle::init(config)?;
    continue_training(model, corpus, options, rng)
}

pub fn continue_training(
    mut model: ModelBundle,
    corpus: &[Vec<u32>],
    options: &TrainOptions,
    rng: &mut RngStream,
) -> Result<(ModelBundle, TrainLog)> {
    if corpus.is_empty() {
        return Err(Error::EmptyInput);
    }
    if options.steps == 0 {
        return Err(Error::InvalidConfig("steps must be at least 1".into()));
    }
    if options.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut cursor = order.len();
    let mut log = TrainLog::default();
    let mut adam = AdamState {
        m: model.named_tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
        v: model.named_tensors().iter().map(|(_, t)| vec![0.0; t.len()]).collect(),
        t: 0,
    };
    let bs = options.batch_size.min(corpus.len());
    for step in 0..options.steps {
        let mut batch: Vec<&[u32]> = Vec::with_capacity(bs);
        while batch.len() < bs {
            if cursor == order.len() {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(&corpus[order[cursor]]);
            cursor += 1;
        }
        let (loss, grads) = batch_loss_and_grads(&model, &batch)?;
        if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFiniteLoss { step });
        }
        log.losses.push(loss);
        apply_update(&mut model, &grads, options, &mut adam);
    }
    Ok((model, log))
}

fn apply_update(model: &mut ModelBundle, grads: &[Vec<f64>], options: &TrainOptions, adam: &mut AdamState) {
    let lr = options.learning_rate;
    match options.optimizer {
        Optimizer::Sgd => {
            for (t, g) in model.tensors_mut().into_iter().zip(grads) {
                for (p, gi) in t.data_mut().iter_mut().zip(g) {
                    *p -= lr * gi;
                }
            }
        }
        Optimizer::Adam => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.98;
            const EPS: f64 = 1e-8;
            adam.t += 1;
            let c1 = 1.0 - B1.powi(adam.t);
            let c2 = 1.0 - B2.powi(adam.t);
            for (((t, g), m), v) in model.tensors_mut().into_iter().zip(grads).zip(&mut adam.m).zip(&mut adam.v) {
                for (((p, gi), mi), vi) in t.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *mi = B1 * *mi + (1.0 - B1) * gi;
                    *vi = B2 * *vi + (1.0 - B2) * gi * gi;
                    *p -= lr * (*mi / c1) / ((*vi / c2).sqrt() + EPS);
                }
            }
        }
    }
}
