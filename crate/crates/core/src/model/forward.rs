//! Pre-norm decoder forward pass with interventions.
//!
//! Block `l` (numbered from 1) computes
//!
//! ```text
//! x ← x + Attn(LN₁(x))
//! a ← LN₂(x)
//! k ← f(a·W_in) [+ noise]            standard
//! k ← (f(a·W_in) [+ noise]) ⊙ (a·W_up)   gated
//! x ← x + k·W_out [+ δ]
//! ```
//!
//! and the logits are `LN_f(x)·W_U`. Interventions hook into this at fixed
//! points: `AddHidden` adds δ to the post-block residual, `NoiseAct` adds
//! noise to the post-f activation before the value projection, and the
//! `Read*` variants copy values into the trace without touching the
//! computation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FfnKind, ModelBundle};
use crate::numerics::{Graph, RngStream, Segment, StreamId, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    Gaussian,
    Uniform,
    None,
}

/// Fully resolved noise source: distribution, absolute scale and the stream to draw from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
    pub scale: f64,
    pub stream: StreamId,
}

impl NoiseSpec {
    pub fn is_active(&self) -> bool {
        self.distribution != NoiseDistribution::None && self.scale != 0.0
    }
}

/// `scale·ε` with ε i.i.d. standard normal, or `scale·u` with u i.i.d. uniform on (−1, 1).
pub fn sample_scaled(distribution: NoiseDistribution, scale: f64, dim: usize, rng: &mut RngStream) -> Vec<f64> {
    match distribution {
        NoiseDistribution::None => vec![0.0; dim],
        _ if scale == 0.0 => vec![0.0; dim],
        NoiseDistribution::Gaussian => (0..dim).map(|_| scale * rng.next_normal()).collect(),
        NoiseDistribution::Uniform => (0..dim).map(|_| scale * rng.next_symmetric()).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Intervention {
    /// Adds `delta` to the residual stream after block `layer` at `position`.
    AddHidden {
        layer: usize,
        position: usize,
        delta: Tensor,
    },
    /// Adds fresh noise to the post-f FFN activation at every `(layer, position)`.
    /// Draws are taken layer by layer in ascending order, then by position in
    /// the given order.
    NoiseAct {
        layers: Vec<usize>,
        positions: Vec<usize>,
        noise: NoiseSpec,
    },
    /// Adds noise to the input embeddings at every position, row by row.
    NoiseEmbed {
        noise: NoiseSpec,
    },
    ReadAct {
        layer: usize,
        position: usize,
    },
    ReadAttn {
        layer: usize,
        position: usize,
    },
    /// Records the post-block residual and the FFN output at `(layer, position)`.
    ReadHidden {
        layer: usize,
        position: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationSample {
    pub layer: usize,
    pub position: usize,
    /// Post-f activation `f(a·W_in)`, including injected noise.
    pub values: Vec<f64>,
    /// Input of the value projection; equals `values` for standard FFNs.
    pub key: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub layer: usize,
    pub position: usize,
    /// Head-averaged softmax weights over all positions; future entries are 0.
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenSample {
    pub layer: usize,
    pub position: usize,
    pub residual: Vec<f64>,
    pub ffn_out: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// `seq_len × vocab`
    pub logits: Tensor,
    pub activations: Vec<ActivationSample>,
    pub attention: Vec<AttentionRow>,
    pub hidden: Vec<HiddenSample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum ParamMode {
    Train,
    Frozen,
}

/// Differentiable δ added after block `layer` at `position`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct DeltaSite {
    pub layer: usize,
    pub position: usize,
    pub var: Var,
}

pub(crate) struct LayerVars {
    pub attn: Var,
    pub act: Var,
    pub key: Var,
    pub ffn_out: Var,
    pub resid: Var,
}

pub(crate) struct Built {
    pub logits: Var,
    pub layers: Vec<LayerVars>,
    /// Parameter leaves in manifest order.
    pub params: Vec<Var>,
    pub segments: Vec<Segment>,
}

fn check_tokens(model: &ModelBundle, tokens: &[u32]) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    if tokens.len() > model.config.max_seq {
        return Err(Error::PromptTooLong { len: tokens.len(), max_seq: model.config.max_seq });
    }
    if let Some(&id) = tokens.iter().find(|&&t| t as usize >= model.config.vocab_size) {
        return Err(Error::TokenOutOfRange { id, vocab_size: model.config.vocab_size });
    }
    Ok(())
}

fn check_site(model: &ModelBundle, layer: usize, position: usize, len: usize) -> Result<()> {
    model.check_layer(layer)?;
    if position >= len {
        return Err(Error::PositionOutOfRange { position, len });
    }
    Ok(())
}

fn check_interventions(model: &ModelBundle, len: usize, interventions: &[Intervention]) -> Result<()> {
    for iv in interventions {
        match iv {
            Intervention::AddHidden { layer, position, delta } => {
                check_site(model, *layer, *position, len)?;
                if delta.len() != model.config.d_model {
                    return Err(Error::DimensionMismatch(format!(
                        "delta of length {} for d_model {}",
                        delta.len(),
                        model.config.d_model
                    )));
                }
            }
            Intervention::NoiseAct { layers, positions, .. } => {
                for &l in layers {
                    model.check_layer(l)?;
                }
                for &p in positions {
                    if p >= len {
                        return Err(Error::PositionOutOfRange { position: p, len });
                    }
                }
            }
            Intervention::NoiseEmbed { .. } => {}
            Intervention::ReadAct { layer, position }
            | Intervention::ReadAttn { layer, position }
            | Intervention::ReadHidden { layer, position } => check_site(model, *layer, *position, len)?,
        }
    }
    Ok(())
}

/// Pre-sampled activation noise, keyed by layer: one `seq_len × d_ffn` tensor each.
fn sample_activation_noise(interventions: &[Intervention], len: usize, d_ffn: usize) -> BTreeMap<usize, Tensor> {
    let mut out: BTreeMap<usize, Tensor> = BTreeMap::new();
    for iv in interventions {
        let Intervention::NoiseAct { layers, positions, noise } = iv else { continue };
        if !noise.is_active() {
            continue;
        }
        let mut rng = RngStream::from_id(noise.stream);
        let mut sorted = layers.clone();
        sorted.sort_unstable();
        sorted.dedup();
        for l in sorted {
            let t = out.entry(l).or_insert_with(|| Tensor::zeros(&[len, d_ffn]));
            for &p in positions {
                let draw = sample_scaled(noise.distribution, noise.scale, d_ffn, &mut rng);
                for (x, e) in t.row_mut(p).iter_mut().zip(draw) {
                    *x += e;
                }
            }
        }
    }
    out
}

/// Records the forward graph for one or more sequences.
///
/// Interventions address positions of a single sequence and are rejected
/// for batched calls.
pub(crate) fn build<'a>(
    g: &mut Graph<'a>,
    model: &'a ModelBundle,
    mode: ParamMode,
    seqs: &[&[u32]],
    interventions: &[Intervention],
    delta: Option<DeltaSite>,
) -> Result<Built> {
    if seqs.is_empty() {
        return Err(Error::EmptyInput);
    }
    for s in seqs {
        check_tokens(model, s)?;
    }
    if seqs.len() > 1 && (!interventions.is_empty() || delta.is_some()) {
        return Err(Error::InvalidConfig("interventions need a single sequence".into()));
    }
    let len0 = seqs[0].len();
    check_interventions(model, len0, interventions)?;
    if let Some(site) = delta {
        check_site(model, site.layer, site.position, len0)?;
    }
    let cfg = &model.config;

    let mut params = Vec::new();
    let mut leaf = |g: &mut Graph<'a>, t: &'a Tensor| {
        let v = match mode {
            ParamMode::Train => g.param(t),
            ParamMode::Frozen => g.frozen(t),
        };
        params.push(v);
        v
    };

    let mut segments = Vec::with_capacity(seqs.len());
    let mut ids = Vec::new();
    let mut pos_ids = Vec::new();
    for s in seqs {
        segments.push(Segment { start: ids.len(), len: s.len() });
        ids.extend_from_slice(s);
        pos_ids.extend(0..s.len() as u32);
    }
    let rows = ids.len();

    let tok = leaf(g, &model.token_embedding);
    let pos = leaf(g, &model.position_embedding);
    let te = g.embed(tok, &ids);
    let pe = g.embed(pos, &pos_ids);
    let mut x = g.add(te, pe);
    for iv in interventions {
        if let Intervention::NoiseEmbed { noise } = iv {
            if noise.is_active() {
                let mut rng = RngStream::from_id(noise.stream);
                let draw = sample_scaled(noise.distribution, noise.scale, rows * cfg.d_model, &mut rng);
                let n = g.constant(Tensor::matrix(rows, cfg.d_model, draw)?);
                x = g.add(x, n);
            }
        }
    }

    let noise = sample_activation_noise(interventions, len0, cfg.d_ffn);
    let mut layers = Vec::with_capacity(cfg.n_layers);
    for (li, lp) in model.layers.iter().enumerate() {
        let layer = li + 1;
        let ln1g = leaf(g, &lp.ln1_gain);
        let ln1b = leaf(g, &lp.ln1_bias);
        let wq = leaf(g, &lp.w_q);
        let wk = leaf(g, &lp.w_k);
        let wv = leaf(g, &lp.w_v);
        let wao = leaf(g, &lp.w_attn_out);
        let ln2g = leaf(g, &lp.ln2_gain);
        let ln2b = leaf(g, &lp.ln2_bias);
        let w_in = leaf(g, &lp.w_in);
        let w_up = lp.w_up.as_ref().map(|t| leaf(g, t));
        let w_out = leaf(g, &lp.w_out);

        let a1 = g.layer_norm(x, ln1g, ln1b);
        let q = g.matmul(a1, wq);
        let k = g.matmul(a1, wk);
        let v = g.matmul(a1, wv);
        let attn = g.causal_attention(q, k, v, cfg.n_heads, &segments);
        let attn_proj = g.matmul(attn, wao);
        x = g.add(x, attn_proj);

        let a2 = g.layer_norm(x, ln2g, ln2b);
        let pre = g.matmul(a2, w_in);
        let mut act = g.activation(pre, cfg.activation);
        if let Some(n) = noise.get(&layer) {
            let n = g.constant(n.clone());
            act = g.add(act, n);
        }
        let key = match (cfg.ffn_kind, w_up) {
            (FfnKind::Gated, Some(w_up)) => {
                let up = g.matmul(a2, w_up);
                g.mul(act, up)
            }
            _ => act,
        };
        let ffn_out = g.matmul(key, w_out);
        x = g.add(x, ffn_out);

        for iv in interventions {
            if let Intervention::AddHidden { layer: l, position, delta } = iv {
                if *l == layer {
                    let d = g.constant(delta.clone());
                    x = g.add_row(x, *position, d);
                }
            }
        }
        if let Some(site) = delta {
            if site.layer == layer {
                x = g.add_row(x, site.position, site.var);
            }
        }
        layers.push(LayerVars { attn, act, key, ffn_out, resid: x });
    }
    let lnfg = leaf(g, &model.lnf_gain);
    let lnfb = leaf(g, &model.lnf_bias);
    let unemb = leaf(g, &model.unembedding);
    let h = g.layer_norm(x, lnfg, lnfb);
    let logits = g.matmul(h, unemb);
    Ok(Built { logits, layers, params, segments })
}

/// Collects the `Read*` requests of `interventions` from a built graph.
pub(crate) fn read_trace(g: &Graph<'_>, built: &Built, interventions: &[Intervention]) -> ForwardTrace {
    let mut trace = ForwardTrace {
        logits: g.value(built.logits).clone(),
        activations: Vec::new(),
        attention: Vec::new(),
        hidden: Vec::new(),
    };
    for iv in interventions {
        match *iv {
            Intervention::ReadAct { layer, position } => {
                let lv = &built.layers[layer - 1];
                trace.activations.push(ActivationSample {
                    layer,
                    position,
                    values: g.value(lv.act).row(position).to_vec(),
                    key: g.value(lv.key).row(position).to_vec(),
                });
            }
            Intervention::ReadAttn { layer, position } => {
                let weights = g
                    .attention_row(built.layers[layer - 1].attn, 0, position)
                    .expect("attention node for a checked position");
                trace.attention.push(AttentionRow { layer, position, weights });
            }
            Intervention::ReadHidden { layer, position } => {
                let lv = &built.layers[layer - 1];
                trace.hidden.push(HiddenSample {
                    layer,
                    position,
                    residual: g.value(lv.resid).row(position).to_vec(),
                    ffn_out: g.value(lv.ffn_out).row(position).to_vec(),
                });
            }
            _ => {}
        }
    }
    trace
}

/// Runs the model on one token sequence.
pub fn forward(model: &ModelBundle, tokens: &[u32], interventions: &[Intervention]) -> Result<ForwardTrace> {
    let mut g = Graph::new();
    let built = build(&mut g, model, ParamMode::Frozen, &[tokens], interventions, None)?;
    Ok(read_trace(&g, &built, interventions))
}
