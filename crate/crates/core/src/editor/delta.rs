use serde::{Deserialize, Serialize};

use crate::editor::{perturb_parameters, EditPlan, FactRecord, NoiseTarget, PositionRule};
use crate::error::{Error, Result};
use crate::model::forward::{build, DeltaSite, ParamMode};
use crate::model::{find_subject_span, forward, Intervention, ModelBundle, NoiseSpec, Vocab};
use crate::numerics::{derive_seed, CeTarget, Graph, RngStream, StreamId, Tensor};

// Stream ids under a record's seed. Activation and embedding noise use the
// step number itself.
const POSITION_STREAM: u64 = 1 << 32;
const PARAMETER_STREAM: u64 = 1 << 33;

/// Seed of a record's private noise streams.
pub fn record_seed(master_seed: u64, case_id: &str) -> u64 {
    derive_seed(master_seed, case_id)
}

/// Tokenized prompt and the position of its last subject token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EditSite {
    pub tokens: Vec<u32>,
    pub position: usize,
}

impl EditSite {
    pub fn locate(vocab: &Vocab, prompt: &str, subject: &str) -> Result<Self> {
        let tokens = vocab.tokenize(prompt)?;
        let subject_ids = vocab.tokenize(subject)?;
        let span = find_subject_span(&tokens, &subject_ids)
            .map_err(|_| Error::SubjectNotFound { subject: subject.to_string(), prompt: prompt.to_string() })?;
        Ok(Self { tokens, position: span.last() })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaLog {
    /// Loss evaluated before each update, plus one after the last update.
    pub losses: Vec<f64>,
    /// ‖δ‖ after each update and clamp.
    pub delta_norms: Vec<f64>,
    /// ‖h‖ of the clean hidden state at the edit site.
    pub hidden_norm: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeltaOutcome {
    pub delta: Vec<f64>,
    pub log: DeltaLog,
    pub site: EditSite,
    /// Clean post-block residual at the edit site.
    pub hidden: Vec<f64>,
    /// Clean FFN output at the edit site.
    pub ffn_out: Vec<f64>,
}

impl DeltaOutcome {
    /// Hidden state the edit should produce: `h + δ`.
    pub fn target_hidden(&self) -> Vec<f64> {
        self.hidden.iter().zip(&self.delta).map(|(h, d)| h + d).collect()
    }

    /// Value the edited projection should emit: FFN output plus δ.
    pub fn target_value(&self) -> Vec<f64> {
        self.ffn_out.iter().zip(&self.delta).map(|(h, d)| h + d).collect()
    }
}

/// Reads the clean post-block residual and FFN output at `(layer, position)`.
pub fn read_hidden(model: &ModelBundle, tokens: &[u32], layer: usize, position: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let trace = forward(model, tokens, &[Intervention::ReadHidden { layer, position }])?;
    let h = trace.hidden.into_iter().next().expect("one hidden read");
    Ok((h.residual, h.ffn_out))
}

/// Gradient descent on a hidden-state offset δ so the model completes the
/// edit prompt with `target_new`.
///
/// δ starts at zero and is added after block `plan.layer` at the last subject
/// token. The plan's noise is redrawn every step from the record's own streams.
pub fn compute_delta(
    model: &ModelBundle,
    vocab: &Vocab,
    record: &FactRecord,
    plan: &EditPlan,
    master_seed: u64,
) -> Result<DeltaOutcome> {
    plan.validate(&model.config)?;
    let site = EditSite::locate(vocab, &record.edit_prompt, &record.subject)?;
    let target = vocab.tokenize(&record.target_new)?;
    let prompt_len = site.tokens.len();
    let mut seq = site.tokens.clone();
    seq.extend_from_slice(&target[..target.len() - 1]);
    let targets: Vec<CeTarget> = target
        .iter()
        .enumerate()
        .map(|(j, &t)| CeTarget { row: prompt_len - 1 + j, class: t as usize, weight: 1.0 })
        .collect();

    let (hidden, ffn_out) = read_hidden(model, &site.tokens, plan.layer, site.position)?;
    let hidden_norm = hidden.iter().map(|x| x * x).sum::<f64>().sqrt();
    let max_norm = plan.clamp_factor * hidden_norm;

    let seed = record_seed(master_seed, &record.case_id);
    let noise = &plan.noise;
    let noised_model;
    let base = if noise.target == NoiseTarget::Parameters && noise.is_active() {
        noised_model = perturb_parameters(model, noise, &mut RngStream::new(seed, PARAMETER_STREAM));
        &noised_model
    } else {
        model
    };

    let d = model.config.d_model;
    let mut delta = vec![0.0; d];
    let mut log = DeltaLog { hidden_norm, ..Default::default() };
    for step in 0..=plan.opt_steps {
        let interventions = step_noise(plan, seed, step as u64, site.position, prompt_len, seq.len(), d);
        let mut g = Graph::new();
        let dv = g.variable(Tensor::vector(delta.clone()));
        let built = build(
            &mut g,
            base,
            ParamMode::Frozen,
            &[&seq],
            &interventions,
            Some(DeltaSite { layer: plan.layer, position: site.position, var: dv }),
        )?;
        let loss = g.cross_entropy(built.logits, &targets);
        let value = g.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        log.losses.push(value);
        if value <= plan.stop_threshold || step == plan.opt_steps {
            break;
        }
        let grad = g.backward(loss).take(dv).unwrap_or_else(|| vec![0.0; d]);
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        for (x, gx) in delta.iter_mut().zip(&grad) {
            *x -= plan.learning_rate * gx;
        }
        let norm = delta.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > max_norm {
            let s = max_norm / norm;
            delta.iter_mut().for_each(|x| *x *= s);
        }
        log.delta_norms.push(delta.iter().map(|x| x * x).sum::<f64>().sqrt());
        log.steps += 1;
    }
    Ok(DeltaOutcome { delta, log, site, hidden, ffn_out })
}

fn step_noise(
    plan: &EditPlan,
    seed: u64,
    step: u64,
    subject_position: usize,
    prompt_len: usize,
    seq_len: usize,
    d_model: usize,
) -> Vec<Intervention> {
    let policy = &plan.noise;
    if !policy.is_active() {
        return Vec::new();
    }
    let stream = StreamId { master_seed: seed, stream_id: step };
    match policy.target {
        NoiseTarget::Parameters => Vec::new(),
        NoiseTarget::Embeddings => {
            let scale = policy.alpha / ((seq_len * d_model) as f64).sqrt();
            vec![Intervention::NoiseEmbed { noise: NoiseSpec { distribution: policy.distribution, scale, stream } }]
        }
        NoiseTarget::FfnActivation => {
            let position = match policy.position_rule {
                PositionRule::LastSubject => subject_position,
                PositionRule::RandomToken => RngStream::new(seed, POSITION_STREAM + step).next_below(prompt_len),
            };
            vec![Intervention::NoiseAct {
                layers: policy.layers(plan.layer),
                positions: vec![position],
                noise: NoiseSpec { distribution: policy.distribution, scale: policy.alpha, stream },
            }]
        }
    }
}
