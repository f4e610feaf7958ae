use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    find_subject_span, forward, ActivationSample, AttentionRow, Intervention, ModelBundle, Vocab, CONTROL_ID,
};

/// An original prompt, a paraphrase of it, and the subject both mention.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbePair {
    pub original: String,
    pub paraphrase: String,
    pub subject: String,
}

/// A prompt with the control token inserted right before the subject.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instrumented {
    pub tokens: Vec<u32>,
    pub control: usize,
    /// Last subject token.
    pub subject: usize,
}

pub fn instrument(vocab: &Vocab, prompt: &str, subject: &str) -> Result<Instrumented> {
    let ids = vocab.tokenize(prompt)?;
    let span = find_subject_span(&ids, &vocab.tokenize(subject)?)
        .map_err(|_| Error::SubjectNotFound { subject: subject.to_string(), prompt: prompt.to_string() })?;
    let mut tokens = ids[..span.start].to_vec();
    tokens.push(CONTROL_ID);
    tokens.extend_from_slice(&ids[span.start..]);
    Ok(Instrumented { tokens, control: span.start, subject: span.end + 1 })
}

/// Activation samples at the last subject token (experimental) and the
/// control token, two per pair in each set (original first), and their
/// paraphrase-minus-original differences once [`diff_sets`] has run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeSets {
    pub layer: usize,
    pub experimental: Vec<ActivationSample>,
    pub control: Vec<ActivationSample>,
    pub experimental_diffs: Vec<Vec<f64>>,
    pub control_diffs: Vec<Vec<f64>>,
}

fn for_each_prompt<T>(
    vocab: &Vocab,
    pairs: &[ProbePair],
    mut f: impl FnMut(&Instrumented) -> Result<T>,
) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(2 * pairs.len());
    for (index, pair) in pairs.iter().enumerate() {
        for prompt in [&pair.original, &pair.paraphrase] {
            let item = instrument(vocab, prompt, &pair.subject)
                .and_then(|inst| f(&inst))
                .map_err(|e| Error::Pair { index, source: Box::new(e) })?;
            out.push(item);
        }
    }
    Ok(out)
}

pub fn collect_activation_sets(
    model: &ModelBundle,
    vocab: &Vocab,
    pairs: &[ProbePair],
    layer: usize,
) -> Result<ProbeSets> {
    model.check_layer(layer)?;
    let samples = for_each_prompt(vocab, pairs, |inst| {
        let reads = [
            Intervention::ReadAct { layer, position: inst.subject },
            Intervention::ReadAct { layer, position: inst.control },
        ];
        let mut acts = forward(model, &inst.tokens, &reads)?.activations;
        let control = acts.pop().expect("two reads");
        Ok((acts.pop().expect("two reads"), control))
    })?;
    let (experimental, control) = samples.into_iter().unzip();
    Ok(ProbeSets { layer, experimental, control, ..Default::default() })
}

fn pairwise_diffs(samples: &[ActivationSample]) -> Result<Vec<Vec<f64>>> {
    if !samples.len().is_multiple_of(2) {
        return Err(Error::LengthMismatch(format!("{} samples do not form pairs", samples.len())));
    }
    samples
        .chunks_exact(2)
        .map(|c| {
            let (orig, para) = (&c[0].values, &c[1].values);
            if orig.len() != para.len() {
                return Err(Error::LengthMismatch(format!("activation lengths {} and {}", orig.len(), para.len())));
            }
            Ok(para.iter().zip(orig).map(|(b, a)| b - a).collect())
        })
        .collect()
}

/// Fills the difference sets, paraphrase minus original, one vector per pair.
pub fn diff_sets(mut sets: ProbeSets) -> Result<ProbeSets> {
    if sets.experimental.len() != sets.control.len() {
        return Err(Error::LengthMismatch(format!(
            "{} experimental vs {} control samples",
            sets.experimental.len(),
            sets.control.len()
        )));
    }
    sets.experimental_diffs = pairwise_diffs(&sets.experimental)?;
    sets.control_diffs = pairwise_diffs(&sets.control)?;
    Ok(sets)
}

/// Head-averaged attention rows of the subject and control tokens at one layer,
/// two per pair in each list (original first).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerAttention {
    pub layer: usize,
    pub subject: Vec<AttentionRow>,
    pub control: Vec<AttentionRow>,
}

pub fn collect_attention_scores(
    model: &ModelBundle,
    vocab: &Vocab,
    pairs: &[ProbePair],
    layers: &[usize],
) -> Result<Vec<LayerAttention>> {
    for &l in layers {
        model.check_layer(l)?;
    }
    let rows = for_each_prompt(vocab, pairs, |inst| {
        let reads: Vec<Intervention> = layers
            .iter()
            .flat_map(|&layer| {
                [
                    Intervention::ReadAttn { layer, position: inst.subject },
                    Intervention::ReadAttn { layer, position: inst.control },
                ]
            })
            .collect();
        Ok(forward(model, &inst.tokens, &reads)?.attention)
    })?;
    Ok(layers
        .iter()
        .enumerate()
        .map(|(i, &layer)| LayerAttention {
            layer,
            subject: rows.iter().map(|r| r[2 * i].clone()).collect(),
            control: rows.iter().map(|r| r[2 * i + 1].clone()).collect(),
        })
        .collect())
}
