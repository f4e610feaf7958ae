use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::editor::FactRecord;
use crate::error::{Error, Result};
use crate::eval::{generation_entropy, reference_score, IdfTable};
use crate::model::{argmax, forward, generate, segment, Decoding, ModelBundle, Vocab};
use crate::numerics::{log_softmax, Tensor};

/// Anything that maps a token sequence to per-position next-token logits.
pub trait LogitSource {
    /// `tokens.len() × vocab` logits.
    fn logits(&self, tokens: &[u32]) -> Result<Tensor>;
}

impl LogitSource for ModelBundle {
    fn logits(&self, tokens: &[u32]) -> Result<Tensor> {
        Ok(forward(self, tokens, &[])?.logits)
    }
}

fn teacher_forced(src: &dyn LogitSource, prompt: &[u32], target: &[u32]) -> Result<(Tensor, usize)> {
    if prompt.is_empty() || target.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut seq = prompt.to_vec();
    seq.extend_from_slice(&target[..target.len() - 1]);
    Ok((src.logits(&seq)?, prompt.len() - 1))
}

/// Fraction of `target` tokens that are the argmax prediction when every
/// earlier target token is fed in.
pub fn token_accuracy(src: &dyn LogitSource, prompt: &[u32], target: &[u32]) -> Result<f64> {
    let (logits, first) = teacher_forced(src, prompt, target)?;
    let hits = target.iter().enumerate().filter(|&(i, &t)| argmax(logits.row(first + i)) == t as usize).count();
    Ok(hits as f64 / target.len() as f64)
}

/// Mean per-token log-probability of `target` after `prompt`.
pub fn sequence_log_prob(src: &dyn LogitSource, prompt: &[u32], target: &[u32]) -> Result<f64> {
    let (logits, first) = teacher_forced(src, prompt, target)?;
    let total: f64 = target.iter().enumerate().map(|(i, &t)| log_softmax(logits.row(first + i))[t as usize]).sum();
    Ok(total / target.len() as f64)
}

/// 1 when `new` is the full-vocabulary argmax at its first token that differs
/// from `old`, with earlier tokens of `new` fed in. 0 when `new` has no such
/// token (it equals `old` or is a prefix of it).
pub fn argmax_indicator(src: &dyn LogitSource, prompt: &[u32], new: &[u32], old: &[u32]) -> Result<f64> {
    let Some(i) = (0..new.len()).find(|&i| old.get(i) != Some(&new[i])) else {
        return Ok(0.0);
    };
    let (logits, first) = teacher_forced(src, prompt, &new[..=i])?;
    Ok(f64::from(argmax(logits.row(first + i)) == new[i] as usize))
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-case metric values on the 0–1 scale (GE in bits).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case_id: String,
    pub values: BTreeMap<String, f64>,
}

/// Metric means over records, per-case rows, and the flat samples each mean
/// was built from (used for confidence intervals).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricSet {
    /// Rates on the 0–100 scale; GE in bits.
    pub means: BTreeMap<String, f64>,
    pub samples: BTreeMap<String, Vec<f64>>,
    pub cases: Vec<CaseMetrics>,
}

impl MetricSet {
    pub fn get(&self, metric: &str) -> f64 {
        self.means.get(metric).copied().unwrap_or(f64::NAN)
    }

    /// Adds one case. `values` holds the samples for each metric of this case;
    /// the case value is their mean.
    fn push(&mut self, case_id: &str, values: Vec<(&str, Vec<f64>)>) {
        let mut row = BTreeMap::new();
        for (name, xs) in values {
            row.insert(name.to_string(), mean(&xs));
            self.samples.entry(name.to_string()).or_default().extend(xs);
        }
        self.cases.push(CaseMetrics { case_id: case_id.to_string(), values: row });
    }

    /// Means over cases, scaled by 100 except for the names in `raw`.
    fn finish(mut self, raw: &[&str]) -> Self {
        let names: Vec<String> = self.samples.keys().cloned().collect();
        for name in names {
            let per_case: Vec<f64> = self.cases.iter().map(|c| c.values[&name]).collect();
            let scale = if raw.contains(&name.as_str()) { 1.0 } else { 100.0 };
            self.means.insert(name, scale * mean(&per_case));
        }
        self
    }

    /// Merges another set over the same cases, in the same order.
    pub fn merge(&mut self, other: MetricSet) {
        self.means.extend(other.means);
        self.samples.extend(other.samples);
        if self.cases.is_empty() {
            self.cases = other.cases;
        } else {
            for (a, b) in self.cases.iter_mut().zip(other.cases) {
                a.values.extend(b.values);
            }
        }
    }
}

fn check_records(records: &[FactRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    for (index, r) in records.iter().enumerate() {
        if r.paraphrase_prompts.is_empty() || r.neighborhood_prompts.is_empty() {
            let msg = format!("{} needs at least one paraphrase and one neighborhood prompt", r.case_id);
            return Err(Error::Pair { index, source: Box::new(Error::InvalidConfig(msg)) });
        }
    }
    Ok(())
}

/// Efficacy, Paraphrase and Specificity as teacher-forced token accuracy, and
/// their harmonic Score.
pub fn zsre_eval(src: &dyn LogitSource, vocab: &Vocab, records: &[FactRecord]) -> Result<MetricSet> {
    check_records(records)?;
    let mut set = MetricSet::default();
    for r in records {
        let new = vocab.tokenize(&r.target_new)?;
        let efficacy = token_accuracy(src, &vocab.tokenize(&r.edit_prompt)?, &new)?;
        let paraphrase = r
            .paraphrase_prompts
            .iter()
            .map(|p| token_accuracy(src, &vocab.tokenize(p)?, &new))
            .collect::<Result<Vec<_>>>()?;
        let specificity = r
            .neighborhood_prompts
            .iter()
            .map(|n| token_accuracy(src, &vocab.tokenize(&n.prompt)?, &vocab.tokenize(&n.expected)?))
            .collect::<Result<Vec<_>>>()?;
        set.push(
            &r.case_id,
            vec![("efficacy", vec![efficacy]), ("paraphrase", paraphrase), ("specificity", specificity)],
        );
    }
    let mut set = set.finish(&[]);
    let score = crate::eval::harmonic_or_zero(&[set.get("efficacy"), set.get("paraphrase"), set.get("specificity")]);
    set.means.insert("score".into(), score);
    Ok(set)
}

/// ES, PS, PA and NS from length-normalized sequence log-probabilities.
/// Comparisons are strict, so ties count as failures.
pub fn cf_prob_metrics(src: &dyn LogitSource, vocab: &Vocab, records: &[FactRecord]) -> Result<MetricSet> {
    check_records(records)?;
    let mut set = MetricSet::default();
    for r in records {
        let (new, old) = (vocab.tokenize(&r.target_new)?, vocab.tokenize(&r.target_true)?);
        let prefers_new = |prompt: &[u32]| -> Result<f64> {
            Ok(f64::from(sequence_log_prob(src, prompt, &new)? > sequence_log_prob(src, prompt, &old)?))
        };
        let es = prefers_new(&vocab.tokenize(&r.edit_prompt)?)?;
        let mut ps = Vec::new();
        let mut pa = Vec::new();
        for p in &r.paraphrase_prompts {
            let ids = vocab.tokenize(p)?;
            ps.push(prefers_new(&ids)?);
            pa.push(argmax_indicator(src, &ids, &new, &old)?);
        }
        let ns = r
            .neighborhood_prompts
            .iter()
            .map(|n| {
                let ids = vocab.tokenize(&n.prompt)?;
                let expected = vocab.tokenize(&n.expected)?;
                Ok(f64::from(sequence_log_prob(src, &ids, &expected)? > sequence_log_prob(src, &ids, &new)?))
            })
            .collect::<Result<Vec<_>>>()?;
        set.push(&r.case_id, vec![("es", vec![es]), ("ps", ps), ("pa", pa), ("ns", ns)]);
    }
    Ok(set.finish(&[]))
}

/// Greedy continuations of each record's edit and paraphrase prompts, scored
/// for n-gram entropy (GE, bits) and TF-IDF similarity to the record's
/// reference texts (RS). IDF is computed over all generations and references.
pub fn cf_generation_metrics(
    model: &ModelBundle,
    vocab: &Vocab,
    records: &[FactRecord],
    max_new_tokens: usize,
) -> Result<MetricSet> {
    check_records(records)?;
    let mut texts: Vec<Vec<String>> = Vec::with_capacity(records.len());
    for r in records {
        let mut gens = Vec::new();
        for p in std::iter::once(&r.edit_prompt).chain(&r.paraphrase_prompts) {
            let ids = vocab.tokenize(p)?;
            let cont = generate(model, &ids, max_new_tokens, Decoding::Greedy)?;
            gens.push(format!("{} {}", p.to_lowercase(), vocab.detokenize(&cont)).trim().to_string());
        }
        texts.push(gens);
    }
    let corpus: Vec<&str> = texts
        .iter()
        .flatten()
        .map(String::as_str)
        .chain(records.iter().flat_map(|r| r.reference_texts.iter().map(String::as_str)))
        .collect();
    let idf = IdfTable::from_documents(&corpus);

    let mut set = MetricSet::default();
    for (r, gens) in records.iter().zip(&texts) {
        let ge = gens.iter().map(|g| generation_entropy(&segment(g))).collect::<Result<Vec<_>>>()?;
        let rs = gens.iter().map(|g| reference_score(g, &r.reference_texts, &idf)).collect::<Result<Vec<_>>>()?;
        set.push(&r.case_id, vec![("ge", ge), ("rs", rs)]);
    }
    // RS is already on the 0–100 scale
    Ok(set.finish(&["ge", "rs"]))
}
