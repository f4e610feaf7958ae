use crate::error::{Error, Result};
use crate::model::{forward, ModelBundle};
use crate::numerics::{log_softmax, RngStream};

#[derive(Debug)]
pub enum Decoding<'r> {
    Greedy,
    Sample { temperature: f64, rng: &'r mut RngStream },
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Autoregressive continuation of `prompt`. Stops after `max_new_tokens`
/// tokens or when the context reaches `max_seq`. Returns only the new tokens.
pub fn generate(
    model: &ModelBundle,
    prompt: &[u32],
    max_new_tokens: usize,
    mut decoding: Decoding<'_>,
) -> Result<Vec<u32>> {
    if prompt.is_empty() {
        return Err(Error::EmptyInput);
    }
    if prompt.len() > model.config.max_seq {
        return Err(Error::PromptTooLong { len: prompt.len(), max_seq: model.config.max_seq });
    }
    let mut seq = prompt.to_vec();
    let mut out = Vec::new();
    while out.len() < max_new_tokens && seq.len() < model.config.max_seq {
        let trace = forward(model, &seq, &[])?;
        let last = trace.logits.row(seq.len() - 1);
        let next = match &mut decoding {
            Decoding::Greedy => argmax(last),
            Decoding::Sample { temperature, rng } => {
                if !(*temperature > 0.0) {
                    return Err(Error::InvalidConfig("temperature must be positive".into()));
                }
                let scaled: Vec<f64> = last.iter().map(|x| x / *temperature).collect();
                sample_index(&log_softmax(&scaled), rng)
            }
        } as u32;
        seq.push(next);
        out.push(next);
    }
    Ok(out)
}

fn sample_index(log_probs: &[f64], rng: &mut RngStream) -> usize {
    let u = rng.next_uniform();
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}
