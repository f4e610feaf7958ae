use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{bleu, rouge_l, rouge_n};
use crate::model::segment;
use crate::probe::ProbePair;

/// Corpus averages of surface overlap between originals (references) and
/// paraphrases (candidates), with the subject removed from both.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexicalScores {
    pub bleu: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub scored: usize,
    /// Indices of pairs left empty once the subject was removed.
    pub excluded: Vec<usize>,
}

/// Removes every case-insensitive occurrence of `subject`.
pub fn remove_subject(text: &str, subject: &str) -> String {
    let needle = subject.to_lowercase();
    let mut out = text.to_lowercase();
    if needle.is_empty() {
        return out;
    }
    while let Some(i) = out.find(&needle) {
        out.replace_range(i..i + needle.len(), " ");
    }
    out
}

pub fn lexical_similarity(pairs: &[ProbePair], smooth_bleu: bool) -> Result<LexicalScores> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sums = [0.0; 4];
    let mut excluded = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        let r = segment(&remove_subject(&p.original, &p.subject));
        let c = segment(&remove_subject(&p.paraphrase, &p.subject));
        if r.is_empty() || c.is_empty() {
            excluded.push(i);
            continue;
        }
        sums[0] += bleu(&r, &c, smooth_bleu);
        sums[1] += rouge_n(&r, &c, 1);
        sums[2] += rouge_n(&r, &c, 2);
        sums[3] += rouge_l(&r, &c);
    }
    let scored = pairs.len() - excluded.len();
    if scored == 0 {
        return Err(Error::EmptyInput);
    }
    let n = scored as f64;
    Ok(LexicalScores {
        bleu: sums[0] / n,
        rouge1: sums[1] / n,
        rouge2: sums[2] / n,
        rouge_l: sums[3] / n,
        scored,
        excluded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: &str, b: &str, s: &str) -> ProbePair {
        ProbePair { original: a.into(), paraphrase: b.into(), subject: s.into() }
    }

    #[test]
    fn identical_and_disjoint() {
        let same = lexical_similarity(
            &[pair("Ann Lee plays the game of golf", "Ann Lee plays the game of golf", "Ann Lee")],
            false,
        )
        .unwrap();
        for x in [same.bleu, same.rouge1, same.rouge2, same.rouge_l] {
            assert!((x - 1.0).abs() < 1e-12);
        }
        let far =
            lexical_similarity(&[pair("Ann Lee plays golf", "where does ann lee live", "ann lee")], false).unwrap();
        assert_eq!([far.bleu, far.rouge1, far.rouge2, far.rouge_l], [0.0; 4]);
    }

    #[test]
    fn subject_is_removed_case_insensitively() {
        assert_eq!(segment(&remove_subject("Ann Lee met ANN LEE", "ann lee")), vec!["met"]);
    }

    #[test]
    fn empty_pairs_are_reported_and_skipped() {
        let s =
            lexical_similarity(&[pair("Ann Lee", "ann lee", "Ann Lee"), pair("the cat sat", "the cat", "x")], false)
                .unwrap();
        assert_eq!(s.excluded, vec![0]);
        assert_eq!(s.scored, 1);
        assert_eq!(s.rouge1, 0.8);
        assert!(lexical_similarity(&[pair("Ann", "Ann", "Ann")], false).is_err());
    }
}
