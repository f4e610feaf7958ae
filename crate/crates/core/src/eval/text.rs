//! Text metrics over lowercased word tokens: n-gram entropy, TF-IDF
//! similarity, BLEU and ROUGE.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::model::segment;

fn ngrams<T: AsRef<str>>(tokens: &[T], n: usize) -> Vec<Vec<&str>> {
    if tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.iter().map(AsRef::as_ref).collect()).collect()
}

fn counts<'a>(grams: &[Vec<&'a str>]) -> HashMap<Vec<&'a str>, usize> {
    let mut m = HashMap::new();
    for g in grams {
        *m.entry(g.clone()).or_insert(0) += 1;
    }
    m
}

/// Shannon entropy (bits) of the empirical n-gram distribution.
pub fn ngram_entropy<T: AsRef<str>>(tokens: &[T], n: usize) -> f64 {
    let grams = ngrams(tokens, n);
    let total = grams.len() as f64;
    let mut h = 0.0;
    // sorted so the float sum does not depend on hash order
    let mut c: Vec<usize> = counts(&grams).into_values().collect();
    c.sort_unstable();
    for k in c {
        let p = k as f64 / total;
        h -= p * p.log2();
    }
    h + 0.0
}

pub const GE_WEIGHTS: [(usize, f64); 2] = [(2, 1.0 / 3.0), (3, 2.0 / 3.0)];

/// Weighted bigram and trigram entropy in bits.
pub fn generation_entropy<T: AsRef<str>>(tokens: &[T]) -> Result<f64> {
    if tokens.len() < 3 {
        return Err(Error::TextTooShort(tokens.len()));
    }
    Ok(GE_WEIGHTS.iter().map(|&(n, w)| w * ngram_entropy(tokens, n)).sum())
}

/// Smoothed inverse document frequencies, `ln((1+N)/(1+df)) + 1`.
#[derive(Clone, Debug, Default)]
pub struct IdfTable {
    docs: usize,
    df: BTreeMap<String, usize>,
}

impl IdfTable {
    pub fn from_documents<S: AsRef<str>>(docs: &[S]) -> Self {
        let mut df = BTreeMap::new();
        for d in docs {
            for t in segment(d.as_ref()).into_iter().collect::<BTreeSet<_>>() {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        Self { docs: docs.len(), df }
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0);
        ((1.0 + self.docs as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut tf = BTreeMap::new();
        for t in segment(text) {
            *tf.entry(t).or_insert(0.0) += 1.0;
        }
        tf.into_iter()
            .map(|(t, c)| {
                let w = c * self.idf(&t);
                (t, w)
            })
            .collect()
    }
}

/// 100 × cosine similarity of unigram TF-IDF vectors of the generation and
/// the concatenated references.
pub fn reference_score(generated: &str, references: &[String], idf: &IdfTable) -> Result<f64> {
    let reference = references.join(" ");
    if segment(&reference).is_empty() {
        return Err(Error::EmptyReference);
    }
    if segment(generated).is_empty() {
        return Err(Error::EmptyInput);
    }
    let a = idf.vector(generated);
    let b = idf.vector(&reference);
    let dot: f64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    Ok((100.0 * dot / (na * nb)).clamp(0.0, 100.0))
}

/// Sentence BLEU-4 with uniform weights and the brevity penalty.
///
/// Without smoothing any order with no matching n-gram (including orders
/// longer than the candidate) gives 0. With smoothing, orders above 1 use
/// add-one precision `(m + 1) / (c + 1)`.
pub fn bleu<T: AsRef<str>>(reference: &[T], candidate: &[T], smooth: bool) -> f64 {
    if candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngrams(candidate, n);
        let refc = counts(&ngrams(reference, n));
        let mut matched = 0;
        for (g, c) in counts(&cand) {
            matched += c.min(refc.get(&g).copied().unwrap_or(0));
        }
        let precision = if smooth && n > 1 {
            (matched as f64 + 1.0) / (cand.len() as f64 + 1.0)
        } else if matched == 0 {
            return 0.0;
        } else {
            matched as f64 / cand.len() as f64
        };
        log_sum += 0.25 * precision.ln();
    }
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    bp * log_sum.exp()
}

fn f1(overlap: usize, cand: usize, refr: usize) -> f64 {
    if overlap == 0 || cand == 0 || refr == 0 {
        return 0.0;
    }
    let p = overlap as f64 / cand as f64;
    let r = overlap as f64 / refr as f64;
    2.0 * p * r / (p + r)
}

/// ROUGE-N F1 with clipped n-gram overlap.
pub fn rouge_n<T: AsRef<str>>(reference: &[T], candidate: &[T], n: usize) -> f64 {
    let (rg, cg) = (ngrams(reference, n), ngrams(candidate, n));
    let refc = counts(&rg);
    let overlap: usize = counts(&cg).into_iter().map(|(g, c)| c.min(refc.get(&g).copied().unwrap_or(0))).sum();
    f1(overlap, cg.len(), rg.len())
}

/// ROUGE-L: F1 from the longest common subsequence.
pub fn rouge_l<T: AsRef<str>>(reference: &[T], candidate: &[T]) -> f64 {
    let (m, n) = (reference.len(), candidate.len());
    let mut dp = vec![vec![0usize; n + 1]; m + 1];
    for i in 1..=m {
        for j in 1..=n {
            dp[i][j] = if reference[i - 1].as_ref() == candidate[j - 1].as_ref() {
                dp[i - 1][j - 1] + 1
            } else {
                dp[i - 1][j].max(dp[i][j - 1])
            };
        }
    }
    f1(dp[m][n], n, m)
}
