use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 100;

/// Moments with 1/n normalization and an equal-width histogram over the
/// observed range. Kurtosis is excess kurtosis (0 for a normal).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// `n_bins + 1` equal-width edges over `[lo, hi]`, widened when the range is empty.
pub fn bin_edges(lo: f64, hi: f64, n_bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / n_bins as f64;
    let mut edges: Vec<f64> = (0..n_bins).map(|i| lo + i as f64 * width).collect();
    edges.push(hi);
    edges
}

/// Counts per bin; the last bin is closed. Values outside the edges are dropped.
pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let n_bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[n_bins]);
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0; n_bins];
    for &x in values {
        if x < lo || x > hi {
            continue;
        }
        let mut i = (((x - lo) / width) as usize).min(n_bins - 1);
        // guard against rounding at the edges
        while i > 0 && x < edges[i] {
            i -= 1;
        }
        while i + 1 < n_bins && x >= edges[i + 1] {
            i += 1;
        }
        counts[i] += 1;
    }
    counts
}

pub fn moment_stats(values: &[f64], n_bins: usize) -> Result<StatsSummary> {
    if values.len() < 4 {
        return Err(Error::InsufficientSamples(values.len()));
    }
    if n_bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in values {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 == 0.0 {
        return Err(Error::DegenerateData);
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = bin_edges(lo, hi, n_bins);
    Ok(StatsSummary {
        count: values.len(),
        mean,
        std: m2.sqrt(),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        counts: histogram(values, &edges),
        bin_edges: edges,
    })
}
