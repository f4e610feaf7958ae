use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{bin_edges, histogram, moment_stats, LexicalScores, ProbeSets, StatsSummary};

pub const PROBE_SCHEMA_VERSION: u32 = 1;

/// Both difference sets binned over their joint range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointHistogram {
    pub bin_edges: Vec<f64>,
    pub experimental: Vec<usize>,
    pub control: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerProbe {
    pub layer: usize,
    pub pairs: usize,
    pub experimental: StatsSummary,
    pub control: StatsSummary,
    /// `|skew(control)| − |skew(experimental)|`; positive when the
    /// experimental differences are the more symmetric of the two.
    pub skewness_gap: f64,
    pub histogram: JointHistogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub schema_version: u32,
    pub kurtosis_convention: String,
    pub layers: Vec<LayerProbe>,
    pub lexical: Option<LexicalScores>,
}

impl LayerProbe {
    /// Statistics of the flattened difference sets.
    pub fn from_sets(sets: &ProbeSets, n_bins: usize) -> Result<Self> {
        if sets.experimental_diffs.len() != sets.control_diffs.len() {
            return Err(Error::LengthMismatch("difference sets differ in size".into()));
        }
        let exp: Vec<f64> = sets.experimental_diffs.iter().flatten().copied().collect();
        let ctl: Vec<f64> = sets.control_diffs.iter().flatten().copied().collect();
        let experimental = moment_stats(&exp, n_bins)?;
        let control = moment_stats(&ctl, n_bins)?;
        let lo = exp.iter().chain(&ctl).copied().fold(f64::INFINITY, f64::min);
        let hi = exp.iter().chain(&ctl).copied().fold(f64::NEG_INFINITY, f64::max);
        let edges = bin_edges(lo, hi, n_bins);
        Ok(Self {
            layer: sets.layer,
            pairs: sets.experimental_diffs.len(),
            skewness_gap: control.skewness.abs() - experimental.skewness.abs(),
            histogram: JointHistogram {
                experimental: histogram(&exp, &edges),
                control: histogram(&ctl, &edges),
                bin_edges: edges,
            },
            experimental,
            control,
        })
    }

    /// `bin_left,bin_right,count_experimental,count_control` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["bin_left", "bin_right", "count_experimental", "count_control"]).map_err(csv_err)?;
        let h = &self.histogram;
        for i in 0..h.experimental.len() {
            w.write_record([
                h.bin_edges[i].to_string(),
                h.bin_edges[i + 1].to_string(),
                h.experimental[i].to_string(),
                h.control[i].to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl ProbeReport {
    pub fn new(layers: Vec<LayerProbe>, lexical: Option<LexicalScores>) -> Self {
        Self { schema_version: PROBE_SCHEMA_VERSION, kurtosis_convention: "excess".into(), layers, lexical }
    }

    /// Writes `probe_report.json` and one `histogram_layer{l}.csv` per layer.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("probe_report.json"), serde_json::to_string_pretty(self)?)?;
        for l in &self.layers {
            l.write_csv(std::fs::File::create(dir.join(format!("histogram_layer{}.csv", l.layer)))?)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joint_histogram_and_csv() {
        let sets = ProbeSets {
            layer: 3,
            experimental_diffs: vec![vec![-1.0, 0.0, 1.0], vec![0.5, -0.5, 0.0]],
            control_diffs: vec![vec![0.0, 0.0, 4.0], vec![0.1, 0.0, 0.0]],
            ..Default::default()
        };
        let lp = LayerProbe::from_sets(&sets, 5).unwrap();
        assert_eq!(lp.histogram.experimental.iter().sum::<usize>(), 6);
        assert_eq!(lp.histogram.control.iter().sum::<usize>(), 6);
        assert_eq!(lp.histogram.bin_edges, vec![-1.0, 0.0, 1.0, 2.0, 3.0, 4.0]);
        assert!(lp.skewness_gap > 0.0);
        let mut buf = Vec::new();
        lp.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "bin_left,bin_right,count_experimental,count_control");
        assert_eq!(text.lines().count(), 6);

        let dir = tempfile::tempdir().unwrap();
        ProbeReport::new(vec![lp], None).save(dir.path()).unwrap();
        assert!(dir.path().join("histogram_layer3.csv").exists());
    }
}
