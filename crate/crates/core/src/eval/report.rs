use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::eval::{confidence_interval, harmonic_or_zero, CaseMetrics, CiKind, MetricSet, GE_WEIGHTS};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Zsre,
    Counterfacts,
}

impl Suite {
    /// The constituents whose harmonic mean is the suite's Score.
    pub fn score_parts(self) -> [&'static str; 3] {
        match self {
            Suite::Zsre => ["efficacy", "paraphrase", "specificity"],
            Suite::Counterfacts => ["es", "ps", "ns"],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// 95% half-width; absent for Score and for metrics with fewer than two samples.
    pub ci95: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditReport {
    pub schema_version: u32,
    pub suite: Suite,
    pub metrics: BTreeMap<String, MetricSummary>,
    /// Evaluation choices such as the entropy weights.
    pub metadata: BTreeMap<String, Value>,
    /// Echo of the plan, noise policy, seeds and checkpoint id.
    pub config: Value,
    pub cases: Vec<CaseMetrics>,
    /// Reference rows such as ES of the unedited model.
    pub sanity: BTreeMap<String, f64>,
}

fn ci_kind(metric: &str) -> CiKind {
    match metric {
        "ge" | "rs" => CiKind::Mean,
        _ => CiKind::Proportion,
    }
}

impl EditReport {
    pub fn new(suite: Suite, set: &MetricSet, config: Value) -> Result<Self> {
        let mut metrics = BTreeMap::new();
        for (name, &mean) in &set.means {
            let ci95 = match set.samples.get(name) {
                Some(xs) if xs.len() >= 2 => Some(confidence_interval(xs, ci_kind(name))?),
                _ => None,
            };
            metrics.insert(name.clone(), MetricSummary { mean, ci95 });
        }
        let parts = suite.score_parts();
        if parts.iter().all(|p| metrics.contains_key(*p)) && !metrics.contains_key("score") {
            let score = harmonic_or_zero(&parts.map(|p| metrics[p].mean));
            metrics.insert("score".into(), MetricSummary { mean: score, ci95: None });
        }
        let mut metadata = BTreeMap::new();
        metadata.insert("ge_ngram_weights".into(), serde_json::to_value(GE_WEIGHTS)?);
        metadata.insert("ci_level".into(), Value::from(0.95));
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            suite,
            metrics,
            metadata,
            config,
            cases: set.cases.clone(),
            sanity: BTreeMap::new(),
        })
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.metrics.get(metric).map(|m| m.mean)
    }

    /// Difference between the stored Score and the harmonic mean of its stored
    /// constituents.
    pub fn score_error(&self) -> Option<f64> {
        let parts = self.suite.score_parts().map(|p| self.mean(p));
        let stored = self.mean("score")?;
        let values: Option<Vec<f64>> = parts.into_iter().collect();
        Some((stored - harmonic_or_zero(&values?)).abs())
    }

    /// Flat `case_id,metric,value` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["case_id", "metric", "value"]).map_err(csv_err)?;
        for case in &self.cases {
            for (metric, value) in &case.values {
                w.write_record([case.case_id.as_str(), metric.as_str(), &value.to_string()]).map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)?)?;
        self.write_csv(std::fs::File::create(dir.join(format!("{stem}.csv")))?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let report: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!("unsupported report schema {}", report.schema_version)));
        }
        Ok(report)
    }
}
