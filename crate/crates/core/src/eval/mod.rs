//! Editing metrics: accuracy and probability suites, generation quality,
//! harmonic scores and confidence intervals, and the report format.

mod metrics;
mod report;
mod scores;
mod text;

pub use metrics::{
    argmax_indicator, cf_generation_metrics, cf_prob_metrics, sequence_log_prob, token_accuracy, zsre_eval,
    CaseMetrics, LogitSource, MetricSet,
};
pub use report::{EditReport, MetricSummary, Suite, REPORT_SCHEMA_VERSION};
pub use scores::{confidence_interval, harmonic_or_zero, harmonic_score, CiKind};
pub use text::{bleu, generation_entropy, ngram_entropy, reference_score, rouge_l, rouge_n, IdfTable, GE_WEIGHTS};
