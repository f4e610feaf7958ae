//! Activation and attention probes over paraphrase pairs, with a control
//! token inserted before the subject, and the statistics used to compare the
//! resulting difference sets.

mod collect;
mod lexical;
mod report;
mod stats;

pub use collect::{
    collect_activation_sets, collect_attention_scores, diff_sets, instrument, Instrumented, LayerAttention, ProbePair,
    ProbeSets,
};
pub use lexical::{lexical_similarity, remove_subject, LexicalScores};
pub use report::{JointHistogram, LayerProbe, ProbeReport, PROBE_SCHEMA_VERSION};
pub use stats::{bin_edges, histogram, moment_stats, StatsSummary, DEFAULT_BINS};
