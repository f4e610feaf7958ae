//! Synthetic datasets and the staged experiment driver.

mod config;
mod dataset;
mod pipeline;

pub use config::{ExperimentConfig, ProbeOptions};
pub use dataset::{
    catalog_relations, gen_synthetic_dataset, read_jsonl, record_texts, relation_catalog, subject_names,
    training_texts, write_jsonl, DatasetOptions, RelationSpec,
};
pub use pipeline::{
    default_alphas, edit_model, evaluate_suite, fact_recall, load_edit_inputs, probe_pairs, run_data, run_edit,
    run_eval, run_pipeline, run_probe, run_train, select_batch, sha256_path, sweep_alpha, tokenize_all,
    training_corpus, CaseLog, EditInputs, PipelineOutput, StageManifest, SweepRow, TrainSummary, BATCH_FILE,
    CORPUS_FILE, DATA_FILE, EDITED_DIR, MODEL_DIR, PLAN_FILE, REPORT_FILE, SWEEP_FILE,
};
