use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::editor::{apply_memit, layer_covariances, EditBatch, EditPlan, FactRecord, MemitOutcome, NoiseVariant};
use crate::error::{Error, Result};
use crate::eval::{
    cf_generation_metrics, cf_prob_metrics, harmonic_or_zero, token_accuracy, zsre_eval, EditReport, MetricSet, Suite,
};
use crate::experiment::{
    catalog_relations, gen_synthetic_dataset, read_jsonl, record_texts, relation_catalog, training_texts, write_jsonl,
    ExperimentConfig,
};
use crate::model::{load_checkpoint, save_checkpoint, train_toy, ModelBundle, Vocab};
use crate::numerics::{derive_seed, RngStream, Tensor};
use crate::probe::{
    collect_activation_sets, collect_attention_scores, diff_sets, lexical_similarity, LayerProbe, ProbePair,
    ProbeReport,
};

pub const DATA_FILE: &str = "data/dataset.jsonl";
pub const MODEL_DIR: &str = "train/model";
pub const CORPUS_FILE: &str = "train/corpus.json";
pub const BATCH_FILE: &str = "edit/batch.jsonl";
pub const PLAN_FILE: &str = "edit/plan.json";
pub const EDITED_DIR: &str = "edit/model";
pub const REPORT_FILE: &str = "eval/report.json";
pub const SWEEP_FILE: &str = "sweep/sweep.csv";

/// What a stage read and wrote, so it can be re-run in isolation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub master_seed: u64,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    /// Path relative to the output directory → SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

/// SHA-256 of a file, or of the sorted `(name, hash)` list of a directory.
pub fn sha256_path(path: &Path) -> Result<String> {
    let mut h = Sha256::new();
    if path.is_dir() {
        let mut entries: Vec<PathBuf> =
            fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        entries.sort();
        for e in entries {
            h.update(e.file_name().unwrap_or_default().to_string_lossy().as_bytes());
            h.update(sha256_path(&e)?.as_bytes());
        }
    } else {
        h.update(fs::read(path)?);
    }
    Ok(hex::encode(h.finalize()))
}

struct StageCtx<'a> {
    root: &'a Path,
    manifest: StageManifest,
}

impl StageCtx<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn input(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(Error::InvalidConfig(format!("missing input {}; run the earlier stages first", p.display())));
        }
        self.manifest.inputs.insert(rel.to_string(), sha256_path(&p)?);
        Ok(p)
    }

    fn external_input(&mut self, p: &Path) -> Result<()> {
        self.manifest.inputs.insert(p.display().to_string(), sha256_path(p)?);
        Ok(())
    }

    fn output(&mut self, rel: &str) -> Result<()> {
        self.manifest.outputs.insert(rel.to_string(), sha256_path(&self.path(rel))?);
        Ok(())
    }

    fn seed(&mut self, label: &str) -> u64 {
        let s = derive_seed(self.manifest.master_seed, label);
        self.manifest.seeds.insert(label.to_string(), s);
        s
    }
}

/// Runs one stage in `<out>/<name>`, writing `manifest.json` on success and a
/// `FAILED` marker with the error otherwise.
fn staged<T>(cfg: &ExperimentConfig, name: &str, body: impl FnOnce(&mut StageCtx<'_>) -> Result<T>) -> Result<T> {
    let root = cfg.output_dir.as_path();
    let dir = root.join(name);
    let result = (|| {
        fs::create_dir_all(&dir)?;
        for stale in ["FAILED", "manifest.json"] {
            if dir.join(stale).exists() {
                fs::remove_file(dir.join(stale))?;
            }
        }
        let config_sha256 = hex::encode(Sha256::digest(cfg.fingerprint()?.as_bytes()));
        let manifest = StageManifest {
            stage: name.to_string(),
            master_seed: cfg.master_seed,
            config_sha256,
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        };
        let mut ctx = StageCtx { root, manifest };
        let value = body(&mut ctx)?;
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&ctx.manifest)? + "\n")?;
        Ok(value)
    })();
    result.map_err(|e| {
        // best effort: the original error matters more than a failed marker write
        let _ = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("FAILED"), format!("{e}\n")));
        Error::Stage { stage: name.to_string(), source: Box::new(e) }
    })
}

/// Generates or imports the dataset.
pub fn run_data(cfg: &ExperimentConfig) -> Result<Vec<FactRecord>> {
    cfg.validate()?;
    staged(cfg, "data", |ctx| {
        let records = match &cfg.dataset_path {
            Some(p) => {
                ctx.external_input(p)?;
                read_jsonl(p)?
            }
            None => {
                let relations = catalog_relations(&cfg.dataset.relations)?;
                gen_synthetic_dataset(&relations, &cfg.dataset, ctx.seed("data"))?
            }
        };
        if records.is_empty() {
            return Err(Error::EmptyInput);
        }
        write_jsonl(&ctx.path(DATA_FILE), &records)?;
        ctx.output(DATA_FILE)?;
        Ok(records)
    })
}

/// Texts and vocabulary for training on `records`. Reference texts come from
/// the catalog entries of the relations the records use.
pub fn training_corpus(records: &[FactRecord]) -> (Vec<String>, Vocab) {
    let relations: Vec<_> =
        relation_catalog().into_iter().filter(|r| records.iter().any(|x| x.relation == r.name)).collect();
    let texts = training_texts(records, &relations);
    let mut all: Vec<&str> = texts.iter().map(String::as_str).collect();
    all.extend(record_texts(records));
    let vocab = Vocab::build(all);
    (texts, vocab)
}

pub fn tokenize_all(vocab: &Vocab, texts: &[String]) -> Result<Vec<Vec<u32>>> {
    texts.iter().map(|t| vocab.tokenize(t)).collect()
}

/// Share of records whose true object is the argmax continuation of the edit prompt.
pub fn fact_recall(model: &ModelBundle, vocab: &Vocab, records: &[FactRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut hits = 0;
    for r in records {
        let acc = token_accuracy(model, &vocab.tokenize(&r.edit_prompt)?, &vocab.tokenize(&r.target_true)?)?;
        hits += usize::from(acc == 1.0);
    }
    Ok(hits as f64 / records.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub losses: Vec<f64>,
    pub recall: f64,
}

pub fn run_train(cfg: &ExperimentConfig) -> Result<(ModelBundle, Vocab, TrainSummary)> {
    staged(cfg, "train", |ctx| {
        let records = read_jsonl(&ctx.input(DATA_FILE)?)?;
        let (texts, vocab) = training_corpus(&records);
        let corpus = tokenize_all(&vocab, &texts)?;
        let longest = corpus.iter().map(Vec::len).max().unwrap_or(0);
        if longest > cfg.model.max_seq {
            return Err(Error::InvalidConfig(format!(
                "training text of {longest} tokens exceeds max_seq {}",
                cfg.model.max_seq
            )));
        }
        let mut config = cfg.model.clone();
        config.vocab_size = vocab.len();
        config.seed = ctx.seed("model");
        let mut rng = RngStream::new(ctx.seed("train"), 0);
        let (model, log) = train_toy(config, &corpus, &cfg.train, &mut rng)?;
        let summary = TrainSummary { losses: log.losses, recall: fact_recall(&model, &vocab, &records)? };
        save_checkpoint(&ctx.path(MODEL_DIR), &model, &vocab)?;
        fs::write(ctx.path(CORPUS_FILE), serde_json::to_string_pretty(&texts)? + "\n")?;
        fs::write(ctx.path("train/train_log.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        for out in [MODEL_DIR, CORPUS_FILE, "train/train_log.json"] {
            ctx.output(out)?;
        }
        Ok((model, vocab, summary))
    })
}

/// Original/paraphrase pairs for every record.
pub fn probe_pairs(records: &[FactRecord]) -> Vec<ProbePair> {
    records
        .iter()
        .flat_map(|r| {
            r.paraphrase_prompts.iter().map(|p| ProbePair {
                original: r.edit_prompt.clone(),
                paraphrase: p.clone(),
                subject: r.subject.clone(),
            })
        })
        .collect()
}

pub fn run_probe(cfg: &ExperimentConfig) -> Result<ProbeReport> {
    staged(cfg, "probe", |ctx| {
        let records = read_jsonl(&ctx.input(DATA_FILE)?)?;
        let (model, vocab) = load_checkpoint(&ctx.input(MODEL_DIR)?)?;
        let pairs = probe_pairs(&records);
        let layers: Vec<usize> =
            if cfg.probe.layers.is_empty() { (1..=model.config.n_layers).collect() } else { cfg.probe.layers.clone() };
        let mut per_layer = Vec::with_capacity(layers.len());
        for &l in &layers {
            let sets = diff_sets(collect_activation_sets(&model, &vocab, &pairs, l)?)?;
            per_layer.push(LayerProbe::from_sets(&sets, cfg.probe.bins)?);
        }
        let report = ProbeReport::new(per_layer, Some(lexical_similarity(&pairs, cfg.probe.smooth_bleu)?));
        report.save(&ctx.path("probe"))?;
        let attention = collect_attention_scores(&model, &vocab, &pairs, &layers)?;
        fs::write(ctx.path("probe/attention.json"), serde_json::to_string(&attention)? + "\n")?;
        ctx.output("probe/probe_report.json")?;
        ctx.output("probe/attention.json")?;
        for l in &layers {
            ctx.output(&format!("probe/histogram_layer{l}.csv"))?;
        }
        Ok(report)
    })
}

/// The records to edit: all of them when there are at most `n`, otherwise a
/// seeded sample of `n` kept in dataset order.
pub fn select_batch(records: &[FactRecord], n: usize, seed: u64) -> Vec<FactRecord> {
    if n >= records.len() {
        return records.to_vec();
    }
    let mut idx: Vec<usize> = (0..records.len()).collect();
    RngStream::new(seed, 0).shuffle(&mut idx);
    let mut chosen = idx[..n].to_vec();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| records[i].clone()).collect()
}

/// Trained model, vocabulary, training corpus and the edit batch.
pub struct EditInputs {
    pub model: ModelBundle,
    pub vocab: Vocab,
    pub corpus: Vec<Vec<u32>>,
    pub batch: EditBatch,
}

/// Reads the edit inputs of a run from its output directory.
pub fn load_edit_inputs(cfg: &ExperimentConfig) -> Result<EditInputs> {
    let manifest = StageManifest {
        stage: String::new(),
        master_seed: cfg.master_seed,
        config_sha256: String::new(),
        seeds: BTreeMap::new(),
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
    };
    read_edit_inputs(cfg, &mut StageCtx { root: &cfg.output_dir, manifest })
}

fn read_edit_inputs(cfg: &ExperimentConfig, ctx: &mut StageCtx<'_>) -> Result<EditInputs> {
    let records = read_jsonl(&ctx.input(DATA_FILE)?)?;
    let (model, vocab) = load_checkpoint(&ctx.input(MODEL_DIR)?)?;
    let texts: Vec<String> = serde_json::from_str(&fs::read_to_string(ctx.input(CORPUS_FILE)?)?)?;
    let corpus = tokenize_all(&vocab, &texts)?;
    let records = select_batch(&records, cfg.n_edits, ctx.seed("batch"));
    Ok(EditInputs { model, vocab, corpus, batch: EditBatch { records, master_seed: cfg.master_seed } })
}

/// Covariances for the plan's critical layers and the multi-layer edit.
pub fn edit_model(inputs: &EditInputs, plan: &EditPlan) -> Result<(ModelBundle, MemitOutcome)> {
    let covs: BTreeMap<usize, Tensor> =
        layer_covariances(&inputs.model, &inputs.corpus, &plan.critical_layers, plan.covariance_ridge)?;
    let outcome = apply_memit(&inputs.model, &inputs.vocab, &inputs.batch, plan, &covs)?;
    let mut edited = inputs.model.clone();
    outcome.delta.apply(&mut edited)?;
    Ok((edited, outcome))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseLog {
    pub case_id: String,
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub delta_norm: f64,
    pub hidden_norm: f64,
}

pub fn run_edit(cfg: &ExperimentConfig) -> Result<(ModelBundle, MemitOutcome)> {
    staged(cfg, "edit", |ctx| {
        let inputs = read_edit_inputs(cfg, ctx)?;
        write_jsonl(&ctx.path(BATCH_FILE), &inputs.batch.records)?;
        ctx.output(BATCH_FILE)?;
        let plan = cfg.resolve_plan(&inputs.model.config, cfg.variant, cfg.alpha_or_default())?;
        plan.save(&ctx.path(PLAN_FILE))?;
        ctx.output(PLAN_FILE)?;

        let (edited, outcome) = edit_model(&inputs, &plan)?;
        outcome.delta.save(&ctx.path("edit/delta"), &inputs.model.config)?;
        save_checkpoint(&ctx.path(EDITED_DIR), &edited, &inputs.vocab)?;
        let logs: Vec<CaseLog> = inputs
            .batch
            .records
            .iter()
            .zip(&outcome.deltas)
            .map(|(r, d)| CaseLog {
                case_id: r.case_id.clone(),
                steps: d.log.steps,
                initial_loss: d.log.losses[0],
                final_loss: *d.log.losses.last().expect("at least one loss"),
                delta_norm: d.delta.iter().map(|x| x * x).sum::<f64>().sqrt(),
                hidden_norm: d.log.hidden_norm,
            })
            .collect();
        fs::write(ctx.path("edit/edit_log.json"), serde_json::to_string_pretty(&logs)? + "\n")?;
        for out in ["edit/delta", EDITED_DIR, "edit/edit_log.json"] {
            ctx.output(out)?;
        }
        Ok((edited, outcome))
    })
}

/// The metrics of `suite` for `records` on `model`.
pub fn evaluate_suite(
    model: &ModelBundle,
    vocab: &Vocab,
    records: &[FactRecord],
    suite: Suite,
    generation_tokens: usize,
) -> Result<MetricSet> {
    match suite {
        Suite::Zsre => zsre_eval(model, vocab, records),
        Suite::Counterfacts => {
            let mut set = cf_prob_metrics(model, vocab, records)?;
            set.merge(cf_generation_metrics(model, vocab, records, generation_tokens)?);
            Ok(set)
        }
    }
}

pub fn run_eval(cfg: &ExperimentConfig) -> Result<EditReport> {
    staged(cfg, "eval", |ctx| {
        let records = read_jsonl(&ctx.input(BATCH_FILE)?)?;
        let plan = EditPlan::load(&ctx.input(PLAN_FILE)?)?;
        let (edited, vocab) = load_checkpoint(&ctx.input(EDITED_DIR)?)?;
        let (base, _) = load_checkpoint(&ctx.input(MODEL_DIR)?)?;
        let set = evaluate_suite(&edited, &vocab, &records, cfg.suite, cfg.generation_tokens)?;
        let echo = json!({
            "master_seed": cfg.master_seed,
            "variant": cfg.variant,
            "alpha": cfg.alpha_or_default(),
            "n_edits": records.len(),
            "plan": plan,
            "checkpoint_sha256": ctx.manifest.inputs[MODEL_DIR],
            "dataset_sha256": ctx.manifest.inputs.get(BATCH_FILE),
        });
        let mut report = EditReport::new(cfg.suite, &set, echo)?;
        let unedited = cf_prob_metrics(&base, &vocab, &records)?;
        report.sanity.insert("unedited_es".into(), unedited.get("es"));
        report.save(&ctx.path("eval"), "report")?;
        ctx.output(REPORT_FILE)?;
        ctx.output("eval/report.csv")?;
        Ok(report)
    })
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub train: TrainSummary,
    pub probe: ProbeReport,
    pub report: EditReport,
}

/// data → train → probe → edit → eval.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput> {
    run_data(cfg)?;
    let (_, _, train) = run_train(cfg)?;
    let probe = run_probe(cfg)?;
    run_edit(cfg)?;
    let report = run_eval(cfg)?;
    Ok(PipelineOutput { train, probe, report })
}

/// 0.05, 0.10, …, 0.50.
pub fn default_alphas() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: NoiseVariant,
    pub alpha: f64,
    /// The suite's three constituents, in [`Suite::score_parts`] order, then Score.
    pub values: [f64; 4],
}

/// Edits a fresh copy of the trained model once per α with the configured
/// variant, plus a baseline with no noise, and writes `sweep/sweep.csv`.
pub fn sweep_alpha(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::InvalidConfig("need at least one alpha".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && a.is_finite())) {
        return Err(Error::InvalidConfig(format!("alpha must be a finite value >= 0, got {a}")));
    }
    staged(cfg, "sweep", |ctx| {
        let inputs = read_edit_inputs(cfg, ctx)?;
        let parts = cfg.suite.score_parts();
        let runs = std::iter::once((NoiseVariant::None, 0.0)).chain(alphas.iter().map(|&a| (cfg.variant, a)));
        let mut rows = Vec::new();
        for (variant, alpha) in runs {
            let plan = cfg.resolve_plan(&inputs.model.config, variant, alpha)?;
            let (edited, _) = edit_model(&inputs, &plan)?;
            let set = match cfg.suite {
                Suite::Zsre => zsre_eval(&edited, &inputs.vocab, &inputs.batch.records)?,
                Suite::Counterfacts => cf_prob_metrics(&edited, &inputs.vocab, &inputs.batch.records)?,
            };
            let v = parts.map(|p| set.get(p));
            rows.push(SweepRow { variant, alpha, values: [v[0], v[1], v[2], harmonic_or_zero(&v)] });
        }
        let mut w = csv::Writer::from_path(ctx.path(SWEEP_FILE)).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let header = ["variant", "alpha", parts[0], parts[1], parts[2], "score"];
        w.write_record(header).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        for r in &rows {
            let mut rec = vec![r.variant.name().to_string(), r.alpha.to_string()];
            rec.extend(r.values.iter().map(f64::to_string));
            w.write_record(&rec).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        w.flush()?;
        drop(w);
        ctx.output(SWEEP_FILE)?;
        Ok(rows)
    })
}
