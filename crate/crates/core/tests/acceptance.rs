//! Acceptance suite: one pass/fail line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed. Exits
//! non-zero when a criterion fails unexpectedly; criteria listed in
//! `KNOWN_FAILURES` are still reported as FAIL but do not fail the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use knowedit::editor::{
    apply_memit, apply_rome, build_noise_policy, compute_delta, layer_covariances, memit_layer_update, sample_noise,
    EditBatch, EditPlan, FactRecord, NoiseVariant,
};
use knowedit::eval::{
    bleu, generation_entropy, harmonic_score, ngram_entropy, reference_score, rouge_l, rouge_n, zsre_eval, IdfTable,
};
use knowedit::experiment::{
    default_alphas, edit_model, load_edit_inputs, run_data, run_edit, run_eval, run_pipeline, run_train, sweep_alpha,
    ExperimentConfig, REPORT_FILE, SWEEP_FILE,
};
use knowedit::model::{
    batch_loss_and_grads, forward, segment, FfnKind, Intervention, ModelBundle, ModelConfig, NoiseDistribution,
    NoiseSpec, TrainOptions, Vocab,
};
use knowedit::numerics::{grad_check, Activation, CeTarget, Graph, RngStream, Segment, StreamId, Tensor, Var};
use knowedit::probe::{collect_activation_sets, diff_sets, moment_stats, ProbePair};
use serde_json::json;

/// Criteria that fail at the default settings; the README explains why.
const KNOWN_FAILURES: &[usize] = &[6];

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn work_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("acceptance scratch directory");
    dir
}

fn random(shape: &[usize], rng: &mut RngStream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.next_normal()).collect()).unwrap()
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn harmonic_fixtures() -> Outcome {
    let a = harmonic_score(&[99.77, 87.88, 24.34]).map_err(|e| e.to_string())?;
    let b = harmonic_score(&[99.75, 99.08, 81.14]).map_err(|e| e.to_string())?;
    ensure(round2(a) == 48.01, format!("first fixture gave {a:.4}"))?;
    ensure(round2(b) == 92.47, format!("second fixture gave {b:.4}"))?;
    Ok(format!("{a:.2}, {b:.2}"))
}

/// Contracts an op's output with a fixed random tensor so every coordinate counts.
fn project<'a>(g: &mut Graph<'a>, y: Var, seed: u64) -> Var {
    let w = random(g.value(y).shape(), &mut RngStream::new(seed, 7));
    let w = g.constant(w);
    let p = g.mul(y, w);
    g.sum(p)
}

fn gradient_suite() -> Outcome {
    const STEP: f64 = 1e-5;
    let mut rng = RngStream::new(31, 0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut check = |name: &str, err: knowedit::Result<f64>| -> Result<(), String> {
        let err = err.map_err(|e| format!("{name}: {e}"))?;
        checked += 1;
        worst = worst.max(err);
        ensure(err <= 1e-5, format!("{name}: relative error {err:e}"))
    };

    for trial in 0..3u64 {
        let (r, c, k) = (2 + rng.next_below(3), 2 + rng.next_below(4), 2 + rng.next_below(3));
        let a = random(&[r, c], &mut rng);
        let b = random(&[c, k], &mut rng);
        let bias = random(&[c], &mut rng);
        check(
            "matmul",
            grad_check(
                |g, x| {
                    let b = g.constant(b.clone());
                    let y = g.matmul(x, b);
                    project(g, y, trial)
                },
                &a,
                STEP,
            ),
        )?;
        check(
            "matmul rhs",
            grad_check(
                |g, x| {
                    let a = g.constant(a.clone());
                    let y = g.matmul(a, x);
                    project(g, y, trial)
                },
                &b,
                STEP,
            ),
        )?;
        check(
            "add+mul+scale",
            grad_check(
                |g, x| {
                    let y = g.mul(x, x);
                    let z = g.add(y, x);
                    let s = g.scale(z, -0.7);
                    project(g, s, trial)
                },
                &a,
                STEP,
            ),
        )?;
        check(
            "add_bias",
            grad_check(
                |g, x| {
                    let b = g.constant(bias.clone());
                    let y = g.add_bias(x, b);
                    project(g, y, trial)
                },
                &a,
                STEP,
            ),
        )?;
        check(
            "add_bias bias",
            grad_check(
                |g, x| {
                    let a = g.constant(a.clone());
                    let y = g.add_bias(a, x);
                    project(g, y, trial)
                },
                &bias,
                STEP,
            ),
        )?;
        for act in [Activation::GeluNew, Activation::Silu] {
            check(
                &format!("{act:?}"),
                grad_check(
                    |g, x| {
                        let y = g.activation(x, act);
                        project(g, y, trial)
                    },
                    &a,
                    STEP,
                ),
            )?;
        }
        let gain = random(&[c], &mut rng);
        check(
            "layer_norm",
            grad_check(
                |g, x| {
                    let gn = g.constant(gain.clone());
                    let bs = g.constant(bias.clone());
                    let y = g.layer_norm(x, gn, bs);
                    project(g, y, trial)
                },
                &a,
                STEP,
            ),
        )?;
        check(
            "layer_norm gain",
            grad_check(
                |g, x| {
                    let inp = g.constant(a.clone());
                    let bs = g.constant(bias.clone());
                    let y = g.layer_norm(inp, x, bs);
                    project(g, y, trial)
                },
                &gain,
                STEP,
            ),
        )?;
        let table = random(&[6, c], &mut rng);
        check(
            "embed",
            grad_check(
                |g, x| {
                    let y = g.embed(x, &[3, 1, 3, 5]);
                    project(g, y, trial)
                },
                &table,
                STEP,
            ),
        )?;

        let heads = 2;
        let (t, d) = (3 + rng.next_below(3), 4);
        let (q, kk, v) = (random(&[t, d], &mut rng), random(&[t, d], &mut rng), random(&[t, d], &mut rng));
        let segs = [Segment { start: 0, len: t }];
        for which in 0..3 {
            let point = [&q, &kk, &v][which].clone();
            check(
                "causal_attention",
                grad_check(
                    |g, x| {
                        let mut ins = [g.constant(q.clone()), g.constant(kk.clone()), g.constant(v.clone())];
                        ins[which] = x;
                        let y = g.causal_attention(ins[0], ins[1], ins[2], heads, &segs);
                        project(g, y, trial)
                    },
                    &point,
                    STEP,
                ),
            )?;
        }
        let row = random(&[d], &mut rng);
        check(
            "add_row",
            grad_check(
                |g, x| {
                    let base = g.constant(q.clone());
                    let y = g.add_row(base, 1, x);
                    project(g, y, trial)
                },
                &row,
                STEP,
            ),
        )?;
        let targets = [CeTarget { row: 0, class: 1, weight: 0.5 }, CeTarget { row: t - 1, class: 3, weight: 1.0 }];
        check("cross_entropy", grad_check(|g, x| g.cross_entropy(x, &targets), &q, STEP))?;
    }

    // whole-model parameter gradients, both FFN variants
    for (kind, seed) in [(FfnKind::Standard, 1u64), (FfnKind::Gated, 2)] {
        let mut cfg = ModelConfig {
            n_layers: 2,
            d_model: 8,
            d_ffn: 12,
            n_heads: 2,
            vocab_size: 11,
            max_seq: 8,
            seed,
            ..Default::default()
        };
        if kind == FfnKind::Gated {
            cfg = cfg.gated();
        }
        let mut m = ModelBundle::init(cfg).unwrap();
        let mut r = RngStream::new(seed, 1);
        for t in m.tensors_mut() {
            for x in t.data_mut() {
                *x += 0.3 * r.next_normal();
            }
        }
        let seqs: Vec<Vec<u32>> = vec![vec![3, 4, 5, 6, 2], vec![7, 8, 9]];
        let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
        let (_, grads) = batch_loss_and_grads(&m, &refs).map_err(|e| e.to_string())?;
        let mut model_worst: f64 = 0.0;
        for ti in 0..grads.len() {
            for i in 0..grads[ti].len() {
                let mut plus = m.clone();
                plus.tensors_mut()[ti].data_mut()[i] += STEP;
                let mut minus = m.clone();
                minus.tensors_mut()[ti].data_mut()[i] -= STEP;
                let fd = (batch_loss_and_grads(&plus, &refs).unwrap().0
                    - batch_loss_and_grads(&minus, &refs).unwrap().0)
                    / (2.0 * STEP);
                model_worst = model_worst.max((grads[ti][i] - fd).abs() / (fd.abs() + 1e-12));
            }
        }
        check(&format!("{kind:?} model parameters"), Ok(model_worst))?;
    }
    Ok(format!("{checked} checks, worst relative error {worst:.1e}"))
}

fn rome_properties() -> Outcome {
    let mut rng = RngStream::new(3, 0);
    let (mut exact, mut preserve) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let f = 2 + (i * 62) / 99;
        let d = 2 + rng.next_below(16);
        let w = random(&[f, d], &mut rng);
        let k = random(&[f], &mut rng).into_data();
        let v = random(&[d], &mut rng).into_data();
        let updated = apply_rome(&w, &k, &v, &Tensor::identity(f)).map_err(|e| e.to_string())?;
        let read = |m: &Tensor, key: &[f64]| Tensor::matrix(1, f, key.to_vec()).unwrap().matmul(m).unwrap().into_data();
        for (a, b) in read(&updated, &k).iter().zip(&v) {
            exact = exact.max((a - b).abs());
        }
        // a key orthogonal to k*
        let mut o = random(&[f], &mut rng).into_data();
        let proj = knowedit::numerics::dot(&o, &k) / knowedit::numerics::dot(&k, &k);
        o.iter_mut().zip(&k).for_each(|(x, kv)| *x -= proj * kv);
        for (a, b) in read(&updated, &o).iter().zip(read(&w, &o)) {
            preserve = preserve.max((a - b).abs());
        }
    }
    ensure(exact <= 1e-8, format!("exactness error {exact:e}"))?;
    ensure(preserve <= 1e-10, format!("orthogonal key moved by {preserve:e}"))?;
    Ok(format!("100 instances, exactness {exact:.1e}, orthogonal preservation {preserve:.1e}"))
}

fn memit_oracle() -> Outcome {
    let col = |v: &[f64]| Tensor::matrix(v.len(), 1, v.to_vec()).unwrap();
    let r = [0.3, -1.2, 2.0, 0.7];
    let w = Tensor::matrix(3, 4, (0..12).map(|i| i as f64 * 0.1).collect()).unwrap();
    let k = [0.0, 1.0, 0.0];
    let upd = memit_layer_update(&Tensor::identity(3), 1.0, &col(&k), &col(&r)).map_err(|e| e.to_string())?;
    let after = w.add(&upd).unwrap();
    let mut half: f64 = 0.0;
    for j in 0..4 {
        half = half.max((after.get(1, j) - (w.get(1, j) + r[j] / 2.0)).abs());
    }
    ensure(half <= 1e-10, format!("half-way error {half:e}"))?;

    let mut rng = RngStream::new(8, 0);
    let mut limit: f64 = 0.0;
    for _ in 0..10 {
        let (f, d) = (6, 5);
        let w = random(&[f, d], &mut rng);
        let k = random(&[f], &mut rng).into_data();
        let v = random(&[d], &mut rng).into_data();
        let m = random(&[f, f], &mut rng);
        let c = m.transpose().matmul(&m).unwrap().add(&Tensor::identity(f)).unwrap();
        let cur = Tensor::matrix(1, f, k.clone()).unwrap().matmul(&w).unwrap().into_data();
        let resid: Vec<f64> = v.iter().zip(&cur).map(|(a, b)| a - b).collect();
        let memit = w.add(&memit_layer_update(&c, 1e-9, &col(&k), &col(&resid)).unwrap()).unwrap();
        let rome = apply_rome(&w, &k, &v, &c).unwrap();
        limit = limit.max(memit.sub(&rome).unwrap().max_abs());
    }
    ensure(limit <= 1e-6, format!("small-λ limit differs from rank-one by {limit:e}"))?;
    Ok(format!("half-way {half:.1e}, small-λ vs rank-one {limit:.1e}"))
}

fn default_run(seed: u64) -> ExperimentConfig {
    ExperimentConfig { master_seed: seed, output_dir: work_dir().join(format!("toy-seed{seed}")), ..Default::default() }
}

fn trained(seed: u64) -> Result<(ExperimentConfig, f64), String> {
    let cfg = default_run(seed);
    run_data(&cfg).map_err(|e| e.to_string())?;
    let (_, _, summary) = run_train(&cfg).map_err(|e| e.to_string())?;
    Ok((cfg, summary.recall))
}

fn toy_end_to_end() -> Outcome {
    let (cfg, recall) = trained(0)?;
    ensure(recall >= 0.9, format!("recall {:.1}% after training", 100.0 * recall))?;
    run_edit(&cfg).map_err(|e| e.to_string())?;
    let report = run_eval(&cfg).map_err(|e| e.to_string())?;
    let efficacy = report.mean("efficacy").unwrap_or(f64::NAN);
    ensure(efficacy == 100.0, format!("post-edit efficacy {efficacy}"))?;
    Ok(format!(
        "recall {:.1}%, {} edits, efficacy {efficacy}, paraphrase {:.1}, specificity {:.1}",
        100.0 * recall,
        report.cases.len(),
        report.mean("paraphrase").unwrap_or(f64::NAN),
        report.mean("specificity").unwrap_or(f64::NAN)
    ))
}

fn dne_generalization() -> Outcome {
    const ALPHA: f64 = 0.4;
    let seeds = [0u64, 1, 2, 3, 4];
    let variants = [NoiseVariant::None, NoiseVariant::Dne, NoiseVariant::Sne, NoiseVariant::Un, NoiseVariant::Rnp];
    let results: Vec<Result<serde_json::Value, String>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || -> Result<serde_json::Value, String> {
                    let cfg = default_run(seed);
                    if !cfg.output_dir.join("train/manifest.json").exists() {
                        trained(seed)?;
                    }
                    let inputs = load_edit_inputs(&cfg).map_err(|e| e.to_string())?;
                    let mut row = BTreeMap::new();
                    for v in variants {
                        let plan = cfg.resolve_plan(&inputs.model.config, v, ALPHA).map_err(|e| e.to_string())?;
                        let (edited, _) = edit_model(&inputs, &plan).map_err(|e| e.to_string())?;
                        let set =
                            zsre_eval(&edited, &inputs.vocab, &inputs.batch.records).map_err(|e| e.to_string())?;
                        row.insert(v.name().to_string(), set.get("paraphrase"));
                    }
                    // reported only: the same comparison with the loss threshold disabled
                    let mut fixed = BTreeMap::new();
                    for v in [NoiseVariant::None, NoiseVariant::Dne] {
                        let mut plan = cfg.resolve_plan(&inputs.model.config, v, ALPHA).map_err(|e| e.to_string())?;
                        plan.stop_threshold = 0.0;
                        let (edited, _) = edit_model(&inputs, &plan).map_err(|e| e.to_string())?;
                        let set =
                            zsre_eval(&edited, &inputs.vocab, &inputs.batch.records).map_err(|e| e.to_string())?;
                        fixed.insert(v.name().to_string(), set.get("paraphrase"));
                    }
                    Ok(json!({ "seed": seed, "paraphrase": row, "paraphrase_without_early_stop": fixed }))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("seed thread")).collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mean = |key: &str, v: &str| rows.iter().map(|r| r[key][v].as_f64().unwrap()).sum::<f64>() / rows.len() as f64;
    let means: BTreeMap<&str, f64> = variants.iter().map(|v| (v.name(), mean("paraphrase", v.name()))).collect();
    let fixed = (mean("paraphrase_without_early_stop", "NONE"), mean("paraphrase_without_early_stop", "DNE"));
    let report = json!({ "alpha": ALPHA, "edits": 8, "per_seed": rows, "mean_paraphrase": means,
        "mean_paraphrase_without_early_stop": { "NONE": fixed.0, "DNE": fixed.1 } });
    let path = work_dir().join("dne_generalization.json");
    std::fs::write(&path, serde_json::to_string_pretty(&report).unwrap()).map_err(|e| e.to_string())?;
    for r in &rows {
        println!("      seed {}: {}", r["seed"], r["paraphrase"]);
    }
    println!("      without early stop: NONE {:.2}, DNE {:.2}", fixed.0, fixed.1);
    println!("      report: {}", path.display());
    let summary = format!(
        "mean paraphrase DNE {:.2} vs NONE {:.2} (SNE {:.2}, UN {:.2}, RNP {:.2})",
        means["DNE"], means["NONE"], means["SNE"], means["UN"], means["RNP"]
    );
    ensure(means["DNE"] >= means["NONE"], summary.clone())?;
    Ok(summary)
}

fn tiny_setup() -> (ModelBundle, Vocab) {
    let vocab = Vocab::build(["bo ka plays golf", "zu mi plays chess", "the tennis rugby"]);
    let cfg = ModelConfig {
        n_layers: 3,
        d_model: 12,
        d_ffn: 20,
        n_heads: 2,
        vocab_size: vocab.len(),
        max_seq: 12,
        seed: 3,
        ..Default::default()
    };
    (ModelBundle::init(cfg).unwrap(), vocab)
}

fn tiny_record(case_id: &str, subject: &str, target: &str) -> FactRecord {
    FactRecord {
        case_id: case_id.into(),
        subject: subject.into(),
        relation: "plays".into(),
        target_true: "chess".into(),
        target_new: target.into(),
        edit_prompt: format!("{subject} plays"),
        paraphrase_prompts: vec![format!("the {subject} plays")],
        neighborhood_prompts: vec![],
        reference_texts: vec![],
    }
}

fn noise_invariants() -> Outcome {
    let (model, vocab) = tiny_setup();
    let plan = EditPlan { layer: 2, critical_layers: vec![1, 2], ..EditPlan::for_model(&model.config) };
    let corpus: Vec<Vec<u32>> =
        ["bo ka plays golf", "zu mi plays chess"].iter().map(|t| vocab.tokenize(t).unwrap()).collect();
    let covs = layer_covariances(&model, &corpus, &plan.critical_layers, None).map_err(|e| e.to_string())?;
    let batch = EditBatch {
        records: vec![tiny_record("a", "bo ka", "golf"), tiny_record("b", "zu mi", "tennis")],
        master_seed: 5,
    };
    let reference = apply_memit(&model, &vocab, &batch, &plan, &covs).map_err(|e| e.to_string())?;
    for v in NoiseVariant::ALL {
        let p = plan.clone().with_noise(build_noise_policy(v, 0.0, plan.layer).unwrap());
        let d = compute_delta(&model, &vocab, &batch.records[0], &p, 5).map_err(|e| e.to_string())?;
        ensure(d == reference.deltas[0], format!("{v} at alpha 0 changes compute_delta"))?;
        let out = apply_memit(&model, &vocab, &batch, &p, &covs).map_err(|e| e.to_string())?;
        ensure(out.delta == reference.delta, format!("{v} at alpha 0 changes apply_memit"))?;
    }

    // noise at (layer 2, position 2) of 3 layers and 5 positions
    let toks = [3u32, 4, 5, 6, 7];
    let reads: Vec<Intervention> =
        (1..=3).flat_map(|l| (0..5).map(move |p| Intervention::ReadAct { layer: l, position: p })).collect();
    let clean = forward(&model, &toks, &reads).unwrap();
    let spec = NoiseSpec {
        distribution: NoiseDistribution::Gaussian,
        scale: 0.5,
        stream: StreamId { master_seed: 1, stream_id: 0 },
    };
    let mut ivs = vec![Intervention::NoiseAct { layers: vec![2], positions: vec![2], noise: spec }];
    ivs.extend(reads.iter().cloned());
    let noisy = forward(&model, &toks, &ivs).unwrap();
    let mut untouched = 0;
    for (a, b) in clean.activations.iter().zip(&noisy.activations) {
        let unaffected = a.layer < 2 || (a.layer == 2 && a.position != 2) || a.position < 2;
        if unaffected {
            ensure(a.values == b.values, format!("activation at layer {} position {} changed", a.layer, a.position))?;
            untouched += 1;
        }
    }
    let target =
        noisy.activations.iter().zip(&clean.activations).find(|(a, _)| (a.layer, a.position) == (2, 2)).unwrap();
    ensure(target.0.values != target.1.values, "target site did not change")?;

    let mut worst: f64 = 0.0;
    for (variant, alpha, sigma) in [(NoiseVariant::Dne, 0.4, 0.4), (NoiseVariant::Un, 0.3, 0.3 / 3f64.sqrt())] {
        let policy = build_noise_policy(variant, alpha, 2).unwrap();
        let xs = sample_noise(&policy, 100_000, &mut RngStream::new(77, 0));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64).sqrt();
        let rel = (std - sigma).abs() / sigma;
        worst = worst.max(rel);
        ensure(rel <= 0.01, format!("{variant} std {std:.5} vs {sigma:.5}"))?;
    }
    Ok(format!(
        "alpha 0 bit-exact for {} variants, {untouched} untouched sites identical, std within {:.2}%",
        NoiseVariant::ALL.len(),
        100.0 * worst
    ))
}

fn probe_oracle() -> Outcome {
    let mut rng = RngStream::new(2024, 0);
    // (name, samples, skewness, excess kurtosis)
    let draws: [(&str, Vec<f64>, f64, f64); 3] = [
        ("normal", (0..100_000).map(|_| rng.next_normal()).collect(), 0.0, 0.0),
        ("uniform", (0..100_000).map(|_| rng.next_uniform()).collect(), 0.0, -1.2),
        ("exponential", (0..100_000).map(|_| -(1.0 - rng.next_uniform()).ln()).collect(), 2.0, 6.0),
    ];
    let mut found = Vec::new();
    for (name, xs, skew, kurt) in &draws {
        let s = moment_stats(xs, 100).map_err(|e| e.to_string())?;
        ensure(
            (s.skewness - skew).abs() <= 0.05 && (s.excess_kurtosis - kurt).abs() <= 0.1,
            format!("{name}: skew {:.4} kurt {:.4}", s.skewness, s.excess_kurtosis),
        )?;
        found.push(format!("{name} {:.3}/{:.3}", s.skewness, s.excess_kurtosis));
    }
    // {0, 0, 1} repeated twice has the same 1/n moments and meets the size floor
    let small = moment_stats(&[0.0, 0.0, 1.0, 0.0, 0.0, 1.0], 10).map_err(|e| e.to_string())?;
    ensure((small.skewness - 0.5f64.sqrt()).abs() <= 1e-6, format!("{{0,0,1}} skew {}", small.skewness))?;

    let vocab = Vocab::build(["Leo Messi plays soccer", "the sport of leo messi is"]);
    let cfg = ModelConfig {
        n_layers: 2,
        d_model: 8,
        d_ffn: 16,
        n_heads: 2,
        vocab_size: vocab.len(),
        max_seq: 12,
        seed: 5,
        ..Default::default()
    };
    let model = ModelBundle::init(cfg).unwrap();
    let pair = |a: &str, b: &str| ProbePair { original: a.into(), paraphrase: b.into(), subject: "Leo Messi".into() };
    let pairs =
        [pair("Leo Messi plays", "Leo Messi plays"), pair("Leo Messi plays soccer", "the sport of Leo Messi is")];
    let sets = diff_sets(collect_activation_sets(&model, &vocab, &pairs, 1).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    ensure(
        sets.experimental_diffs.len() == 2 && sets.control_diffs.len() == 2,
        "difference sets are not one per pair",
    )?;
    ensure(sets.experimental.len() == 4 && sets.control.len() == 4, "activation sets are not two per pair")?;
    ensure(
        sets.experimental_diffs[0].iter().chain(&sets.control_diffs[0]).all(|&x| x == 0.0),
        "identical pair has non-zero differences",
    )?;
    Ok(format!("skew/kurt {}, {{0,0,1}} skew {:.7}", found.join(", "), small.skewness))
}

fn metric_fixtures() -> Outcome {
    let a = segment("the quick brown fox jumps over");
    let b = segment("lorem ipsum dolor sit amet");
    let same = [bleu(&a, &a, false), rouge_n(&a, &a, 1), rouge_n(&a, &a, 2), rouge_l(&a, &a)];
    ensure(same.iter().all(|x| (x - 1.0).abs() < 1e-12), format!("identical text scores {same:?}"))?;
    let apart = [bleu(&a, &b, false), rouge_n(&a, &b, 1), rouge_n(&a, &b, 2), rouge_l(&a, &b)];
    ensure(apart.iter().all(|&x| x == 0.0), format!("disjoint text scores {apart:?}"))?;
    let r1 = rouge_n(&segment("the cat sat"), &segment("the cat"), 1);
    ensure(r1 == 0.8, format!("ROUGE-1 hand case {r1}"))?;
    let h2 = ngram_entropy(&segment("a b a b"), 2);
    ensure((h2 - 0.9183).abs() <= 1e-4, format!("bigram entropy {h2}"))?;
    ensure(generation_entropy(&segment("a a a a")).map_err(|e| e.to_string())? == 0.0, "repeated token entropy")?;
    let refs = vec!["paris is the capital city".to_string()];
    let idf = IdfTable::from_documents(&["paris is the capital city", "rome is old"]);
    let rs = reference_score("paris is the capital city", &refs, &idf).map_err(|e| e.to_string())?;
    ensure((rs - 100.0).abs() < 1e-9, format!("identical reference score {rs}"))?;
    Ok(format!("ROUGE-1 {r1}, H2 {h2:.4}, RS {rs:.1}"))
}

fn determinism() -> Outcome {
    let mut artifacts = Vec::new();
    for run in ["first", "second"] {
        let mut cfg = ExperimentConfig {
            master_seed: 5,
            output_dir: work_dir().join(format!("determinism-{run}")),
            n_edits: 4,
            ..Default::default()
        };
        cfg.dataset.n_subjects = 16;
        cfg.model = ModelConfig { n_layers: 2, d_model: 32, d_ffn: 64, n_heads: 2, ..Default::default() };
        cfg.train = TrainOptions { steps: 80, ..Default::default() };
        run_pipeline(&cfg).map_err(|e| e.to_string())?;
        sweep_alpha(&cfg, &default_alphas()).map_err(|e| e.to_string())?;
        let read = |rel: &str| std::fs::read(cfg.output_dir.join(rel)).map_err(|e| e.to_string());
        artifacts.push((read(REPORT_FILE)?, read(SWEEP_FILE)?));
    }
    ensure(artifacts[0].0 == artifacts[1].0, "EditReport JSON differs between runs")?;
    ensure(artifacts[0].1 == artifacts[1].1, "sweep CSV differs between runs")?;
    let rows = String::from_utf8_lossy(&artifacts[0].1).lines().count() - 1;
    Ok(format!("report {} bytes and sweep of {rows} rows identical", artifacts[0].0.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "harmonic-score fixtures", harmonic_fixtures),
        (2, "gradient suite", gradient_suite),
        (3, "rank-one edit properties", rome_properties),
        (4, "multi-layer update oracle", memit_oracle),
        (5, "toy end-to-end edit", toy_end_to_end),
        (6, "deep-noise paraphrase generalization", dne_generalization),
        (7, "noise policy invariants", noise_invariants),
        (8, "probe oracle", probe_oracle),
        (9, "metric fixtures", metric_fixtures),
        (10, "pipeline determinism", determinism),
    ];
    let filter: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut unexpected = Vec::new();
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS [{id:>2}] {name}: {detail} ({secs:.1}s)"),
            Err(why) => {
                let known = KNOWN_FAILURES.contains(&id);
                println!("FAIL [{id:>2}] {name}: {why} ({secs:.1}s){}", if known { " [known failure]" } else { "" });
                if !known {
                    unexpected.push(id);
                }
            }
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance failures: {unexpected:?}");
        std::process::exit(1);
    }
}
