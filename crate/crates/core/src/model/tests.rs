use super::forward::{build, DeltaSite, ParamMode};
use super::*;
use crate::numerics::{grad_check, CeTarget, RngStream, StreamId, Tensor};
use crate::Error;

fn tiny(kind: FfnKind) -> ModelConfig {
    let cfg = ModelConfig {
        n_layers: 2,
        d_model: 8,
        d_ffn: 12,
        n_heads: 2,
        vocab_size: 11,
        max_seq: 8,
        seed: 5,
        ..Default::default()
    };
    match kind {
        FfnKind::Standard => cfg,
        FfnKind::Gated => cfg.gated(),
    }
}

/// Init scales are tiny; spread the weights so gradients are well away from zero.
fn spread(model: &mut ModelBundle, seed: u64) {
    let mut rng = RngStream::new(seed, 1);
    for t in model.tensors_mut() {
        for x in t.data_mut() {
            *x += 0.3 * rng.next_normal();
        }
    }
}

fn noise(scale: f64) -> NoiseSpec {
    NoiseSpec { distribution: NoiseDistribution::Gaussian, scale, stream: StreamId { master_seed: 1, stream_id: 2 } }
}

#[test]
fn zero_noise_and_zero_delta_are_bit_identical() {
    let m = ModelBundle::init(tiny(FfnKind::Standard)).unwrap();
    let toks = [3, 4, 5, 6];
    let base = forward(&m, &toks, &[]).unwrap().logits;
    let quiet = Intervention::NoiseAct { layers: vec![1, 2], positions: vec![1, 3], noise: noise(0.0) };
    assert_eq!(forward(&m, &toks, &[quiet]).unwrap().logits, base);
    let zero = Intervention::AddHidden { layer: 1, position: 2, delta: Tensor::zeros(&[8]) };
    assert_eq!(forward(&m, &toks, &[zero]).unwrap().logits, base);
    let loud = Intervention::NoiseAct { layers: vec![1], positions: vec![1], noise: noise(0.5) };
    assert_ne!(forward(&m, &toks, &[loud]).unwrap().logits, base);
}

#[test]
fn reads_do_not_change_logits() {
    for kind in [FfnKind::Standard, FfnKind::Gated] {
        let m = ModelBundle::init(tiny(kind)).unwrap();
        let toks = [1, 2, 9, 4, 7];
        let base = forward(&m, &toks, &[]).unwrap();
        let reads = [
            Intervention::ReadAct { layer: 1, position: 3 },
            Intervention::ReadAttn { layer: 2, position: 4 },
            Intervention::ReadHidden { layer: 2, position: 0 },
        ];
        let t = forward(&m, &toks, &reads).unwrap();
        assert_eq!(t.logits, base.logits);
        assert_eq!(t.activations.len(), 1);
        assert_eq!(t.activations[0].values.len(), 12);
        assert_eq!(t.attention[0].weights.len(), 5);
        assert_eq!(t.hidden[0].residual.len(), 8);
        if kind == FfnKind::Standard {
            assert_eq!(t.activations[0].values, t.activations[0].key);
        } else {
            assert_ne!(t.activations[0].values, t.activations[0].key);
        }
    }
}

#[test]
fn attention_rows_are_causal() {
    let m = ModelBundle::init(tiny(FfnKind::Standard)).unwrap();
    let one = forward(&m, &[4], &[Intervention::ReadAttn { layer: 1, position: 0 }]).unwrap();
    assert_eq!(one.attention[0].weights, vec![1.0]);
    let toks = [3, 4, 5, 6, 7, 8];
    let reads: Vec<Intervention> =
        (1..=2).flat_map(|l| (0..6).map(move |p| Intervention::ReadAttn { layer: l, position: p })).collect();
    let t = forward(&m, &toks, &reads).unwrap();
    for row in &t.attention {
        assert!((row.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(row.weights[row.position + 1..].iter().all(|&w| w == 0.0));
    }
}

#[test]
fn add_hidden_changes_only_later_positions() {
    let m = ModelBundle::init(tiny(FfnKind::Standard)).unwrap();
    let toks = [3, 4, 5, 6];
    let base = forward(&m, &toks, &[]).unwrap().logits;
    let d = Intervention::AddHidden { layer: 1, position: 2, delta: Tensor::full(&[8], 0.5) };
    let edited = forward(&m, &toks, &[d]).unwrap().logits;
    assert_eq!(base.row(0), edited.row(0));
    assert_eq!(base.row(1), edited.row(1));
    assert_ne!(base.row(2), edited.row(2));
}

#[test]
fn noise_is_local_to_configured_sites() {
    let m = ModelBundle::init(tiny(FfnKind::Standard)).unwrap();
    let toks = [3, 4, 5, 6, 7];
    let reads: Vec<Intervention> =
        (1..=2).flat_map(|l| (0..5).map(move |p| Intervention::ReadAct { layer: l, position: p })).collect();
    let clean = forward(&m, &toks, &reads).unwrap();
    let mut ivs = vec![Intervention::NoiseAct { layers: vec![2], positions: vec![2], noise: noise(0.7) }];
    ivs.extend(reads.iter().cloned());
    let noisy = forward(&m, &toks, &ivs).unwrap();
    for (a, b) in clean.activations.iter().zip(&noisy.activations) {
        if (a.layer, a.position) == (2, 2) {
            assert_ne!(a.values, b.values);
        } else {
            assert_eq!(a.values, b.values, "layer {} position {}", a.layer, a.position);
        }
    }
}

#[test]
fn out_of_range_sites_are_rejected() {
    let m = ModelBundle::init(tiny(FfnKind::Standard)).unwrap();
    let toks = [3, 4];
    assert!(matches!(
        forward(&m, &toks, &[Intervention::ReadAct { layer: 3, position: 0 }]),
        Err(Error::LayerOutOfRange { .. })
    ));
    assert!(matches!(
        forward(&m, &toks, &[Intervention::ReadAct { layer: 0, position: 0 }]),
        Err(Error::LayerOutOfRange { .. })
    ));
    assert!(matches!(
        forward(&m, &toks, &[Intervention::ReadAttn { layer: 1, position: 2 }]),
        Err(Error::PositionOutOfRange { .. })
    ));
    assert!(matches!(forward(&m, &[99], &[]), Err(Error::TokenOutOfRange { .. })));
    assert!(matches!(forward(&m, &[1; 9], &[]), Err(Error::PromptTooLong { .. })));
}

#[test]
fn gated_and_standard_differ() {
    let std_m = ModelBundle::init(tiny(FfnKind::Standard)).unwrap();
    let mut gated = ModelBundle::init(tiny(FfnKind::Gated)).unwrap();
    gated.token_embedding = std_m.token_embedding.clone();
    gated.position_embedding = std_m.position_embedding.clone();
    let toks = [3, 4, 5];
    assert_ne!(forward(&std_m, &toks, &[]).unwrap().logits, forward(&gated, &toks, &[]).unwrap().logits);
}

/// Reverse-mode parameter gradients against central differences, every coordinate.
fn check_parameter_gradients(kind: FfnKind, seed: u64) -> f64 {
    let mut m = ModelBundle::init(tiny(kind)).unwrap();
    spread(&mut m, seed);
    let seqs: Vec<Vec<u32>> = vec![vec![3, 4, 5, 6, 2], vec![7, 8, 9]];
    let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
    let (_, grads) = batch_loss_and_grads(&m, &refs).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let n_tensors = grads.len();
    for ti in 0..n_tensors {
        for i in 0..grads[ti].len() {
            let mut plus = m.clone();
            plus.tensors_mut()[ti].data_mut()[i] += h;
            let mut minus = m.clone();
            minus.tensors_mut()[ti].data_mut()[i] -= h;
            let fd = (batch_loss_and_grads(&plus, &refs).unwrap().0 - batch_loss_and_grads(&minus, &refs).unwrap().0)
                / (2.0 * h);
            let err = (grads[ti][i] - fd).abs() / (fd.abs() + 1e-12);
            if err > 1e-5 {
                let name = &m.named_tensors()[ti].0;
                eprintln!("{kind:?} {name}[{i}]: ad {} fd {fd} err {err:e}", grads[ti][i]);
            }
            worst = worst.max(err);
        }
    }
    worst
}

#[test]
fn parameter_gradients_standard_ffn() {
    let err = check_parameter_gradients(FfnKind::Standard, 1);
    assert!(err <= 1e-5, "{err:e}");
}

#[test]
fn parameter_gradients_gated_ffn() {
    let err = check_parameter_gradients(FfnKind::Gated, 2);
    assert!(err <= 1e-5, "{err:e}");
}

#[test]
fn delta_gradient_through_two_layer_model() {
    for kind in [FfnKind::Standard, FfnKind::Gated] {
        let mut m = ModelBundle::init(tiny(kind)).unwrap();
        spread(&mut m, 3);
        let toks = [3u32, 4, 5, 6];
        let point = Tensor::vector((0..8).map(|i| 0.1 * i as f64 - 0.3).collect());
        let err = grad_check(
            |g, delta| {
                let site = DeltaSite { layer: 1, position: 1, var: delta };
                let b = build(g, &m, ParamMode::Frozen, &[&toks], &[], Some(site)).unwrap();
                g.cross_entropy(
                    b.logits,
                    &[CeTarget { row: 3, class: 9, weight: 1.0 }, CeTarget { row: 2, class: 6, weight: 1.0 }],
                )
            },
            &point,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-5, "{kind:?}: {err:e}");
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let vocab = Vocab::build(["a b c d e f g h"]);
    let cfg = ModelConfig { vocab_size: vocab.len(), ..tiny(FfnKind::Gated) };
    let mut m = ModelBundle::init(cfg).unwrap();
    spread(&mut m, 4);
    save_checkpoint(dir.path(), &m, &vocab).unwrap();
    let (back, v2) = load_checkpoint(dir.path()).unwrap();
    assert_eq!(v2, vocab);
    let toks = [3, 4, 5];
    assert_eq!(forward(&m, &toks, &[]).unwrap().logits, forward(&back, &toks, &[]).unwrap().logits);
    assert_eq!(back, m);
}

#[test]
fn training_is_reproducible_and_errors_on_zero_steps() {
    let cfg = tiny(FfnKind::Standard);
    let corpus = vec![vec![3, 4, 5, 6], vec![7, 8, 9, 10], vec![3, 8, 5, 10]];
    let opts = TrainOptions { steps: 20, batch_size: 2, ..Default::default() };
    let (a, la) = train_toy(cfg.clone(), &corpus, &opts, &mut RngStream::new(1, 0)).unwrap();
    let (b, lb) = train_toy(cfg.clone(), &corpus, &opts, &mut RngStream::new(1, 0)).unwrap();
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert!(la.losses.last().unwrap() < &la.losses[0]);
    let zero = TrainOptions { steps: 0, ..opts };
    assert!(train_toy(cfg.clone(), &corpus, &zero, &mut RngStream::new(1, 0)).is_err());
    assert!(train_toy(cfg, &[], &opts, &mut RngStream::new(1, 0)).is_err());
}

#[test]
fn sgd_also_descends() {
    let cfg = tiny(FfnKind::Standard);
    let corpus = vec![vec![3, 4, 5, 6], vec![7, 8, 9, 10]];
    let opts = TrainOptions { steps: 30, batch_size: 2, learning_rate: 0.5, optimizer: Optimizer::Sgd };
    let (_, log) = train_toy(cfg, &corpus, &opts, &mut RngStream::new(2, 0)).unwrap();
    assert!(log.losses.last().unwrap() < &log.losses[0]);
}

#[test]
fn generation_contracts() {
    let m = ModelBundle::init(tiny(FfnKind::Standard)).unwrap();
    let a = generate(&m, &[3, 4], 4, Decoding::Greedy).unwrap();
    assert_eq!(a, generate(&m, &[3, 4], 4, Decoding::Greedy).unwrap());
    assert_eq!(a.len(), 4);
    let mut r1 = RngStream::new(9, 9);
    let mut r2 = RngStream::new(9, 9);
    let s1 = generate(&m, &[3], 5, Decoding::Sample { temperature: 1.0, rng: &mut r1 }).unwrap();
    let s2 = generate(&m, &[3], 5, Decoding::Sample { temperature: 1.0, rng: &mut r2 }).unwrap();
    assert_eq!(s1, s2);
    assert!(generate(&m, &[3], 0, Decoding::Greedy).unwrap().is_empty());
    // context is capped at max_seq = 8
    assert_eq!(generate(&m, &[3; 6], 10, Decoding::Greedy).unwrap().len(), 2);
    assert!(matches!(generate(&m, &[3; 9], 1, Decoding::Greedy), Err(Error::PromptTooLong { .. })));
}
