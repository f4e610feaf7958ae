use knowedit::experiment::{gen_synthetic_dataset, relation_catalog, tokenize_all, training_corpus, DatasetOptions};
use knowedit::model::{train_toy, ModelConfig, TrainOptions};
use knowedit::numerics::RngStream;

#[test]
fn loss_trends_down_over_long_training() {
    let relations: Vec<_> = relation_catalog().into_iter().filter(|r| r.name == "sport").collect();
    let options = DatasetOptions { n_subjects: 64, relations: vec!["sport".into()], ..Default::default() };
    let records = gen_synthetic_dataset(&relations, &options, 9).unwrap();
    assert_eq!(records.len(), 64);
    let (texts, vocab) = training_corpus(&records);
    let corpus = tokenize_all(&vocab, &texts).unwrap();
    let config = ModelConfig {
        n_layers: 4,
        d_model: 32,
        d_ffn: 64,
        n_heads: 2,
        vocab_size: vocab.len(),
        seed: 9,
        ..Default::default()
    };
    let opts = TrainOptions { steps: 2000, batch_size: 8, ..Default::default() };
    let (_, log) = train_toy(config, &corpus, &opts, &mut RngStream::new(9, 0)).unwrap();
    let windows = log.window_means(100);
    assert_eq!(windows.len(), 20);
    assert!(log.losses.last().unwrap() < &log.losses[0]);
    assert!(windows[19] < windows[0] / 2.0, "{windows:?}");
    // once the loss reaches the corpus entropy floor only step-to-step jitter remains
    for i in 1..windows.len() {
        let best = windows[..i].iter().copied().fold(f64::INFINITY, f64::min);
        assert!(windows[i] <= best + 0.02, "window {i} rose: {windows:?}");
    }
}
