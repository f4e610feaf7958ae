//! The toy decoder-only transformer: configuration, tokenizer, parameters,
//! instrumented forward pass, training and decoding.

mod checkpoint;
mod config;
pub(crate) mod forward;
mod generate;
mod params;
mod tokenizer;
mod train;

pub use checkpoint::{
    load_checkpoint, read_tensors, save_checkpoint, write_tensors, CheckpointHeader, ManifestEntry, FORMAT_VERSION,
};
pub use config::{FfnKind, ModelConfig};
pub use forward::{
    forward, sample_scaled, ActivationSample, AttentionRow, ForwardTrace, HiddenSample, Intervention,
    NoiseDistribution, NoiseSpec,
};
pub use generate::{argmax, generate, Decoding};
pub use params::{LayerParams, ModelBundle};
pub use tokenizer::{find_subject_span, segment, SubjectSpan, Vocab, CONTROL, CONTROL_ID, PAD, PAD_ID, UNK, UNK_ID};
pub use train::{batch_loss_and_grads, continue_training, train_toy, Optimizer, TrainLog, TrainOptions};

#[cfg(test)]
mod tests;
