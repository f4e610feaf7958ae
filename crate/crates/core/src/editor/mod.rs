//! Fact editing: δ optimization under noise policies, key and covariance
//! estimation, and the closed-form weight updates.

mod batch;
mod delta;
mod keys;
mod memit;
mod noise;
mod plan;
mod rome;

pub use batch::{validate_batch, Conflict, ConflictReport, EditBatch, FactRecord, NeighborhoodPrompt};
pub use delta::{compute_delta, read_hidden, record_seed, DeltaLog, DeltaOutcome, EditSite};
pub use keys::{
    collect_keys, covariance_from_keys, default_ridge, estimate_covariance, estimate_key, estimate_key_at,
    layer_covariances,
};
pub use memit::{apply_memit, memit_layer_update, MemitOutcome, WeightDelta};
pub use noise::{
    build_noise_policy, default_alpha, perturb_parameters, sample_noise, LayerRange, NoisePolicy, NoiseTarget,
    NoiseVariant, PositionRule,
};
pub use plan::EditPlan;
pub use rome::{apply_rome, edit_rome};
