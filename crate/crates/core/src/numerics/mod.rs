//! Deterministic numerics: tensors, reverse-mode autodiff, Cholesky solves,
//! activations and seeded random streams. Everything is `f64`.

mod activation;
mod autodiff;
mod gradcheck;
mod linalg;
mod rng;
mod tensor;

pub use activation::{sigmoid, Activation};
pub use autodiff::{log_softmax, log_sum_exp, CeTarget, Gradients, Graph, Segment, Var, LAYER_NORM_EPS};
pub use gradcheck::grad_check;
pub use linalg::{solve_spd, Cholesky};
pub use rng::{derive_seed, rng_stream, RngStream, StreamId, ALGORITHM_ID};
pub use tensor::{dot, Tensor};

/// Scalar activation, `kind(x)`.
pub fn activation_fn(kind: Activation, x: f64) -> f64 {
    kind.apply(x)
}
