//! A small laboratory for knowledge editing on a toy decoder-only transformer.
//!
//! The crate covers the whole loop: a reverse-mode autodiff engine and a
//! trainable transformer ([`numerics`], [`model`]), activation and attention
//! probes that compare how paraphrased contexts shift FFN activations at the
//! subject token ([`probe`]), delta optimization with noise injected into FFN
//! activations followed by rank-one and multi-layer weight updates
//! ([`editor`]), the editing metric suites ([`eval`]), and a deterministic
//! experiment driver ([`experiment`]).
//!
//! The guide in `book/` walks through each piece with runnable snippets.

pub mod editor;
mod error;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod numerics;
pub mod probe;

pub use error::{Error, Result};
