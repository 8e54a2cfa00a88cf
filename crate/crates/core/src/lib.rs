//! Pseudo-encoded stochastic variational inference on a small autodiff core.
//!
//! Decoders are trained with per-datapoint posteriors; an amortized encoder is
//! fitted afterwards to those posteriors and used only to initialize a short
//! test-time refinement.

pub mod datagen;
pub mod error;
pub mod harness;
pub mod inference;
pub mod nn;
pub mod optim;
pub mod par;
pub mod probdist;
pub mod pseudo_encoder;
pub mod svi;
pub mod tensor;
pub mod vae;

pub use error::{Error, Result};
