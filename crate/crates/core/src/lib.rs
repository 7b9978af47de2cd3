//! Masked multi-modal transformer surrogates for simulation-to-experiment
//! transfer.
//!
//! The crate is `no_std` (with `alloc`) and contains every numerical piece of
//! the workflow:
//!
//! * [`data`]: multi-modal samples, scalar normalization and a synthetic
//!   source/target benchmark with a controllable domain gap.
//! * [`masking`]: token layouts and forward / random / complement masks.
//! * [`model`]: the masked-autoencoder transformer surrogate with exact
//!   reverse-mode gradients.
//! * [`pretrain`]: prediction and masked losses, cosine-annealed Adam and the
//!   source pretraining loop.
//! * [`adapt`]: constrained fine-tuning, post-hoc bias / variance correction
//!   and nested leave-one-out validation.
//! * [`hpograph`]: lattice graphs over hyper-parameter grids, neighborhood
//!   smoothing of validation errors and selection.
//! * [`eval`]: metrics, leave-k-out protocols and linear CKA.
//!
//! File formats, the parallel sweep runner and the command-line tool live in
//! the companion `surrogate` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adapt;
pub mod data;
mod error;
pub mod eval;
pub mod hpograph;
pub mod linalg;
pub mod masking;
pub mod model;
pub mod pretrain;
pub mod regret;
pub mod runner;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
