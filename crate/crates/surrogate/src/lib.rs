//! Persistence, parallel execution, reporting and experiment configuration
//! around [`surrogate_core`].
//!
//! Every writer produces deterministic bytes: no timestamps, fixed float
//! formatting, and outputs staged in a sibling directory before being moved
//! into place.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset_io;
mod error;
pub mod parallel;
pub mod provenance;
pub mod report;
pub mod staging;
pub mod svg;
pub mod tables;

pub use error::{StoreError, StoreResult};
