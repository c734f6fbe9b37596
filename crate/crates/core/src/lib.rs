//! Coverage-guided fuzzing over in-process targets, with mid-run
//! reinitialization from generated seed files.
//!
//! The crate is organised bottom-up:
//!
//! - [`nn`]: dense layers, losses, optimizers and the model container format.
//! - [`generators`]: GAN, LSTM and random seed synthesis.
//! - [`target`]: instrumented targets, traces and the bucketed coverage map.
//! - [`fuzzer`]: the mutational fuzzing loop, reinitialization and workers.
//! - [`corpus`]: on-disk corpus directories, merge and deduplication.
//! - [`experiment`]: end-to-end orchestration and path-length reports.

pub mod corpus;
pub mod error;
pub mod experiment;
pub mod fuzzer;
pub mod generators;
pub mod nn;
pub mod target;

pub use error::{Error, Result};
