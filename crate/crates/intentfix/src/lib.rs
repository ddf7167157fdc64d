//! Desktop side of the intentfix engine: file formats, run configuration,
//! reports, the command-line tools and the live WebSocket bridge.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::large_enum_variant,
    clippy::result_large_err
)]

pub mod cache;
pub mod cli;
pub mod config;
pub mod formats;
pub mod protocol;
pub mod report;
pub mod server;
pub mod session_log;

/// Seed of the synthetic corpus behind the built-in intent model.
pub const DEFAULT_MODEL_SEED: u64 = 1;

/// The built-in intent model used when no model file is given.
pub fn default_model() -> intentfix_core::classifier::NaiveBayesModel {
    intentfix_core::classifier::synthetic::default_model(DEFAULT_MODEL_SEED)
}
