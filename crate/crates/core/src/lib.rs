//! Gaze-driven intent inference and confidence-modulated haptic virtual
//! fixtures for shared-control teleoperation.
//!
//! The crate is `no_std` (with `alloc`) so the same engine can sit inside a
//! device control loop or behind the desktop tooling in `intentfix`.
//!
//! Pipeline, in the order a control tick runs it:
//!
//! 1. [`gaze`]: smooth the gaze stream, keep the last two seconds of valid
//!    samples, extract the three dispersion features.
//! 2. [`classifier`]: Gaussian naive Bayes posterior for "intent", rescaled
//!    into the confidence `ci`.
//! 3. [`scene`]: resolve the fixation pixel into a 3-D target.
//! 4. [`fixtures`]: potential-field guidance force and the funnel-shaped
//!    safety boundary, both scaled by confidence.
//! 5. [`sim`]: deterministic 20 Hz closed loop with synthetic operators.
//!
//! [`stats`] holds the analysis used to summarize batches of trials.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod classifier;
pub mod error;
pub mod fixtures;
pub mod gaze;
pub mod math;
pub mod rng;
pub mod scene;
pub mod sim;
pub mod stats;
pub mod vec;

pub use error::{Error, Result};
pub use vec::{Normalized, Scene, Vec3};
