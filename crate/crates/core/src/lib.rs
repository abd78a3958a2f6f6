//! Angle-of-arrival estimation and tracking for body-worn passive RFID tags
//! read by a two-antenna reader with smart antenna switching (SAS).
//!
//! The crate covers the whole chain from baseband IQ to gesture labels:
//!
//! - [`array`]: two-element array geometry, round-trip steering vectors and
//!   the unambiguous field of view.
//! - [`sim`]: synthetic reader data (multipath, noise, SAS interleaving,
//!   misdetection) and parametric gesture trajectories.
//! - [`preprocess`]: reader log parsing, per-tag splitting, single-antenna
//!   pruning and non-overlapping windowing.
//! - [`music`]: per-window MUSIC measurement with a closed-form 2x2
//!   Hermitian eigendecomposition.
//! - [`tracker`]: constant-rate Kalman filter with missing-measurement skip
//!   and a Rauch-Tung-Striebel smoother.
//! - [`pipeline`]: log-to-track orchestration.
//! - [`features`]: statistics, Daubechies DWT and Pearson features under the
//!   named feature configurations.
//! - [`classify`]: DTW nearest neighbour, feature k-NN and evaluation metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod array;
pub mod classify;
mod error;
pub mod features;
pub mod music;
pub mod pipeline;
pub mod preprocess;
pub mod seed;
pub mod sim;
pub mod tracker;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
