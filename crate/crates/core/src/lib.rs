//! Detection of RRC signaling storms at a gNB.
//!
//! Two peaks-over-threshold estimators with adaptive thresholds watch the
//! Msg3 rate and the Msg5/Msg3 completion ratio; a second on which both are
//! anomalous is positive, and consecutive positives raise an alert that the
//! connected-UE share then labels as an attack or a legitimate high load.
//! The crate also carries the traffic and storm simulator used to evaluate
//! it, a static Gaussian baseline, and the scoring harness.

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod config;
pub mod detector;
pub mod eval;
pub mod evt;
pub mod io;
pub mod storm;
pub mod synth;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
