//! Peaks-over-threshold estimation with method-of-moments GPD fitting.
//!
//! The estimator keeps a rolling window of recent values, picks an initial
//! threshold `t` as an empirical quantile of that window, fits a generalized
//! Pareto distribution to the excesses beyond `t`, and extrapolates the
//! value that is exceeded with probability `q`:
//!
//! ```text
//! t_anomaly = t ± (σ/γ) · ((q·N / N_t)^(-γ) − 1)
//! ```
//!
//! `+` is used for upper-tail features (request counts), `−` for lower-tail
//! features (completion ratios).

mod gpd;
mod pot;
mod window;

pub use gpd::{anomaly_threshold, estimate_gpd_mom, GpdParams, GAMMA_EPS};
pub use pot::{initial_threshold, PotConfig, PotSnapshot, PotState, SampleClass};
pub use window::SortedWindow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvtError {
    #[error("need at least 2 excesses to estimate a variance, got {0}")]
    TooFewExcesses(usize),
    #[error("excess sample has zero variance")]
    DegenerateSample,
    #[error("fitted shape {0} violates the variance moment condition (γ < 1/2)")]
    MomentViolation(f64),
    #[error("threshold extrapolation is not finite")]
    NumericOverflow,
    #[error("invalid threshold inputs: {0}")]
    InvalidInput(String),
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("non-finite observation {0}")]
    NonFinite(f64),
}

/// Which side of the distribution holds the extremes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailDirection {
    /// Excess is `x - t` for `x > t`.
    UpperTail,
    /// Excess is `t - x` for `x < t`.
    LowerTail,
}

impl TailDirection {
    /// Distance of `x` beyond `t` in this direction (positive when `x` is an
    /// extreme).
    #[inline]
    pub fn excess(self, t: f64, x: f64) -> f64 {
        match self {
            TailDirection::UpperTail => x - t,
            TailDirection::LowerTail => t - x,
        }
    }
}

/// Completion ratio `msg5 / msg3`, clamped to `[0, 1]`.
///
/// A second without any setup request counts as fully completed.
pub fn compute_r1(msg3: u32, msg5: u32) -> f64 {
    if msg3 == 0 {
        return 1.0;
    }
    (f64::from(msg5) / f64::from(msg3)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn r1_examples() {
        assert_eq!(compute_r1(8, 8), 1.0);
        assert_eq!(compute_r1(0, 0), 1.0);
        assert!((compute_r1(100, 3) - 0.03).abs() < 1e-15);
        // overlay Msg5s can exceed the request count for a second
        assert_eq!(compute_r1(3, 5), 1.0);
    }

    #[test]
    fn excess_sign_follows_direction() {
        assert_eq!(TailDirection::UpperTail.excess(10.0, 12.5), 2.5);
        assert_eq!(TailDirection::LowerTail.excess(0.5, 0.25), 0.25);
    }
}
