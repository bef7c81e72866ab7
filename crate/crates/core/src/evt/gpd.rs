use serde::{Deserialize, Serialize};

use super::{EvtError, TailDirection};

/// Below this `|γ|` the threshold uses the exponential (γ → 0) limit.
pub const GAMMA_EPS: f64 = 1e-6;

/// Fitted shape/scale of the excess distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdParams {
    pub gamma: f64,
    pub sigma: f64,
}

/// Method-of-moments fit of a generalized Pareto distribution.
///
/// With `μ` the sample mean and `S²` the unbiased sample variance:
/// `γ = ½(1 − μ²/S²)`, `σ = (μ/2)(1 + μ²/S²)`.
pub fn estimate_gpd_mom(excesses: &[f64]) -> Result<GpdParams, EvtError> {
    let n = excesses.len();
    if n < 2 {
        return Err(EvtError::TooFewExcesses(n));
    }
    let nf = n as f64;
    let mean = excesses.iter().sum::<f64>() / nf;
    let var = excesses.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    // relative test so tiny rounding noise on identical values still counts
    if var <= f64::EPSILON * mean * mean || var == 0.0 {
        return Err(EvtError::DegenerateSample);
    }
    let ratio = mean * mean / var;
    let gamma = 0.5 * (1.0 - ratio);
    let sigma = 0.5 * mean * (1.0 + ratio);
    if gamma >= 0.5 || !gamma.is_finite() {
        return Err(EvtError::MomentViolation(gamma));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(EvtError::DegenerateSample);
    }
    Ok(GpdParams { gamma, sigma })
}

/// Value exceeded with probability `q` under the fitted tail.
///
/// `n_total` is the number of observations the tail was fitted from and
/// `n_peaks` how many of them were beyond `t`. The result is unclamped.
pub fn anomaly_threshold(
    t: f64,
    params: GpdParams,
    q: f64,
    n_total: usize,
    n_peaks: usize,
    direction: TailDirection,
) -> Result<f64, EvtError> {
    if n_peaks == 0 || n_total < n_peaks {
        return Err(EvtError::InvalidInput(format!(
            "need 1 <= n_peaks <= n_total, got n_peaks={n_peaks} n_total={n_total}"
        )));
    }
    if !(params.sigma > 0.0) || !(q > 0.0) {
        return Err(EvtError::InvalidInput(format!(
            "sigma={} q={q}",
            params.sigma
        )));
    }
    let r = q * n_total as f64 / n_peaks as f64;
    let GpdParams { gamma, sigma } = params;
    let offset = if gamma.abs() < GAMMA_EPS {
        // limit of (r^-γ - 1)/γ as γ -> 0
        -sigma * r.ln()
    } else {
        (sigma / gamma) * (r.powf(-gamma) - 1.0)
    };
    if !offset.is_finite() {
        return Err(EvtError::NumericOverflow);
    }
    Ok(match direction {
        TailDirection::UpperTail => t + offset,
        TailDirection::LowerTail => t - offset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_gpd(rng: &mut impl Rng, gamma: f64, sigma: f64) -> f64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        if gamma == 0.0 {
            -sigma * u.ln()
        } else {
            sigma / gamma * (u.powf(-gamma) - 1.0)
        }
    }

    #[test]
    fn hand_evaluated_moments() {
        // mean 1, unbiased variance 2: {1 - sqrt(2), 1, 1 + sqrt(2)}
        let s = 2f64.sqrt();
        let p = estimate_gpd_mom(&[1.0 - s, 1.0, 1.0 + s]).unwrap();
        assert!((p.gamma - 0.25).abs() < 1e-12);
        assert!((p.sigma - 0.75).abs() < 1e-12);
        // and back through the GPD moment formulas
        let mean = p.sigma / (1.0 - p.gamma);
        let var = p.sigma.powi(2) / ((1.0 - p.gamma).powi(2) * (1.0 - 2.0 * p.gamma));
        assert!((mean - 1.0).abs() < 1e-12);
        assert!((var - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_excesses_are_degenerate() {
        assert_eq!(
            estimate_gpd_mom(&[0.7, 0.7, 0.7]),
            Err(EvtError::DegenerateSample)
        );
        assert_eq!(estimate_gpd_mom(&[1.0]), Err(EvtError::TooFewExcesses(1)));
    }

    proptest! {
        // γ = ½(1 − μ²/S²) is below ½ for any spread-out positive sample
        #[test]
        fn fitted_params_respect_invariants(ys in prop::collection::vec(1e-3f64..1e3, 2..200)) {
            match estimate_gpd_mom(&ys) {
                Ok(p) => {
                    prop_assert!(p.gamma < 0.5);
                    prop_assert!(p.sigma > 0.0);
                }
                Err(e) => prop_assert_eq!(e, EvtError::DegenerateSample),
            }
        }
    }

    #[test]
    fn recovers_shape_on_5000_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ys: Vec<f64> = (0..5000).map(|_| sample_gpd(&mut rng, 0.2, 1.0)).collect();
        let p = estimate_gpd_mom(&ys).unwrap();
        assert!((0.1..=0.3).contains(&p.gamma), "gamma {}", p.gamma);
        assert!((0.85..=1.15).contains(&p.sigma), "sigma {}", p.sigma);
    }

    #[test]
    fn threshold_hand_example() {
        let p = GpdParams {
            gamma: 0.25,
            sigma: 0.75,
        };
        let up = anomaly_threshold(10.0, p, 1e-3, 10_000, 100, TailDirection::UpperTail).unwrap();
        // 10 + 3 (0.1^-0.25 - 1) = 10 + 3 (10^0.25 - 1)
        let expected = 10.0 + 3.0 * (10f64.powf(0.25) - 1.0);
        assert!((up - expected).abs() < 1e-12);
        assert!((up - 12.334_838_8).abs() < 1e-6);
        let low = anomaly_threshold(1.0, p, 1e-3, 10_000, 100, TailDirection::LowerTail).unwrap();
        assert!((low - (1.0 - 2.334_838_8)).abs() < 1e-6);
    }

    #[test]
    fn exponential_limit_is_continuous() {
        let (t, sigma, q, n, nt) = (10.0, 0.75, 1e-3, 10_000, 100);
        let limit = anomaly_threshold(
            t,
            GpdParams { gamma: 0.0, sigma },
            q,
            n,
            nt,
            TailDirection::UpperTail,
        )
        .unwrap();
        assert!((limit - (t + sigma * (nt as f64 / (q * n as f64)).ln())).abs() < 1e-12);
        for g in [1e-6, -1e-6, 2e-6, -2e-6] {
            let general = anomaly_threshold(
                t,
                GpdParams { gamma: g, sigma },
                q,
                n,
                nt,
                TailDirection::UpperTail,
            )
            .unwrap();
            assert!(
                ((general - limit) / limit).abs() < 1e-6,
                "{g}: {general} vs {limit}"
            );
        }
    }

    #[test]
    fn rejects_bad_counts() {
        let p = GpdParams {
            gamma: 0.1,
            sigma: 1.0,
        };
        assert!(anomaly_threshold(0.0, p, 1e-3, 10, 0, TailDirection::UpperTail).is_err());
        assert!(anomaly_threshold(0.0, p, 1e-3, 10, 11, TailDirection::UpperTail).is_err());
    }

    #[test]
    fn overflow_is_reported() {
        let p = GpdParams {
            gamma: 2.0,
            sigma: 1.0,
        };
        assert_eq!(
            anomaly_threshold(0.0, p, 1e-300, 10, 10, TailDirection::UpperTail),
            Err(EvtError::NumericOverflow)
        );
    }
}
