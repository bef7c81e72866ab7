use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::AggregateBin;

/// Length of one aggregate bin in seconds.
pub const BIN_SECONDS: usize = 900;

/// One-second Msg3 counts for a bin.
///
/// Each second is Poisson with the bin's mean rate `λ`, truncated to
/// `[0, ⌈2λ⌉]`; draws beyond the bound are redrawn.
pub fn resample_msg3<R: Rng + ?Sized>(bin: &AggregateBin, rng: &mut R) -> Vec<u32> {
    let lambda = bin.msg3_total as f64 / BIN_SECONDS as f64;
    if lambda <= 0.0 {
        return vec![0; BIN_SECONDS];
    }
    let bound = (2.0 * lambda).ceil();
    let pois = Poisson::new(lambda).expect("positive finite rate");
    (0..BIN_SECONDS)
        .map(|_| loop {
            let x: f64 = pois.sample(rng);
            if x <= bound {
                break x as u32;
            }
        })
        .collect()
}

/// Probability that a second of the bin carries one failed procedure.
pub fn failure_probability(bin: &AggregateBin) -> f64 {
    let failed = bin.msg3_total.saturating_sub(bin.msg5_total) as f64;
    (failed / BIN_SECONDS as f64).clamp(0.0, 1.0)
}

/// Msg5 counts: each second loses at most one completion, with probability
/// `p_fail`, and only if there was a request to lose.
pub fn resample_msg5<R: Rng + ?Sized>(msg3: &[u32], p_fail: f64, rng: &mut R) -> Vec<u32> {
    let p = p_fail.clamp(0.0, 1.0);
    msg3.iter()
        .map(|&m| {
            // draw unconditionally so the stream position never depends on data
            let failed = rng.random_bool(p);
            if failed && m > 0 {
                m - 1
            } else {
                m
            }
        })
        .collect()
}
