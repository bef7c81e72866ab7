use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use super::resample::{failure_probability, resample_msg3, resample_msg5, BIN_SECONDS};
use super::{AggregateBin, SynthError, TrafficSample};

/// Gaussian bump on the daily Msg3 rate curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peak {
    /// Added Msg3/s at the peak.
    pub amplitude: f64,
    /// Hour of day, 0–24.
    pub center_h: f64,
    pub width_h: f64,
}

/// Weekday traffic shape: a night floor plus morning and evening peaks.
///
/// The defaults are tuned so four days average about 3.1 Msg3/s (std ≈ 2.8,
/// 95th percentile 9) with about 57 connected UEs, peaking below 175.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiurnalProfile {
    /// Msg3/s at night.
    pub floor: f64,
    pub peaks: Vec<Peak>,
    /// Log-sd of a per-day multiplicative level factor.
    pub day_jitter_sd: f64,
    /// Log-sd of a per-bin multiplicative factor.
    pub bin_jitter_sd: f64,
    /// Failed procedures per Msg3.
    pub failures_per_msg3: f64,
    /// Connected UEs per Msg3/s of (unscaled) rate.
    pub n_bue_per_msg3: f64,
    pub n_bue_cap: f64,
    /// Multiplies the Msg3/Msg5 rates, not the connected-UE count.
    pub scale: f64,
    /// Epoch second of the first sample; should be a UTC midnight.
    pub start_ts: i64,
}

impl Default for DiurnalProfile {
    // 3.14 below is a mean Msg3 rate, not π
    #[allow(clippy::approx_constant)]
    fn default() -> Self {
        Self {
            floor: 0.35,
            peaks: vec![
                Peak {
                    amplitude: 5.5,
                    center_h: 9.0,
                    width_h: 2.3,
                },
                Peak {
                    amplitude: 6.5,
                    center_h: 18.5,
                    width_h: 2.3,
                },
            ],
            day_jitter_sd: 0.1,
            bin_jitter_sd: 0.2,
            failures_per_msg3: 0.01 / 3.14,
            n_bue_per_msg3: 18.0,
            n_bue_cap: 175.0,
            scale: 1.0,
            // 2025-01-07 00:00 UTC, a Tuesday
            start_ts: 1_736_208_000,
        }
    }
}

impl DiurnalProfile {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Profile(m));
        let nonneg = [
            ("floor", self.floor),
            ("day_jitter_sd", self.day_jitter_sd),
            ("bin_jitter_sd", self.bin_jitter_sd),
            ("failures_per_msg3", self.failures_per_msg3),
            ("n_bue_per_msg3", self.n_bue_per_msg3),
            ("n_bue_cap", self.n_bue_cap),
            ("scale", self.scale),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!(
                    "{name} must be a finite non-negative number, got {v}"
                ));
            }
        }
        if self.failures_per_msg3 > 1.0 {
            return bad("failures_per_msg3 cannot exceed 1".into());
        }
        for p in &self.peaks {
            if !(p.amplitude >= 0.0 && p.width_h > 0.0 && (0.0..=24.0).contains(&p.center_h)) {
                return bad(format!("bad peak {p:?}"));
            }
        }
        Ok(())
    }

    /// Mean Msg3/s at hour-of-day `h`, before jitter and scaling.
    pub fn rate_at(&self, h: f64) -> f64 {
        self.floor
            + self
                .peaks
                .iter()
                .map(|p| {
                    // distance on the 24 h circle
                    let d = (h - p.center_h).rem_euclid(24.0);
                    let d = d.min(24.0 - d);
                    p.amplitude * (-0.5 * (d / p.width_h).powi(2)).exp()
                })
                .sum::<f64>()
    }
}

/// Generates `days` of legitimate per-second traffic and the aggregates it
/// was resampled from.
pub fn synth_baseline<R: Rng + ?Sized>(
    profile: &DiurnalProfile,
    days: u32,
    rng: &mut R,
) -> Result<(Vec<TrafficSample>, Vec<AggregateBin>), SynthError> {
    profile.validate()?;
    let bins_per_day = 86_400 / BIN_SECONDS;
    let day_jitter = LogNormal::new(0.0, profile.day_jitter_sd).expect("validated sd");
    let bin_jitter = LogNormal::new(0.0, profile.bin_jitter_sd).expect("validated sd");

    let mut bins = Vec::with_capacity(days as usize * bins_per_day);
    let mut samples = Vec::with_capacity(days as usize * 86_400);
    for day in 0..i64::from(days) {
        let level = day_jitter.sample(rng);
        for b in 0..bins_per_day {
            let start = profile.start_ts + day * 86_400 + (b * BIN_SECONDS) as i64;
            let mid_h = (b as f64 + 0.5) * BIN_SECONDS as f64 / 3600.0;
            let lambda = profile.rate_at(mid_h) * level * bin_jitter.sample(rng);
            let msg3_total = (lambda * profile.scale * BIN_SECONDS as f64).round() as u64;
            let failures = (profile.failures_per_msg3 * msg3_total as f64).round() as u64;
            let n_bue_avg = (profile.n_bue_per_msg3 * lambda)
                .min(profile.n_bue_cap)
                .round();
            let bin = AggregateBin {
                start,
                msg3_total,
                msg5_total: msg3_total - failures.min(msg3_total),
                n_bue_avg,
            };
            let msg3 = resample_msg3(&bin, rng);
            let msg5 = resample_msg5(&msg3, failure_probability(&bin), rng);
            samples.extend(msg3.iter().zip(&msg5).enumerate().map(|(k, (&m3, &m5))| {
                TrafficSample {
                    ts: start + k as i64,
                    msg3: m3,
                    msg5: m5,
                    n_bue: n_bue_avg as u32,
                }
            }));
            bins.push(bin);
        }
    }
    Ok((samples, bins))
}
