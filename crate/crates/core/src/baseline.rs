//! Static per-period `μ + 3σ` thresholds fitted on a reference day.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{Alert, AlertTracker, Decision, DecisionClass};
use crate::evt::compute_r1;
use crate::storm::compute_r2;
use crate::synth::TrafficSample;

/// Periods per day.
pub const PERIODS: usize = 12;
const PERIOD_S: i64 = 86_400 / PERIODS as i64;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("period {period} has {got} samples, need at least 2")]
    InsufficientData { period: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodStat {
    pub mean: f64,
    pub std: f64,
    pub threshold: f64,
}

/// Thresholds for the twelve two-hour periods of a UTC day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodThresholds {
    pub periods: Vec<PeriodStat>,
}

/// Index of the two-hour period containing `ts`.
pub fn period_of(ts: i64) -> usize {
    (ts.rem_euclid(86_400) / PERIOD_S) as usize
}

impl PeriodThresholds {
    pub fn threshold_at(&self, ts: i64) -> f64 {
        self.periods[period_of(ts)].threshold
    }
}

/// Fits `mean + 3·std` (sample std) of Msg3/s per period.
///
/// Samples may come from any number of days and may have holes, e.g. where
/// labeled anomalies were cut out.
pub fn fit_baseline(reference: &[TrafficSample]) -> Result<PeriodThresholds, BaselineError> {
    let mut acc = [(0usize, 0.0f64, 0.0f64); PERIODS];
    for s in reference {
        let a = &mut acc[period_of(s.ts)];
        let x = f64::from(s.msg3);
        // Welford
        a.0 += 1;
        let d = x - a.1;
        a.1 += d / a.0 as f64;
        a.2 += d * (x - a.1);
    }
    let periods = acc
        .iter()
        .enumerate()
        .map(|(period, &(n, mean, m2))| {
            if n < 2 {
                return Err(BaselineError::InsufficientData { period, got: n });
            }
            let std = (m2 / (n - 1) as f64).sqrt();
            Ok(PeriodStat {
                mean,
                std,
                threshold: mean + 3.0 * std,
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(PeriodThresholds { periods })
}

/// Streaming static-threshold detector with the same confirmation buffer
/// and differentiator as the EVT detector.
#[derive(Debug, Clone)]
pub struct StaticDetector {
    thresholds: PeriodThresholds,
    n_max: u32,
    tracker: AlertTracker,
}

impl StaticDetector {
    pub fn new(
        thresholds: PeriodThresholds,
        confirm: u32,
        level: f64,
        horizon: u32,
        n_max: u32,
    ) -> Self {
        Self {
            thresholds,
            n_max,
            tracker: AlertTracker::new(confirm, level, horizon),
        }
    }

    pub fn step(&mut self, s: &TrafficSample) -> Decision {
        let th = self.thresholds.threshold_at(s.ts);
        let positive = f64::from(s.msg3) > th;
        let st = self
            .tracker
            .observe(s.ts, positive, compute_r2(s.n_bue, self.n_max));
        Decision {
            ts: s.ts,
            msg3: s.msg3,
            r1: compute_r1(s.msg3, s.msg5),
            th_msg3: Some(th),
            th_r1: None,
            class: if positive {
                DecisionClass::Positive
            } else {
                DecisionClass::Normal
            },
            alert_id: st.alert_id,
            verdict: st.verdict,
        }
    }

    pub fn finish(self) -> Vec<Alert> {
        self.tracker.finish()
    }
}

/// Runs the static detector over a whole trace.
pub fn detect_static(
    thresholds: &PeriodThresholds,
    trace: &[TrafficSample],
    confirm: u32,
    level: f64,
    horizon: u32,
    n_max: u32,
) -> (Vec<Decision>, Vec<Alert>) {
    let mut det = StaticDetector::new(thresholds.clone(), confirm, level, horizon, n_max);
    let decisions = trace.iter().map(|s| det.step(s)).collect();
    (decisions, det.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(ts: i64, msg3: u32) -> TrafficSample {
        TrafficSample {
            ts,
            msg3,
            msg5: msg3,
            n_bue: 10,
        }
    }

    #[test]
    fn constant_day_gives_mean() {
        let day: Vec<_> = (0..86_400).map(|t| sample(t, 4)).collect();
        let th = fit_baseline(&day).unwrap();
        assert_eq!(th.periods.len(), 12);
        assert!(th
            .periods
            .iter()
            .all(|p| p.threshold == 4.0 && p.std == 0.0));
    }

    #[test]
    fn hand_example() {
        // two values per period: 1 and 3 → mean 2, sample std √2
        let day: Vec<_> = (0..12)
            .flat_map(|p| [sample(p * 7200, 1), sample(p * 7200 + 1, 3)])
            .collect();
        let th = fit_baseline(&day).unwrap();
        for p in th.periods {
            assert!((p.threshold - (2.0 + 3.0 * 2f64.sqrt())).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_period_is_reported() {
        let day: Vec<_> = (0..7200).map(|t| sample(t, 1)).collect();
        assert_eq!(
            fit_baseline(&day),
            Err(BaselineError::InsufficientData { period: 1, got: 0 })
        );
    }

    #[test]
    fn quiet_trace_never_alerts() {
        let day: Vec<_> = (0..86_400).map(|t| sample(t, (t % 5) as u32)).collect();
        let th = fit_baseline(&day).unwrap();
        let (dec, alerts) = detect_static(&th, &day, 2, 0.99, 30, 300);
        assert!(alerts.is_empty());
        assert!(dec.iter().all(|d| d.class == DecisionClass::Normal));
    }
}
