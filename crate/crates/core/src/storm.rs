//! Closed-form gNB overload model and per-second episode overlays.
//!
//! A gNB holds at most `n_max` RRC contexts. Every Msg3 reserves one for up
//! to `t_w` seconds while it waits for the matching Msg5. A flood of Msg3s
//! fills the free contexts within `t_a` seconds; the gNB then rejects new
//! requests until the oldest reservations time out, `t_r = t_w − t_a` later.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StormError {
    #[error("no positive rate reaches availability {target} (would need {required:.3} Msg3/s)")]
    InfeasibleTarget { target: f64, required: f64 },
    #[error("invalid gNB parameters: {0}")]
    InvalidParams(String),
    #[error("invalid episode: {0}")]
    InvalidEpisode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnbParams {
    /// Waiting time in seconds.
    pub t_w: f64,
    /// Maximum simultaneously held RRC contexts.
    pub n_max: u32,
}

impl Default for GnbParams {
    fn default() -> Self {
        Self {
            t_w: 5.0,
            n_max: 300,
        }
    }
}

impl GnbParams {
    pub fn validate(&self) -> Result<(), StormError> {
        if !(self.t_w > 0.0) || !self.t_w.is_finite() {
            return Err(StormError::InvalidParams(format!(
                "t_w must be > 0, got {}",
                self.t_w
            )));
        }
        if self.n_max == 0 {
            return Err(StormError::InvalidParams("n_max must be > 0".into()));
        }
        Ok(())
    }
}

/// Legitimate load at some instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadState {
    /// Connected benign UEs.
    pub n_bue: f64,
    /// Benign Msg3 arrival rate per second.
    pub r_bue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpisodeKind {
    Attack,
    #[serde(rename = "highload")]
    HighLoad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub kind: EpisodeKind,
    /// Extra Msg3s per second.
    pub rate: f64,
    /// Epoch second of the first affected sample.
    pub start: i64,
    pub duration: u32,
    /// Seconds over which an attack climbs linearly from zero to `rate`.
    #[serde(default)]
    pub ramp_s: u32,
}

impl EpisodeSpec {
    pub fn validate(&self) -> Result<(), StormError> {
        if !(self.rate > 0.0) || !self.rate.is_finite() {
            return Err(StormError::InvalidEpisode(format!(
                "rate must be > 0, got {}",
                self.rate
            )));
        }
        if self.duration == 0 {
            return Err(StormError::InvalidEpisode("duration must be > 0".into()));
        }
        if self.ramp_s > 0 && self.kind != EpisodeKind::Attack {
            return Err(StormError::InvalidEpisode("only attacks can ramp".into()));
        }
        if self.ramp_s > self.duration {
            return Err(StormError::InvalidEpisode(format!(
                "ramp of {} s is longer than the episode ({} s)",
                self.ramp_s, self.duration
            )));
        }
        Ok(())
    }

    pub fn end(&self) -> i64 {
        self.start + i64::from(self.duration)
    }

    /// Attack rate `t` seconds into the episode.
    pub fn rate_at(&self, t: f64) -> f64 {
        if self.ramp_s == 0 {
            self.rate
        } else {
            self.rate * (t / f64::from(self.ramp_s)).clamp(0.0, 1.0)
        }
    }

    /// Extra Msg3s sent during the first `t` seconds.
    pub fn cumulative(&self, t: f64) -> f64 {
        let ramp = f64::from(self.ramp_s);
        if t < ramp {
            self.rate * t * t / (2.0 * ramp)
        } else {
            self.rate * (t - ramp / 2.0)
        }
    }
}

/// What an episode adds to one second of legitimate traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OverlaySample {
    pub msg3_extra: u32,
    pub msg5_extra: u32,
    pub n_bue_override: Option<u32>,
    /// The gNB rejects new requests for this second; no Msg5 gets through.
    pub rejecting: bool,
}

/// Accept and reject durations of one overload cycle.
pub fn accept_reject_durations(p: &GnbParams, s: &LoadState, r_att: f64) -> (f64, f64) {
    let free = (f64::from(p.n_max) - s.n_bue).max(0.0);
    let t_a = free / (r_att + s.r_bue);
    (t_a, (p.t_w - t_a).max(0.0))
}

/// Fraction of time the gNB accepts requests.
pub fn availability(t_a: f64, t_r: f64) -> f64 {
    t_a / (t_a + t_r)
}

/// Lowest Msg3 rate on top of the benign load that overloads the gNB.
pub fn min_overload_rate(p: &GnbParams, s: &LoadState) -> f64 {
    ((f64::from(p.n_max) - s.n_bue) / p.t_w - s.r_bue).max(0.0)
}

/// Rate whose overload cycle gives availability `r_avai`.
pub fn rate_for_target_availability(
    p: &GnbParams,
    s: &LoadState,
    r_avai: f64,
) -> Result<f64, StormError> {
    if !(r_avai > 0.0 && r_avai <= 1.0) {
        return Err(StormError::InvalidParams(format!(
            "target availability must lie in (0, 1], got {r_avai}"
        )));
    }
    let r_min = min_overload_rate(p, s);
    if r_avai >= 1.0 {
        return Ok(r_min);
    }
    let r = (f64::from(p.n_max) - s.n_bue) / (r_avai * p.t_w) - s.r_bue;
    if r < 0.0 {
        return Err(StormError::InfeasibleTarget {
            target: r_avai,
            required: r,
        });
    }
    Ok(r.max(r_min))
}

/// Share of connected UEs in the gNB's capacity.
pub fn compute_r2(n_bue: u32, n_max: u32) -> f64 {
    (f64::from(n_bue) / f64::from(n_max)).clamp(0.0, 1.0)
}

/// Integer Msg3 counts per second, carrying the fractional part so the
/// running total never drifts from the episode's cumulative volume.
fn per_second_counts(spec: &EpisodeSpec, seconds: usize) -> impl Iterator<Item = u32> + '_ {
    (0..seconds).map(move |k| {
        let hi = spec.cumulative((k + 1) as f64).floor();
        let lo = spec.cumulative(k as f64).floor();
        (hi - lo) as u32
    })
}

/// Per-second overlay for one episode.
///
/// `baseline[k]` is the legitimate load during second `k` of the episode and
/// must cover at least `spec.duration` seconds.
///
/// Attacks alternate accept and reject phases whose lengths are recomputed at
/// the start of every cycle; continuous reject time is mapped onto whole
/// seconds by carrying the rounding remainder. High-loads admit
/// `rate + r_bue` contexts per second, each held for the waiting time, until
/// the gNB is full; from then on it rejects until the episode ends.
pub fn render_overlay(
    p: &GnbParams,
    baseline: &[LoadState],
    spec: &EpisodeSpec,
) -> Result<Vec<OverlaySample>, StormError> {
    p.validate()?;
    spec.validate()?;
    let dur = spec.duration as usize;
    if baseline.len() < dur {
        return Err(StormError::InvalidEpisode(format!(
            "episode needs {dur} seconds of baseline, got {}",
            baseline.len()
        )));
    }
    let extra: Vec<u32> = per_second_counts(spec, dur).collect();
    Ok(match spec.kind {
        EpisodeKind::Attack => render_attack(p, &baseline[..dur], spec, &extra),
        EpisodeKind::HighLoad => render_highload(p, &baseline[..dur], spec.rate, &extra),
    })
}

fn render_attack(
    p: &GnbParams,
    base: &[LoadState],
    spec: &EpisodeSpec,
    extra: &[u32],
) -> Vec<OverlaySample> {
    let dur = base.len();
    let n_start = base[0].n_bue.clamp(0.0, f64::from(p.n_max));
    let held = n_start.round() as u32;

    // reject intervals in continuous episode time
    let mut rejects: Vec<(f64, f64)> = Vec::new();
    let mut tau = 0.0;
    while tau < dur as f64 {
        let k = (tau.floor() as usize).min(dur - 1);
        let load = LoadState {
            n_bue: n_start,
            r_bue: base[k].r_bue,
        };
        match fill_time(p, &load, spec, tau) {
            Some(t_a) => {
                rejects.push((tau + t_a, tau + p.t_w));
                tau += p.t_w;
            }
            // the oldest reservations expire before the gNB fills up
            None => tau += 1.0,
        }
    }
    let mut out = Vec::with_capacity(dur);
    let mut cum = 0.0;
    let mut emitted = 0u64;
    let mut ri = 0;
    for (k, &m3) in extra.iter().enumerate() {
        let (lo, hi) = (k as f64, (k + 1) as f64);
        while ri < rejects.len() && rejects[ri].1 <= lo {
            ri += 1;
        }
        let mut j = ri;
        while j < rejects.len() && rejects[j].0 < hi {
            cum += rejects[j].1.min(hi) - rejects[j].0.max(lo);
            j += 1;
        }
        // Bresenham-style: reject whenever the rounded cumulative reject time
        // runs ahead of the reject seconds emitted so far
        let rejecting = (cum + 0.5 + 1e-9).floor() as u64 > emitted;
        if rejecting {
            emitted += 1;
        }
        out.push(OverlaySample {
            msg3_extra: m3,
            msg5_extra: 0,
            n_bue_override: Some(held),
            rejecting,
        });
    }
    out
}

/// Seconds after `tau` at which the free contexts run out, if that happens
/// within one waiting time.
fn fill_time(p: &GnbParams, s: &LoadState, spec: &EpisodeSpec, tau: f64) -> Option<f64> {
    let free = (f64::from(p.n_max) - s.n_bue).max(0.0);
    let filled = |dt: f64| spec.cumulative(tau + dt) - spec.cumulative(tau) + s.r_bue * dt;
    let t_a = if spec.ramp_s == 0 || tau >= f64::from(spec.ramp_s) {
        accept_reject_durations(p, s, spec.rate).0
    } else {
        if filled(p.t_w) < free {
            return None;
        }
        // arrivals only grow along a ramp, so bisection converges
        let (mut lo, mut hi) = (0.0, p.t_w);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if filled(mid) < free {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    (t_a < p.t_w).then_some(t_a)
}

fn render_highload(
    p: &GnbParams,
    base: &[LoadState],
    rate: f64,
    extra: &[u32],
) -> Vec<OverlaySample> {
    let n_max = f64::from(p.n_max);
    let n_start = base[0].n_bue.clamp(0.0, n_max);
    let admit = rate + base[0].r_bue;
    let mut full = false;
    extra
        .iter()
        .enumerate()
        .map(|(k, &m3)| {
            if full {
                return OverlaySample {
                    msg3_extra: m3,
                    msg5_extra: 0,
                    n_bue_override: Some(p.n_max),
                    rejecting: true,
                };
            }
            // each admitted context is held for t_w seconds, so occupancy
            // plateaus below capacity when the rate is under the overload rate
            let held_for = ((k + 1) as f64).min(p.t_w);
            let n = (n_start + admit * held_for).min(n_max);
            if n >= n_max {
                full = true;
            }
            OverlaySample {
                msg3_extra: m3,
                msg5_extra: m3,
                n_bue_override: Some(n.round() as u32),
                rejecting: false,
            }
        })
        .collect()
}
