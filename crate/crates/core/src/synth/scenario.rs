use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{SynthError, TrafficSample};
use crate::storm::{
    min_overload_rate, rate_for_target_availability, render_overlay, EpisodeKind, EpisodeSpec,
    GnbParams, LoadState,
};

/// How the rate of a randomly placed episode is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum RatePolicy {
    /// Uniform on `[min, max]`; `min` defaults to the load-dependent
    /// minimum overload rate.
    Range {
        min: Option<f64>,
        max: f64,
    },
    /// Uniform fraction of the minimum overload rate.
    FractionOfMin {
        lo: f64,
        hi: f64,
    },
    /// The rate that leaves the gNB available `target` of the time.
    TargetAvailability {
        target: f64,
    },
    Fixed {
        rate: f64,
    },
}

impl Default for RatePolicy {
    fn default() -> Self {
        RatePolicy::Range {
            min: None,
            max: 100.0,
        }
    }
}

/// An episode placed by hand, relative to the start of the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedEpisode {
    pub kind: EpisodeKind,
    pub rate: f64,
    pub offset_s: i64,
    pub duration_s: u32,
    /// Linear climb to `rate` over this many seconds (attacks only).
    #[serde(default)]
    pub ramp_s: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Labeling granularity.
    pub period_s: u32,
    /// Length of randomly placed episodes, at most `period_s`.
    pub episode_s: u32,
    /// Leading span kept free of episodes so detectors can fill their windows.
    pub warmup_s: u32,
    /// Target share of all periods labeled attack.
    pub attack: f64,
    /// Target share of all periods labeled high-load.
    pub highload: f64,
    pub rate: RatePolicy,
    pub episodes: Vec<ScriptedEpisode>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            period_s: 300,
            episode_s: 300,
            warmup_s: 18_060,
            attack: 211.0 / 1152.0,
            highload: 204.0 / 1152.0,
            rate: RatePolicy::default(),
            episodes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Normal,
    Attack,
    #[serde(rename = "highload")]
    HighLoad,
}

impl From<EpisodeKind> for LabelKind {
    fn from(k: EpisodeKind) -> Self {
        match k {
            EpisodeKind::Attack => LabelKind::Attack,
            EpisodeKind::HighLoad => LabelKind::HighLoad,
        }
    }
}

impl LabelKind {
    pub fn episode(self) -> Option<EpisodeKind> {
        match self {
            LabelKind::Normal => None,
            LabelKind::Attack => Some(EpisodeKind::Attack),
            LabelKind::HighLoad => Some(EpisodeKind::HighLoad),
        }
    }
}

/// Ground truth for one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLabel {
    pub period_start: i64,
    pub kind: LabelKind,
    /// Episode rate for anomalous periods.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub samples: Vec<TrafficSample>,
    pub labels: Vec<ScenarioLabel>,
    pub episodes: Vec<EpisodeSpec>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        if self.period_s == 0 {
            return bad("period_s must be > 0".into());
        }
        if self.episode_s == 0 || self.episode_s > self.period_s {
            return bad(format!(
                "episode_s must lie in 1..={}, got {}",
                self.period_s, self.episode_s
            ));
        }
        for (name, v) in [("attack", self.attack), ("highload", self.highload)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} proportion must lie in [0, 1], got {v}"));
            }
        }
        if self.attack + self.highload > 1.0 {
            return bad("attack + highload proportions exceed 1".into());
        }
        match self.rate {
            RatePolicy::Range { min, max } => {
                if !(max > 0.0) || min.is_some_and(|m| !(m >= 0.0 && m <= max)) {
                    return bad(format!("bad rate range [{min:?}, {max}]"));
                }
            }
            RatePolicy::FractionOfMin { lo, hi } => {
                if !(lo > 0.0 && lo <= hi) {
                    return bad(format!("bad rate fraction range [{lo}, {hi}]"));
                }
            }
            RatePolicy::TargetAvailability { target } => {
                if !(target > 0.0 && target <= 1.0) {
                    return bad(format!(
                        "target availability must lie in (0, 1], got {target}"
                    ));
                }
            }
            RatePolicy::Fixed { rate } => {
                if !(rate > 0.0) {
                    return bad(format!("fixed rate must be > 0, got {rate}"));
                }
            }
        }
        Ok(())
    }
}

/// Smallest rate an episode is ever given, Msg3/s.
const MIN_RATE: f64 = 1.0;

/// Labels every period, overlays the chosen episodes and returns the merged
/// trace.
///
/// Random anomalies are only placed after the warm-up span, never in the
/// final period, and never next to another anomaly: periods are drawn
/// independently, then the later of two adjacent anomalies is demoted. The
/// draw probability is inflated so the share left after demotion matches the
/// configured proportions over the whole trace.
pub fn build_scenario<R: Rng + ?Sized>(
    baseline: &[TrafficSample],
    gnb: &GnbParams,
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<Scenario, SynthError> {
    cfg.validate()?;
    gnb.validate()?;
    let period = cfg.period_s as usize;
    if baseline.is_empty() || !baseline.len().is_multiple_of(period) {
        return Err(SynthError::Config(format!(
            "trace of {} s does not divide into {} s periods",
            baseline.len(),
            cfg.period_s
        )));
    }
    let t0 = baseline[0].ts;
    let n_periods = baseline.len() / period;
    let loads = load_states(baseline);

    let mut kinds: Vec<Option<EpisodeKind>> = vec![None; n_periods];
    let mut rates: Vec<Option<f64>> = vec![None; n_periods];
    let mut blocked = vec![false; n_periods];
    let mut episodes = Vec::new();

    for ep in &cfg.episodes {
        if ep.offset_s < 0 || ep.offset_s as usize + ep.duration_s as usize > baseline.len() {
            return Err(SynthError::Config(format!(
                "scripted episode at +{} s for {} s falls outside the trace",
                ep.offset_s, ep.duration_s
            )));
        }
        let spec = EpisodeSpec {
            kind: ep.kind,
            rate: ep.rate,
            start: t0 + ep.offset_s,
            duration: ep.duration_s,
            ramp_s: ep.ramp_s,
        };
        spec.validate()?;
        let first = ep.offset_s as usize / period;
        let last = (ep.offset_s as usize + ep.duration_s as usize - 1) / period;
        for p in first..=last {
            kinds[p] = Some(ep.kind);
            rates[p] = Some(ep.rate);
        }
        blocked[first.saturating_sub(1)..=(last + 1).min(n_periods - 1)].fill(true);
        episodes.push(spec);
    }

    let share = cfg.attack + cfg.highload;
    if share > 0.0 {
        let warm = (cfg.warmup_s as usize).div_ceil(period);
        let eligible: Vec<usize> = (warm..n_periods.saturating_sub(1))
            .filter(|&p| !blocked[p])
            .collect();
        if eligible.is_empty() {
            return Err(SynthError::Config(
                "no period is eligible for an episode after the warm-up span".into(),
            ));
        }
        let a_eff = share * n_periods as f64 / eligible.len() as f64;
        if a_eff >= 0.5 {
            return Err(SynthError::Config(format!(
                "anomaly proportion {share} cannot be met with every anomaly between two normal \
                 periods ({:.3} of the {} eligible periods would be anomalous; at most 0.5 fit)",
                a_eff,
                eligible.len()
            )));
        }
        let p_draw = a_eff / (1.0 - a_eff);
        let p_attack = cfg.attack / share;
        let mut prev: Option<usize> = None;
        for &p in &eligible {
            let hit = rng.random::<f64>() < p_draw;
            let attack = rng.random::<f64>() < p_attack;
            let adjacent = prev == Some(p.wrapping_sub(1));
            if hit && !adjacent {
                kinds[p] = Some(if attack {
                    EpisodeKind::Attack
                } else {
                    EpisodeKind::HighLoad
                });
                prev = Some(p);
            }
        }
        for &p in &eligible {
            let Some(kind) = kinds[p] else { continue };
            let start = p * period;
            let rate = draw_rate(gnb, &loads[start], &cfg.rate, rng)?;
            rates[p] = Some(rate);
            episodes.push(EpisodeSpec {
                kind,
                rate,
                start: t0 + start as i64,
                duration: cfg.episode_s,
                ramp_s: 0,
            });
        }
    }
    episodes.sort_by_key(|e| e.start);

    let mut samples = baseline.to_vec();
    for spec in &episodes {
        let off = (spec.start - t0) as usize;
        let end = off + spec.duration as usize;
        let overlay = render_overlay(gnb, &loads[off..end], spec)?;
        for (s, o) in samples[off..end].iter_mut().zip(overlay) {
            s.msg3 += o.msg3_extra;
            s.msg5 = if o.rejecting {
                0
            } else {
                s.msg5 + o.msg5_extra
            };
            if let Some(n) = o.n_bue_override {
                s.n_bue = n;
            }
        }
    }

    let labels = (0..n_periods)
        .map(|p| ScenarioLabel {
            period_start: t0 + (p * period) as i64,
            kind: kinds[p].map_or(LabelKind::Normal, LabelKind::from),
            rate: rates[p],
        })
        .collect();
    Ok(Scenario {
        samples,
        labels,
        episodes,
    })
}

fn draw_rate<R: Rng + ?Sized>(
    gnb: &GnbParams,
    load: &LoadState,
    policy: &RatePolicy,
    rng: &mut R,
) -> Result<f64, SynthError> {
    let r_min = min_overload_rate(gnb, load);
    let rate = match *policy {
        RatePolicy::Range { min, max } => {
            let lo = min.unwrap_or(r_min).min(max);
            lo + (max - lo) * rng.random::<f64>()
        }
        RatePolicy::FractionOfMin { lo, hi } => r_min * (lo + (hi - lo) * rng.random::<f64>()),
        RatePolicy::TargetAvailability { target } => {
            rate_for_target_availability(gnb, load, target)?
        }
        RatePolicy::Fixed { rate } => rate,
    };
    Ok(rate.max(MIN_RATE))
}

/// Per-second legitimate load: the connected UEs of that second and the mean
/// Msg3 rate of its 900 s block.
fn load_states(trace: &[TrafficSample]) -> Vec<LoadState> {
    let mut out = Vec::with_capacity(trace.len());
    for chunk in trace.chunks(super::BIN_SECONDS) {
        let r_bue = chunk.iter().map(|s| f64::from(s.msg3)).sum::<f64>() / chunk.len() as f64;
        out.extend(chunk.iter().map(|s| LoadState {
            n_bue: f64::from(s.n_bue),
            r_bue,
        }));
    }
    out
}
