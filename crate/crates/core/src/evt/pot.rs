use std::collections::VecDeque;

use log::debug;
use serde::{Deserialize, Serialize};

use super::window::{quantile_rank, SortedWindow};
use super::{anomaly_threshold, estimate_gpd_mom, EvtError, GpdParams, TailDirection};

/// Configuration of one windowed peaks-over-threshold estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotConfig {
    /// Number of samples the tail is fitted from.
    pub window_len: usize,
    /// Most recent samples held back from the window.
    pub gap_len: usize,
    /// Risk coefficient.
    pub q: f64,
    /// Probability level of the initial threshold `t`.
    pub init_quantile: f64,
    pub direction: TailDirection,
    /// Fewest excesses a fit may use; the quantile steps toward the median
    /// until this many distinct-valued peaks are available.
    pub min_peaks: usize,
    pub quantile_step: f64,
    /// Optional `[lo, hi]` range the anomaly threshold is clamped to.
    pub clamp: Option<[f64; 2]>,
    /// Keep values classified as anomalies out of the window. A caller that
    /// decides exclusion itself (see [`PotState::commit`]) can turn this off.
    pub self_exclude: bool,
}

impl Default for PotConfig {
    fn default() -> Self {
        Self {
            window_len: 180,
            gap_len: 30,
            q: 3e-4,
            init_quantile: 0.98,
            direction: TailDirection::UpperTail,
            min_peaks: 10,
            quantile_step: 0.01,
            clamp: None,
            self_exclude: true,
        }
    }
}

impl PotConfig {
    pub fn validate(&self) -> Result<(), EvtError> {
        let bad = |m: String| Err(EvtError::InvalidConfig(m));
        if self.window_len == 0 {
            return bad("window_len must be > 0".into());
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return bad(format!("q must lie in (0, 1), got {}", self.q));
        }
        if !(self.init_quantile > 0.0 && self.init_quantile < 1.0) {
            return bad(format!(
                "init_quantile must lie in (0, 1), got {}",
                self.init_quantile
            ));
        }
        // the t-side probability has to stay below 1 - q
        let t_side = match self.direction {
            TailDirection::UpperTail => self.init_quantile,
            TailDirection::LowerTail => 1.0 - self.init_quantile,
        };
        if t_side >= 1.0 - self.q {
            return bad(format!(
                "init_quantile {} leaves no room for q = {} in the {:?}",
                self.init_quantile, self.q, self.direction
            ));
        }
        if self.min_peaks < 2 {
            return bad("min_peaks must be at least 2".into());
        }
        if !(self.quantile_step > 0.0 && self.quantile_step <= 0.5) {
            return bad(format!(
                "quantile_step must lie in (0, 0.5], got {}",
                self.quantile_step
            ));
        }
        if let Some([lo, hi]) = self.clamp {
            if !(lo <= hi) {
                return bad(format!("clamp range [{lo}, {hi}] is empty"));
            }
        }
        Ok(())
    }
}

/// Outcome of comparing one value against `t` and `t_anomaly`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleClass {
    Normal,
    Extreme,
    Anomaly,
}

/// Nearest-rank empirical quantile (zero-based rank `⌊p·n⌋`).
pub fn initial_threshold(window: &[f64], quantile: f64) -> Result<f64, EvtError> {
    if window.is_empty() {
        return Err(EvtError::InvalidInput("empty window".into()));
    }
    let mut sorted = window.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[quantile_rank(quantile, sorted.len())])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct GapEntry {
    value: f64,
    suspect: bool,
}

/// Serializable checkpoint of a [`PotState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotSnapshot {
    pub config: PotConfig,
    pub bootstrapped: bool,
    pub t: Option<f64>,
    pub t_anomaly: Option<f64>,
    pub params: Option<GpdParams>,
    pub window: Vec<f64>,
    pub gap: Vec<f64>,
    pub gap_suspect: Vec<bool>,
    pub excesses: Vec<f64>,
}

/// Rolling POT estimator for one feature.
///
/// Values pass through a gap buffer of `gap_len` samples before they join
/// the fitting window, so a slow ramp cannot drag the threshold along with
/// it. The first `window_len + gap_len` samples only fill the buffers.
#[derive(Debug, Clone)]
pub struct PotState {
    cfg: PotConfig,
    gap: VecDeque<GapEntry>,
    window: VecDeque<f64>,
    sorted: SortedWindow,
    bootstrapped: bool,
    t: f64,
    t_anomaly: f64,
    params: Option<GpdParams>,
    excesses: Vec<f64>,
}

impl PotState {
    pub fn new(cfg: PotConfig) -> Result<Self, EvtError> {
        cfg.validate()?;
        Ok(Self {
            gap: VecDeque::with_capacity(cfg.gap_len + 1),
            window: VecDeque::with_capacity(cfg.window_len + 1),
            sorted: SortedWindow::new(),
            bootstrapped: false,
            t: f64::NAN,
            t_anomaly: f64::NAN,
            params: None,
            excesses: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &PotConfig {
        &self.cfg
    }

    pub fn is_bootstrapped(&self) -> bool {
        self.bootstrapped
    }

    /// Initial (peak) threshold; NaN until bootstrapped.
    pub fn threshold(&self) -> f64 {
        self.t
    }

    /// Adaptive anomaly threshold; NaN until bootstrapped.
    pub fn anomaly_threshold(&self) -> f64 {
        self.t_anomaly
    }

    pub fn params(&self) -> Option<GpdParams> {
        self.params
    }

    /// Excesses of the last successful fit.
    pub fn excesses(&self) -> &[f64] {
        &self.excesses
    }

    pub fn window_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    pub fn gap_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.gap.iter().map(|e| e.value)
    }

    /// Three-way classification; `None` while the window is still filling.
    ///
    /// Upper-tail comparisons are strict. In the lower tail a value that
    /// reaches `t_anomaly` already counts, so a threshold clamped onto the
    /// edge of a bounded feature (zero for a ratio) can still fire.
    pub fn classify(&self, x: f64) -> Option<SampleClass> {
        if !self.bootstrapped {
            return None;
        }
        let (hit, extreme) = match self.cfg.direction {
            TailDirection::UpperTail => (x > self.t_anomaly, x > self.t),
            TailDirection::LowerTail => (x <= self.t_anomaly, x < self.t),
        };
        Some(if hit {
            SampleClass::Anomaly
        } else if extreme {
            SampleClass::Extreme
        } else {
            SampleClass::Normal
        })
    }

    /// One step of the stand-alone estimator: classify, then learn from the
    /// value unless it was an anomaly.
    pub fn update(&mut self, x: f64) -> Result<Option<SampleClass>, EvtError> {
        if !x.is_finite() {
            return Err(EvtError::NonFinite(x));
        }
        let class = self.classify(x);
        self.commit(x, class, true, false);
        Ok(class)
    }

    /// Advances the window with an already classified value.
    ///
    /// `include = false` drops the value entirely, as does an anomaly when
    /// `self_exclude` is set. `suspect` marks it for a later
    /// [`purge_suspects`](Self::purge_suspects) while it is still in the gap
    /// buffer. During bootstrap every value is kept.
    ///
    /// The tail is refitted when the value is Extreme or Anomaly, and whenever
    /// a value beyond `t` enters or leaves the fitting window; a Normal value
    /// that moves nothing in the tail leaves both thresholds as they were.
    pub fn commit(&mut self, x: f64, class: Option<SampleClass>, include: bool, suspect: bool) {
        let own = self.cfg.self_exclude && class == Some(SampleClass::Anomaly);
        if self.bootstrapped && (!include || own) {
            return;
        }
        self.gap.push_back(GapEntry { value: x, suspect });
        // a peak joining or leaving the window changes the fitted tail
        let mut tail_moved = false;
        while self.gap.len() > self.cfg.gap_len {
            let e = self.gap.pop_front().expect("non-empty gap");
            self.window.push_back(e.value);
            self.sorted.insert(e.value);
            tail_moved |= self.beyond_t(e.value);
            if self.window.len() > self.cfg.window_len {
                let old = self.window.pop_front().expect("non-empty window");
                self.sorted.remove(old);
                tail_moved |= self.beyond_t(old);
            }
        }
        if !self.bootstrapped {
            if self.window.len() == self.cfg.window_len {
                self.bootstrapped = true;
                if let Err(e) = self.refit() {
                    self.fallback();
                    debug!("bootstrap fit failed ({e}); using window extreme as threshold");
                }
            }
            return;
        }
        if tail_moved || matches!(class, Some(SampleClass::Extreme | SampleClass::Anomaly)) {
            if let Err(e) = self.refit() {
                debug!("refit failed ({e}); keeping t_anomaly = {}", self.t_anomaly);
            }
        }
    }

    fn beyond_t(&self, v: f64) -> bool {
        // NaN before bootstrap compares false
        match self.cfg.direction {
            TailDirection::UpperTail => v > self.t,
            TailDirection::LowerTail => v < self.t,
        }
    }

    /// Drops suspect values that have not yet left the gap buffer.
    pub fn purge_suspects(&mut self) {
        self.gap.retain(|e| !e.suspect);
    }

    fn tail_excesses(&self, t: f64) -> Vec<f64> {
        let dir = self.cfg.direction;
        let mut out = Vec::new();
        let mut push = |(v, c): (f64, usize)| {
            let y = dir.excess(t, v);
            out.extend(std::iter::repeat_n(y, c));
        };
        match dir {
            TailDirection::UpperTail => self.sorted.above(t).for_each(&mut push),
            TailDirection::LowerTail => self.sorted.below(t).for_each(&mut push),
        }
        out
    }

    /// Picks `t`, fits the excesses and recomputes `t_anomaly`. On error the
    /// previous thresholds are left untouched.
    fn refit(&mut self) -> Result<(), EvtError> {
        let cfg = &self.cfg;
        let n = self.sorted.len();
        let mut p = cfg.init_quantile;
        let (t, excesses) = loop {
            let t = self.sorted.quantile(p).expect("window is filled");
            let ex = self.tail_excesses(t);
            let spread = ex.iter().any(|&y| y != ex[0]);
            let next = match cfg.direction {
                TailDirection::UpperTail => p - cfg.quantile_step,
                TailDirection::LowerTail => p + cfg.quantile_step,
            };
            let past_median = match cfg.direction {
                TailDirection::UpperTail => next < 0.5,
                TailDirection::LowerTail => next > 0.5,
            };
            if (ex.len() >= cfg.min_peaks && spread) || past_median {
                break (t, ex);
            }
            p = next;
        };
        if excesses.len() < cfg.min_peaks {
            return Err(EvtError::TooFewExcesses(excesses.len()));
        }
        let params = estimate_gpd_mom(&excesses)?;
        let raw = anomaly_threshold(t, params, cfg.q, n, excesses.len(), cfg.direction)?;
        self.t = t;
        self.t_anomaly = self.bound(t, raw);
        self.params = Some(params);
        self.excesses = excesses;
        Ok(())
    }

    fn fallback(&mut self) {
        let t = self
            .sorted
            .quantile(self.cfg.init_quantile)
            .expect("window is filled");
        let edge = match self.cfg.direction {
            TailDirection::UpperTail => self.sorted.max(),
            TailDirection::LowerTail => self.sorted.min(),
        }
        .expect("window is filled");
        self.t = t;
        self.t_anomaly = self.bound(t, edge);
        self.params = None;
        self.excesses.clear();
    }

    /// Applies the configured clamp and keeps `t_anomaly` on the far side of `t`.
    fn bound(&self, t: f64, th: f64) -> f64 {
        let th = match self.cfg.clamp {
            Some([lo, hi]) => th.clamp(lo, hi),
            None => th,
        };
        match self.cfg.direction {
            TailDirection::UpperTail => th.max(t),
            TailDirection::LowerTail => th.min(t),
        }
    }

    pub fn snapshot(&self) -> PotSnapshot {
        PotSnapshot {
            config: self.cfg.clone(),
            bootstrapped: self.bootstrapped,
            t: self.bootstrapped.then_some(self.t),
            t_anomaly: self.bootstrapped.then_some(self.t_anomaly),
            params: self.params,
            window: self.window.iter().copied().collect(),
            gap: self.gap.iter().map(|e| e.value).collect(),
            gap_suspect: self.gap.iter().map(|e| e.suspect).collect(),
            excesses: self.excesses.clone(),
        }
    }

    pub fn restore(snap: PotSnapshot) -> Result<Self, EvtError> {
        snap.config.validate()?;
        if snap.window.len() > snap.config.window_len
            || snap.gap.len() > snap.config.gap_len
            || snap.gap.len() != snap.gap_suspect.len()
            || (snap.bootstrapped && (snap.t.is_none() || snap.t_anomaly.is_none()))
        {
            return Err(EvtError::InvalidInput(
                "snapshot buffers do not fit its config".into(),
            ));
        }
        let mut sorted = SortedWindow::new();
        for &x in &snap.window {
            sorted.insert(x);
        }
        Ok(Self {
            gap: snap
                .gap
                .iter()
                .zip(&snap.gap_suspect)
                .map(|(&value, &suspect)| GapEntry { value, suspect })
                .collect(),
            window: snap.window.into(),
            sorted,
            bootstrapped: snap.bootstrapped,
            t: snap.t.unwrap_or(f64::NAN),
            t_anomaly: snap.t_anomaly.unwrap_or(f64::NAN),
            params: snap.params,
            excesses: snap.excesses,
            cfg: snap.config,
        })
    }
}
