//! Online two-feature storm detector.
//!
//! A second is positive when the Msg3 count is anomalously high *and* the
//! completion ratio R1 is anomalously low. A run of `confirm_count` positive
//! seconds opens an alert; the connected-UE utilisation R2 observed while
//! the alert is open then decides between an attack and a legitimate
//! high-load.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evt::{compute_r1, EvtError, PotConfig, PotState, SampleClass, TailDirection};
use crate::storm::compute_r2;
use crate::synth::TrafficSample;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error(transparent)]
    Evt(#[from] EvtError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub msg3: PotConfig,
    pub r1: PotConfig,
    /// Consecutive positive seconds that open an alert (and negative ones
    /// that close it).
    pub confirm_count: u32,
    /// R2 at or above this counts as a full gNB.
    pub r2_highload_level: f64,
    /// Seconds after onset before an alert is provisionally called an attack.
    pub r2_horizon: u32,
    /// Keep anomalous and alert-time samples out of the estimators. Turning
    /// this off is only useful to see what the exclusion buys.
    pub exclude_anomalies: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            // a short window on bounded counts cannot climb out of the night
            // level if it also drops its own anomalies; the conjunction
            // decides what the Msg3 window loses
            msg3: PotConfig {
                self_exclude: false,
                ..PotConfig::default()
            },
            r1: PotConfig {
                window_len: 18_000,
                gap_len: 60,
                q: 1e-5,
                init_quantile: 0.001,
                direction: TailDirection::LowerTail,
                clamp: Some([0.0, 1.0]),
                ..PotConfig::default()
            },
            confirm_count: 2,
            r2_highload_level: 0.99,
            r2_horizon: 30,
            exclude_anomalies: true,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        self.msg3.validate()?;
        self.r1.validate()?;
        if self.msg3.direction != TailDirection::UpperTail {
            return Err(DetectorError::Config(
                "the msg3 estimator must use the upper tail".into(),
            ));
        }
        if self.r1.direction != TailDirection::LowerTail {
            return Err(DetectorError::Config(
                "the r1 estimator must use the lower tail".into(),
            ));
        }
        if self.confirm_count == 0 {
            return Err(DetectorError::Config(
                "confirm_count must be at least 1".into(),
            ));
        }
        if !(self.r2_highload_level > 0.0 && self.r2_highload_level <= 1.0) {
            return Err(DetectorError::Config(format!(
                "r2_highload_level must lie in (0, 1], got {}",
                self.r2_highload_level
            )));
        }
        if self.r2_horizon == 0 {
            return Err(DetectorError::Config(
                "r2_horizon must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Samples needed before both estimators classify.
    pub fn warmup_len(&self) -> usize {
        (self.msg3.window_len + self.msg3.gap_len).max(self.r1.window_len + self.r1.gap_len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pending,
    Attack,
    #[serde(rename = "highload")]
    HighLoad,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pending => "pending",
            Verdict::Attack => "attack",
            Verdict::HighLoad => "highload",
        }
    }
}

/// A confirmed detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alert {
    pub alert_id: u32,
    /// First positive second of the confirming run.
    pub onset_ts: i64,
    /// Second at which the run reached `confirm_count`.
    pub detect_ts: i64,
    /// Last positive second; `None` while the alert is open.
    pub close_ts: Option<i64>,
    pub verdict: Verdict,
}

impl Alert {
    /// Last second the alert covers, given the last second observed.
    pub fn end_ts(&self, trace_end: i64) -> i64 {
        self.close_ts.unwrap_or(trace_end).max(self.detect_ts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionClass {
    /// An estimator is still filling its window.
    Bootstrap,
    Normal,
    /// Only the Msg3 count was anomalous.
    Msg3,
    /// Only R1 was anomalous.
    R1,
    /// Both features were anomalous.
    Positive,
}

impl DecisionClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionClass::Bootstrap => "bootstrap",
            DecisionClass::Normal => "normal",
            DecisionClass::Msg3 => "msg3",
            DecisionClass::R1 => "r1",
            DecisionClass::Positive => "positive",
        }
    }

    pub fn msg3_anomalous(self) -> bool {
        matches!(self, DecisionClass::Msg3 | DecisionClass::Positive)
    }

    pub fn r1_anomalous(self) -> bool {
        matches!(self, DecisionClass::R1 | DecisionClass::Positive)
    }

    fn from_flags(msg3: bool, r1: bool) -> Self {
        match (msg3, r1) {
            (true, true) => DecisionClass::Positive,
            (true, false) => DecisionClass::Msg3,
            (false, true) => DecisionClass::R1,
            (false, false) => DecisionClass::Normal,
        }
    }
}

/// Per-second detector output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub ts: i64,
    pub msg3: u32,
    pub r1: f64,
    pub th_msg3: Option<f64>,
    pub th_r1: Option<f64>,
    pub class: DecisionClass,
    pub alert_id: Option<u32>,
    pub verdict: Option<Verdict>,
}

/// Verdict for the R2 values seen since an alert's onset.
///
/// High-load once R2 reaches `level` after a non-decreasing climb; attack
/// once `horizon` seconds passed without that, or when the alert closed
/// before. A later climb to `level` still upgrades an attack verdict.
pub fn differentiate(r2: &[f64], level: f64, horizon: u32, closed: bool) -> Verdict {
    let mut prev = f64::NEG_INFINITY;
    for &x in r2 {
        if x < prev {
            break;
        }
        if x >= level {
            return Verdict::HighLoad;
        }
        prev = x;
    }
    if closed || r2.len() >= horizon as usize {
        Verdict::Attack
    } else {
        Verdict::Pending
    }
}

#[derive(Debug, Clone)]
struct OpenAlert {
    alert: Alert,
    seen: u32,
    prev_r2: f64,
    climbing: bool,
    last_pos: i64,
}

impl OpenAlert {
    fn observe(&mut self, r2: f64, level: f64, horizon: u32) {
        self.seen += 1;
        if self.climbing && r2 < self.prev_r2 {
            self.climbing = false;
        }
        self.prev_r2 = r2;
        if self.climbing && r2 >= level {
            self.alert.verdict = Verdict::HighLoad;
        } else if self.alert.verdict == Verdict::Pending && self.seen >= horizon {
            self.alert.verdict = Verdict::Attack;
        }
    }
}

/// Confirmation buffer and incremental differentiator, shared by every
/// detection method so they are compared on equal terms.
#[derive(Debug, Clone)]
pub struct AlertTracker {
    confirm: u32,
    level: f64,
    horizon: u32,
    run_pos: u32,
    run_neg: u32,
    /// (ts, r2) of the current positive run before it is confirmed.
    pending: Vec<(i64, f64)>,
    open: Option<OpenAlert>,
    next_id: u32,
    closed: Vec<Alert>,
}

/// What the tracker says about one second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackStatus {
    pub alert_id: Option<u32>,
    pub verdict: Option<Verdict>,
    /// An alert is open after this second.
    pub active: bool,
    /// An alert opened on this second.
    pub opened: bool,
}

impl AlertTracker {
    pub fn new(confirm: u32, level: f64, horizon: u32) -> Self {
        Self {
            confirm: confirm.max(1),
            level,
            horizon,
            run_pos: 0,
            run_neg: 0,
            pending: Vec::new(),
            open: None,
            next_id: 1,
            closed: Vec::new(),
        }
    }

    pub fn is_active(&self) -> bool {
        self.open.is_some()
    }

    pub fn observe(&mut self, ts: i64, positive: bool, r2: f64) -> TrackStatus {
        let mut opened = false;
        if positive {
            self.run_pos += 1;
            self.run_neg = 0;
        } else {
            self.run_pos = 0;
            self.run_neg += 1;
        }
        match &mut self.open {
            Some(open) => {
                open.observe(r2, self.level, self.horizon);
                if positive {
                    open.last_pos = ts;
                }
            }
            None if positive => {
                self.pending.push((ts, r2));
                if self.run_pos >= self.confirm {
                    let mut open = OpenAlert {
                        alert: Alert {
                            alert_id: self.next_id,
                            onset_ts: self.pending[0].0,
                            detect_ts: ts,
                            close_ts: None,
                            verdict: Verdict::Pending,
                        },
                        seen: 0,
                        prev_r2: f64::NEG_INFINITY,
                        climbing: true,
                        last_pos: ts,
                    };
                    for &(_, x) in &self.pending {
                        open.observe(x, self.level, self.horizon);
                    }
                    self.pending.clear();
                    self.next_id += 1;
                    self.open = Some(open);
                    opened = true;
                }
            }
            None => self.pending.clear(),
        }
        let status = match &self.open {
            Some(o) => TrackStatus {
                alert_id: Some(o.alert.alert_id),
                verdict: Some(o.alert.verdict),
                active: true,
                opened,
            },
            None => TrackStatus {
                alert_id: None,
                verdict: None,
                active: false,
                opened,
            },
        };
        if self.open.is_some() && self.run_neg >= self.confirm {
            self.close();
            return TrackStatus {
                active: false,
                ..status
            };
        }
        status
    }

    fn close(&mut self) {
        if let Some(mut o) = self.open.take() {
            o.alert.close_ts = Some(o.last_pos);
            if o.alert.verdict == Verdict::Pending {
                o.alert.verdict = Verdict::Attack;
            }
            self.closed.push(o.alert);
        }
    }

    /// All alerts so far, the open one last.
    pub fn alerts(&self) -> Vec<Alert> {
        let mut out = self.closed.clone();
        if let Some(o) = &self.open {
            out.push(o.alert);
        }
        out
    }

    /// Closes any open alert at the end of the stream and returns all alerts.
    pub fn finish(mut self) -> Vec<Alert> {
        if self.open.is_some() {
            self.close();
        }
        self.closed
    }
}

/// Streaming EVT detector.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    n_max: u32,
    msg3: PotState,
    r1: PotState,
    tracker: AlertTracker,
}

impl Detector {
    pub fn new(cfg: DetectorConfig, n_max: u32) -> Result<Self, DetectorError> {
        cfg.validate()?;
        if n_max == 0 {
            return Err(DetectorError::Config("n_max must be > 0".into()));
        }
        let machine = |c: &PotConfig| PotConfig {
            self_exclude: c.self_exclude && cfg.exclude_anomalies,
            ..c.clone()
        };
        Ok(Self {
            msg3: PotState::new(machine(&cfg.msg3))?,
            r1: PotState::new(machine(&cfg.r1))?,
            tracker: AlertTracker::new(cfg.confirm_count, cfg.r2_highload_level, cfg.r2_horizon),
            cfg,
            n_max,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn msg3_state(&self) -> &PotState {
        &self.msg3
    }

    pub fn r1_state(&self) -> &PotState {
        &self.r1
    }

    /// Processes one second.
    ///
    /// Positive seconds and every second of an open alert are kept out of
    /// both estimators, as are seconds where one feature is anomalous and
    /// the other at least beyond its peak threshold. Anything with a single
    /// anomalous feature is marked so it can still be pulled from the gap
    /// buffers if an alert opens right after it. On top of that the R1
    /// estimator drops its own anomalies; the Msg3 one does not, since its
    /// short window over small counts would otherwise freeze at the night
    /// level once traffic picks up.
    pub fn step(&mut self, s: &TrafficSample) -> Decision {
        let r1 = compute_r1(s.msg3, s.msg5);
        let x3 = f64::from(s.msg3);
        let c3 = self.msg3.classify(x3);
        let c1 = self.r1.classify(r1);
        let th = |p: &PotState| p.is_bootstrapped().then(|| p.anomaly_threshold());
        let (th_msg3, th_r1) = (th(&self.msg3), th(&self.r1));

        let (class, positive) = match (c3, c1) {
            (Some(a), Some(b)) => {
                let class =
                    DecisionClass::from_flags(a == SampleClass::Anomaly, b == SampleClass::Anomaly);
                (class, class == DecisionClass::Positive)
            }
            _ => (DecisionClass::Bootstrap, false),
        };
        let was_active = self.tracker.is_active();
        let status = self
            .tracker
            .observe(s.ts, positive, compute_r2(s.n_bue, self.n_max));

        let beyond_t =
            |c: Option<SampleClass>| matches!(c, Some(SampleClass::Extreme | SampleClass::Anomaly));
        let is_anom = |c: Option<SampleClass>| c == Some(SampleClass::Anomaly);
        let suspicious = (is_anom(c3) && beyond_t(c1)) || (is_anom(c1) && beyond_t(c3));
        let quiet = !self.cfg.exclude_anomalies
            || (!positive && !suspicious && !was_active && !status.active);
        let suspect = c3 == Some(SampleClass::Anomaly) || c1 == Some(SampleClass::Anomaly);
        self.msg3.commit(x3, c3, quiet, suspect);
        self.r1.commit(r1, c1, quiet, suspect);
        if status.opened && self.cfg.exclude_anomalies {
            self.msg3.purge_suspects();
            self.r1.purge_suspects();
        }

        Decision {
            ts: s.ts,
            msg3: s.msg3,
            r1,
            th_msg3,
            th_r1,
            class,
            alert_id: status.alert_id,
            verdict: status.verdict,
        }
    }

    pub fn alerts(&self) -> Vec<Alert> {
        self.tracker.alerts()
    }

    pub fn finish(self) -> Vec<Alert> {
        self.tracker.finish()
    }
}

/// Runs the detector over a whole trace in memory.
pub fn run_detector(
    cfg: &DetectorConfig,
    n_max: u32,
    trace: &[TrafficSample],
) -> Result<(Vec<Decision>, Vec<Alert>), DetectorError> {
    let mut det = Detector::new(cfg.clone(), n_max)?;
    let decisions = trace.iter().map(|s| det.step(s)).collect();
    Ok((decisions, det.finish()))
}
