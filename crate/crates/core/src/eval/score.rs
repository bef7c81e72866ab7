use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::detector::{Alert, Decision, DecisionClass, Verdict};
use crate::storm::EpisodeKind;
use crate::synth::{LabelKind, ScenarioLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// A ratio that may have an empty denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    /// False when the denominator was zero; `value` is then a placeholder.
    pub defined: bool,
}

impl Metric {
    fn ratio(num: u64, den: u64, placeholder: f64) -> Self {
        if den == 0 {
            Metric {
                value: placeholder,
                defined: false,
            }
        } else {
            Metric {
                value: num as f64 / den as f64,
                defined: true,
            }
        }
    }
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Metric {
        Metric::ratio(self.tp + self.tn, self.total(), 1.0)
    }

    /// Reported as 1.0 (flagged undefined) when nothing was flagged.
    pub fn precision(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fp, 1.0)
    }

    pub fn recall(&self) -> Metric {
        Metric::ratio(self.tp, self.tp + self.fn_, 1.0)
    }
}

/// Verdicts given to detected episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerdictConfusion {
    pub attack_as_attack: u64,
    pub attack_as_highload: u64,
    pub highload_as_attack: u64,
    pub highload_as_highload: u64,
    pub pending: u64,
}

impl VerdictConfusion {
    /// Attacks called high-loads plus high-loads called attacks.
    pub fn mistakes(&self) -> u64 {
        self.attack_as_highload + self.highload_as_attack
    }
}

/// One true episode (a run of consecutive anomalous periods of one kind).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub start: i64,
    pub end: i64,
    pub kind: EpisodeKind,
    pub rate: Option<f64>,
    pub alert_id: Option<u32>,
    pub detect_ts: Option<i64>,
    pub latency_s: Option<f64>,
    pub verdict: Option<Verdict>,
}

/// Per-second scores for one feature or their combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub confusion: Confusion,
    pub precision: Metric,
    pub recall: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub periods: u64,
    pub anomalous_periods: u64,
    pub confusion: Confusion,
    pub accuracy: Metric,
    pub precision: Metric,
    pub recall: Metric,
    /// Mean over detected episodes; undefined when none was detected.
    pub mean_latency_s: Option<f64>,
    pub alerts: u64,
    pub verdicts: VerdictConfusion,
    /// Less than 10% of the periods are anomalous, so accuracy says little.
    pub imbalanced: bool,
    pub events: Vec<EventRow>,
    pub per_second: Vec<FeatureScore>,
}

/// Period-level scoring of alerts against labels.
///
/// An anomalous period is a true positive when any alert overlaps it. A
/// normal period only counts as a false positive when an overlapping alert
/// touches no anomalous period at all, so an alert that outlives its episode
/// into the next period is not punished. Latency is measured per episode
/// from its first second to the detection time of the first alert that
/// overlaps it.
pub fn score(
    labels: &[ScenarioLabel],
    period_s: u32,
    decisions: &[Decision],
    alerts: &[Alert],
) -> Result<EvalReport, EvalError> {
    if labels.is_empty() {
        return Err(EvalError::RangeMismatch("no labels".into()));
    }
    let p = i64::from(period_s);
    for w in labels.windows(2) {
        if w[1].period_start != w[0].period_start + p {
            return Err(EvalError::RangeMismatch(format!(
                "labels are not contiguous {period_s} s periods at {}",
                w[1].period_start
            )));
        }
    }
    let lo = labels[0].period_start;
    let hi = labels.last().expect("non-empty").period_start + p - 1;
    if let (Some(first), Some(last)) = (decisions.first(), decisions.last()) {
        if first.ts != lo || last.ts != hi {
            return Err(EvalError::RangeMismatch(format!(
                "labels cover {lo}..={hi} but decisions cover {}..={}",
                first.ts, last.ts
            )));
        }
    }
    for a in alerts {
        if a.onset_ts < lo || a.detect_ts > hi {
            return Err(EvalError::RangeMismatch(format!(
                "alert {} at {}..{} lies outside the labeled range",
                a.alert_id, a.onset_ts, a.detect_ts
            )));
        }
    }

    let idx = |ts: i64| ((ts - lo) / p) as usize;
    let spans: Vec<(usize, usize)> = alerts
        .iter()
        .map(|a| (idx(a.onset_ts), idx(a.end_ts(hi))))
        .collect();
    let anomalous = |i: usize| labels[i].kind != LabelKind::Normal;
    let explained: Vec<bool> = spans.iter().map(|&(a, b)| (a..=b).any(anomalous)).collect();

    let mut overlapped = vec![false; labels.len()];
    let mut unexplained = vec![false; labels.len()];
    for (k, &(a, b)) in spans.iter().enumerate() {
        for i in a..=b {
            overlapped[i] = true;
            if !explained[k] {
                unexplained[i] = true;
            }
        }
    }

    let mut c = Confusion::default();
    for (i, l) in labels.iter().enumerate() {
        match (l.kind != LabelKind::Normal, overlapped[i], unexplained[i]) {
            (true, true, _) => c.tp += 1,
            (true, false, _) => c.fn_ += 1,
            (false, _, true) => c.fp += 1,
            (false, _, false) => c.tn += 1,
        }
    }

    let mut events = Vec::new();
    let mut i = 0;
    while i < labels.len() {
        let Some(kind) = labels[i].kind.episode() else {
            i += 1;
            continue;
        };
        let mut j = i;
        while j + 1 < labels.len() && labels[j + 1].kind == labels[i].kind {
            j += 1;
        }
        let start = labels[i].period_start;
        let end = labels[j].period_start + p - 1;
        let hit = alerts
            .iter()
            .filter(|a| a.onset_ts <= end && a.end_ts(hi) >= start)
            .min_by_key(|a| a.detect_ts);
        events.push(EventRow {
            start,
            end,
            kind,
            rate: labels[i].rate,
            alert_id: hit.map(|a| a.alert_id),
            detect_ts: hit.map(|a| a.detect_ts),
            latency_s: hit.map(|a| (a.detect_ts - start).max(0) as f64),
            verdict: hit.map(|a| a.verdict),
        });
        i = j + 1;
    }

    let mut verdicts = VerdictConfusion::default();
    for e in &events {
        match (e.kind, e.verdict) {
            (_, None) => {}
            (_, Some(Verdict::Pending)) => verdicts.pending += 1,
            (EpisodeKind::Attack, Some(Verdict::Attack)) => verdicts.attack_as_attack += 1,
            (EpisodeKind::Attack, Some(Verdict::HighLoad)) => verdicts.attack_as_highload += 1,
            (EpisodeKind::HighLoad, Some(Verdict::Attack)) => verdicts.highload_as_attack += 1,
            (EpisodeKind::HighLoad, Some(Verdict::HighLoad)) => verdicts.highload_as_highload += 1,
        }
    }
    let lat: Vec<f64> = events.iter().filter_map(|e| e.latency_s).collect();
    let mean_latency_s = (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64);

    let anomalous_periods = c.tp + c.fn_;
    Ok(EvalReport {
        periods: labels.len() as u64,
        anomalous_periods,
        accuracy: c.accuracy(),
        precision: c.precision(),
        recall: c.recall(),
        confusion: c,
        mean_latency_s,
        alerts: alerts.len() as u64,
        verdicts,
        imbalanced: (anomalous_periods as f64) < 0.1 * labels.len() as f64,
        events,
        per_second: per_second_scores(labels, period_s, decisions),
    })
}

/// Second-level diagnostics: each feature's own anomaly flags, their
/// conjunction, and alert membership, against the period labels.
fn per_second_scores(
    labels: &[ScenarioLabel],
    period_s: u32,
    decisions: &[Decision],
) -> Vec<FeatureScore> {
    type Pick = fn(&Decision) -> bool;
    let features: [(&str, Pick); 4] = [
        ("msg3", |d| d.class.msg3_anomalous()),
        ("r1", |d| d.class.r1_anomalous()),
        ("combined", |d| d.class == DecisionClass::Positive),
        ("alert", |d| d.alert_id.is_some()),
    ];
    let Some(lo) = labels.first().map(|l| l.period_start) else {
        return Vec::new();
    };
    let p = i64::from(period_s);
    features
        .iter()
        .map(|&(name, pick)| {
            let mut c = Confusion::default();
            for d in decisions
                .iter()
                .filter(|d| d.class != DecisionClass::Bootstrap)
            {
                let truth = labels[((d.ts - lo) / p) as usize].kind != LabelKind::Normal;
                match (truth, pick(d)) {
                    (true, true) => c.tp += 1,
                    (false, true) => c.fp += 1,
                    (false, false) => c.tn += 1,
                    (true, false) => c.fn_ += 1,
                }
            }
            FeatureScore {
                feature: name.to_string(),
                precision: c.precision(),
                recall: c.recall(),
                confusion: c,
            }
        })
        .collect()
}
