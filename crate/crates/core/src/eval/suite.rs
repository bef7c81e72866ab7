use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{score, EvalError, EvalReport};
use crate::baseline::{detect_static, fit_baseline};
use crate::config::RunConfig;
use crate::detector::{run_detector, Alert, Decision};
use crate::storm::EpisodeKind;
use crate::synth::{
    build_scenario, synth_baseline, LabelKind, RatePolicy, Scenario, ScriptedEpisode, SynthError,
    TrafficSample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Evt,
    Gaussian,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Evt => "evt",
            Method::Gaussian => "gaussian",
        }
    }
}

/// The five evaluation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    /// One 15-minute flood at 100 Msg3/s in the afternoon of day 1.
    SingleAttack,
    /// Random attacks and high-loads on 5-minute periods.
    MultiRandom,
    /// Attacks tuned to leave the gNB available 95% of the time.
    LowUnavailability,
    /// Episodes at 50–100% of the minimum overload rate.
    LowRate,
    /// Multi-random episodes on 1.5× the legitimate traffic.
    BusyGnb,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [
        ScenarioName::SingleAttack,
        ScenarioName::MultiRandom,
        ScenarioName::LowUnavailability,
        ScenarioName::LowRate,
        ScenarioName::BusyGnb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::SingleAttack => "single_attack",
            ScenarioName::MultiRandom => "multi_random",
            ScenarioName::LowUnavailability => "low_unavailability",
            ScenarioName::LowRate => "low_rate",
            ScenarioName::BusyGnb => "busy_gnb",
        }
    }

    /// This scenario's run config, derived from `base`.
    pub fn config(self, base: &RunConfig) -> RunConfig {
        let mut cfg = base.clone();
        let share = base.scenario.attack + base.scenario.highload;
        match self {
            ScenarioName::SingleAttack => {
                cfg.scenario.attack = 0.0;
                cfg.scenario.highload = 0.0;
                cfg.scenario.episodes = vec![ScriptedEpisode {
                    kind: EpisodeKind::Attack,
                    rate: 100.0,
                    offset_s: 15 * 3600 + 15 * 60,
                    duration_s: 900,
                    ramp_s: 0,
                }];
            }
            ScenarioName::MultiRandom => {}
            ScenarioName::LowUnavailability => {
                cfg.scenario.attack = share;
                cfg.scenario.highload = 0.0;
                cfg.scenario.rate = RatePolicy::TargetAvailability { target: 0.95 };
            }
            ScenarioName::LowRate => {
                cfg.scenario.rate = RatePolicy::FractionOfMin { lo: 0.5, hi: 1.0 };
            }
            ScenarioName::BusyGnb => {
                cfg.synth.profile.scale = 1.5;
            }
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioSuite {
    pub scenarios: Vec<(ScenarioName, RunConfig)>,
}

impl ScenarioSuite {
    pub fn standard(base: &RunConfig) -> Self {
        Self {
            scenarios: ScenarioName::ALL
                .iter()
                .map(|&n| (n, n.config(base)))
                .collect(),
        }
    }
}

/// Output of one method on one scenario trace.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub decisions: Vec<Decision>,
    pub alerts: Vec<Alert>,
    pub report: EvalReport,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub evt: MethodRun,
    pub gaussian: MethodRun,
}

/// Synthesizes the trace for `cfg` with `seed`.
pub fn synth_scenario(cfg: &RunConfig, seed: u64) -> Result<Scenario, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (base, _) = synth_baseline(&cfg.synth.profile, cfg.synth.days, &mut rng)?;
    build_scenario(&base, &cfg.gnb, &cfg.scenario, &mut rng)
}

/// Samples of reference day `day` (1-based) that lie in normal periods.
pub fn reference_samples<'a>(
    samples: &'a [TrafficSample],
    labels: &'a [crate::synth::ScenarioLabel],
    period_s: u32,
    day: u32,
) -> impl Iterator<Item = TrafficSample> + 'a {
    let t0 = samples.first().map_or(0, |s| s.ts);
    let lo = t0 + i64::from(day - 1) * 86_400;
    let hi = lo + 86_400;
    let lt0 = labels.first().map_or(t0, |l| l.period_start);
    samples.iter().copied().filter(move |s| {
        let i = ((s.ts - lt0) / i64::from(period_s)) as usize;
        s.ts >= lo && s.ts < hi && labels.get(i).is_some_and(|l| l.kind == LabelKind::Normal)
    })
}

/// Synthesizes, detects with both methods and scores.
pub fn run_scenario(cfg: &RunConfig, seed: u64) -> Result<ScenarioRun, String> {
    let sc = synth_scenario(cfg, seed).map_err(|e| e.to_string())?;
    let period = cfg.scenario.period_s;

    let (decisions, alerts) =
        run_detector(&cfg.detector, cfg.gnb.n_max, &sc.samples).map_err(|e| e.to_string())?;
    let report = score(&sc.labels, period, &decisions, &alerts).map_err(|e| e.to_string())?;
    let evt = MethodRun {
        decisions,
        alerts,
        report,
    };

    let reference: Vec<_> =
        reference_samples(&sc.samples, &sc.labels, period, cfg.baseline.reference_day).collect();
    let th = fit_baseline(&reference).map_err(|e| e.to_string())?;
    let d = &cfg.detector;
    let (decisions, alerts) = detect_static(
        &th,
        &sc.samples,
        d.confirm_count,
        d.r2_highload_level,
        d.r2_horizon,
        cfg.gnb.n_max,
    );
    let report = score(&sc.labels, period, &decisions, &alerts).map_err(|e| e.to_string())?;
    let gaussian = MethodRun {
        decisions,
        alerts,
        report,
    };

    Ok(ScenarioRun {
        scenario: sc,
        evt,
        gaussian,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteRow {
    pub scenario: ScenarioName,
    pub seed: u64,
    pub method: Method,
    pub report: EvalReport,
}

/// Every scenario × seed × method, run in parallel. Rows come back in a
/// fixed order regardless of scheduling.
pub fn run_suite(suite: &ScenarioSuite, seeds: &[u64]) -> Result<Vec<SuiteRow>, EvalError> {
    let jobs: Vec<(ScenarioName, &RunConfig, u64)> = suite
        .scenarios
        .iter()
        .flat_map(|(n, c)| seeds.iter().map(move |&s| (*n, c, s)))
        .collect();
    let runs: Vec<Result<[SuiteRow; 2], EvalError>> = jobs
        .par_iter()
        .map(|&(name, cfg, seed)| {
            let run = run_scenario(cfg, seed).map_err(|message| EvalError::Scenario {
                scenario: name.as_str().to_string(),
                seed,
                message,
            })?;
            Ok([
                SuiteRow {
                    scenario: name,
                    seed,
                    method: Method::Evt,
                    report: run.evt.report,
                },
                SuiteRow {
                    scenario: name,
                    seed,
                    method: Method::Gaussian,
                    report: run.gaussian.report,
                },
            ])
        })
        .collect();
    let mut rows = Vec::with_capacity(runs.len() * 2);
    for r in runs {
        rows.extend(r?);
    }
    Ok(rows)
}

fn fmt_metric(m: &super::Metric) -> String {
    if m.defined {
        format!("{:.6}", m.value)
    } else {
        String::new()
    }
}

const METRIC_COLUMNS: [&str; 12] = [
    "method",
    "feature",
    "level",
    "accuracy",
    "precision",
    "recall",
    "mean_latency_s",
    "tp",
    "fp",
    "tn",
    "fn",
    "verdict_mistakes",
];

/// One period-level row plus per-second rows for each feature the method
/// uses, each prefixed with `lead`.
fn write_report_rows(
    w: &mut csv::Writer<Vec<u8>>,
    lead: &[String],
    method: Method,
    r: &EvalReport,
) {
    let mut put = |cells: [String; 12]| {
        w.write_record(lead.iter().cloned().chain(cells))
            .expect("in-memory write");
    };
    let feature = match method {
        Method::Evt => "msg3+r1",
        Method::Gaussian => "msg3",
    };
    let c = r.confusion;
    put([
        method.as_str().into(),
        feature.into(),
        "period".into(),
        fmt_metric(&r.accuracy),
        fmt_metric(&r.precision),
        fmt_metric(&r.recall),
        r.mean_latency_s
            .map(|x| format!("{x:.3}"))
            .unwrap_or_default(),
        c.tp.to_string(),
        c.fp.to_string(),
        c.tn.to_string(),
        c.fn_.to_string(),
        r.verdicts.mistakes().to_string(),
    ]);
    let per_second: &[&str] = match method {
        Method::Evt => &["msg3", "r1", "combined"],
        Method::Gaussian => &["msg3"],
    };
    for f in r
        .per_second
        .iter()
        .filter(|f| per_second.contains(&f.feature.as_str()))
    {
        let c = f.confusion;
        put([
            method.as_str().into(),
            f.feature.clone(),
            "second".into(),
            fmt_metric(&c.accuracy()),
            fmt_metric(&f.precision),
            fmt_metric(&f.recall),
            String::new(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            String::new(),
        ]);
    }
}

fn finish_table(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Metrics of a single run as CSV.
pub fn report_table(method: Method, report: &EvalReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRIC_COLUMNS).expect("in-memory write");
    write_report_rows(&mut w, &[], method, report);
    finish_table(w)
}

/// Comparison table over a whole suite, one block of rows per
/// scenario × seed × method.
pub fn suite_table(rows: &[SuiteRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["scenario", "seed"].into_iter().chain(METRIC_COLUMNS))
        .expect("in-memory write");
    for row in rows {
        let lead = [row.scenario.as_str().to_string(), row.seed.to_string()];
        write_report_rows(&mut w, &lead, row.method, &row.report);
    }
    finish_table(w)
}
