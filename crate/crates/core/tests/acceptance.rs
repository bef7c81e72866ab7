//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rrc_storm::config::RunConfig;
use rrc_storm::detector::run_detector;
use rrc_storm::eval::{run_scenario, score, synth_scenario, ScenarioName, ScenarioRun};
use rrc_storm::evt::{
    anomaly_threshold, estimate_gpd_mom, GpdParams, PotConfig, PotState, SampleClass, TailDirection,
};
use rrc_storm::io;
use rrc_storm::storm::{
    accept_reject_durations, availability, rate_for_target_availability, EpisodeKind, GnbParams,
    LoadState,
};
use rrc_storm::synth::{resample_msg3, AggregateBin, ScriptedEpisode, BIN_SECONDS};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Gate {
    failed: Vec<u32>,
}

impl Gate {
    fn report(&mut self, id: u32, pass: bool, detail: String) {
        println!(
            "criterion {id:>2}: {} — {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            self.failed.push(id);
        }
    }
}

/// Inverse-CDF draw from a GPD(γ, σ).
fn gpd_draw(rng: &mut impl Rng, gamma: f64, sigma: f64) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>();
    if gamma == 0.0 {
        -sigma * u.ln()
    } else {
        sigma / gamma * (u.powf(-gamma) - 1.0)
    }
}

fn gpd_recovery(g: &mut Gate) {
    const N_T: usize = 5000;
    const REPEATS: u64 = 20;
    let started = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    let mut ok = true;
    let mut misses = Vec::new();
    for gamma in [0.0, 0.1, 0.25, 0.4] {
        for sigma in [0.5, 1.0, 2.0] {
            let mut sum = (0.0, 0.0);
            for rep in 0..REPEATS {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    1000 * rep + (gamma * 100.0) as u64 * 10 + sigma as u64,
                );
                let ys: Vec<f64> = (0..N_T).map(|_| gpd_draw(&mut rng, gamma, sigma)).collect();
                let p = estimate_gpd_mom(&ys).expect("fit");
                sum.0 += p.gamma;
                sum.1 += p.sigma;
            }
            let (gh, sh) = (sum.0 / REPEATS as f64, sum.1 / REPEATS as f64);
            let (dg, ds) = ((gh - gamma).abs(), (sh / sigma - 1.0).abs());
            worst = (worst.0.max(dg), worst.1.max(ds));
            if dg > 0.05 || ds > 0.10 {
                ok = false;
                misses.push(format!("γ={gamma} σ={sigma}: γ̂={gh:.3} σ̂={sh:.3}"));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    g.report(
        1,
        ok && secs < 5.0,
        format!(
            "GPD MOM recovery, mean of {REPEATS} fits of {N_T} draws: worst |Δγ| {:.4}, worst |Δσ|/σ {:.2}%, {secs:.2} s{}",
            worst.0,
            worst.1 * 100.0,
            if misses.is_empty() { String::new() } else { format!("; misses: {}", misses.join(", ")) }
        ),
    );
}

fn threshold_formula(g: &mut Gate) {
    // 10 + 3·(10^0.25 − 1), evaluated by hand
    const ORACLE: f64 = 12.334_838_230_116_77;
    let p = GpdParams {
        gamma: 0.25,
        sigma: 0.75,
    };
    let th = anomaly_threshold(10.0, p, 1e-3, 10_000, 100, TailDirection::UpperTail).unwrap();
    let rel = ((th - ORACLE) / ORACLE).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for _ in 0..1000 {
        let t = rng.random_range(-100.0..100.0);
        let params = GpdParams {
            gamma: rng.random_range(-0.5..0.49),
            sigma: rng.random_range(0.01..10.0),
        };
        let n = rng.random_range(100..100_000usize);
        let nt = rng.random_range(1..=n / 10);
        let q_hi = rng.random_range(1e-7..(nt as f64 / n as f64));
        let q_lo = q_hi * rng.random_range(0.01..0.99);
        let up = |q| anomaly_threshold(t, params, q, n, nt, TailDirection::UpperTail).unwrap();
        let low = |q| anomaly_threshold(t, params, q, n, nt, TailDirection::LowerTail).unwrap();
        // rarer events sit further out, and the two tails mirror around t
        if !(up(q_lo) >= up(q_hi) && low(q_lo) <= low(q_hi)) {
            violations += 1;
        }
        if !(low(q_hi) <= t && t <= up(q_hi))
            || ((up(q_hi) - t) - (t - low(q_hi))).abs() > 1e-9 * (1.0 + t.abs())
        {
            violations += 1;
        }
    }
    g.report(
        2,
        rel < 1e-6 && violations == 0,
        format!("hand example {th:.9} (relative error {rel:.1e}); {violations} property violations in 1000 draws"),
    );
}

fn calibration_rate(stream: &mut dyn FnMut() -> f64) -> f64 {
    let cfg = PotConfig {
        window_len: 50_000,
        gap_len: 0,
        q: 1e-3,
        ..PotConfig::default()
    };
    let mut st = PotState::new(cfg).unwrap();
    while !st.is_bootstrapped() {
        st.update(stream()).unwrap();
    }
    let n = 100_000;
    let hits = (0..n)
        .filter(|_| st.update(stream()).unwrap() == Some(SampleClass::Anomaly))
        .count();
    hits as f64 / n as f64
}

fn pot_calibration(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let uniform = calibration_rate(&mut || rng.random::<f64>());
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let exponential = calibration_rate(&mut || -(1.0 - rng.random::<f64>()).ln());
    // the simulator's own per-second draw: Poisson(20) truncated to [0, 40]
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bin = AggregateBin {
        start: 0,
        msg3_total: 20 * BIN_SECONDS as u64,
        msg5_total: 0,
        n_bue_avg: 0.0,
    };
    let mut buf: Vec<u32> = Vec::new();
    let poisson = calibration_rate(&mut || {
        if buf.is_empty() {
            buf = resample_msg3(&bin, &mut rng);
        }
        f64::from(buf.pop().unwrap())
    });
    let worst = uniform.max(exponential).max(poisson);
    g.report(
        3,
        worst <= 5e-3,
        format!(
            "anomaly rates at q=1e-3 over 1e5 samples: uniform {uniform:.1e}, exponential {exponential:.1e}, truncated Poisson(20) {poisson:.1e}"
        ),
    );
}

fn storm_closed_forms(g: &mut Gate) {
    let p = GnbParams {
        t_w: 5.0,
        n_max: 300,
    };
    let idle = LoadState {
        n_bue: 0.0,
        r_bue: 0.0,
    };
    let (t_a, t_r) = accept_reject_durations(&p, &idle, 100.0);
    let avail = availability(t_a, t_r);
    let example = t_a == 3.0 && t_r == 2.0 && avail == 0.6;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 1000 {
        let p = GnbParams {
            t_w: rng.random_range(0.5..20.0),
            n_max: rng.random_range(10..2000),
        };
        let s = LoadState {
            n_bue: rng.random_range(0.0..f64::from(p.n_max) * 0.99),
            r_bue: rng.random_range(0.0..50.0),
        };
        let target = rng.random_range(0.01..0.999);
        let Ok(rate) = rate_for_target_availability(&p, &s, target) else {
            continue;
        };
        let (t_a, t_r) = accept_reject_durations(&p, &s, rate);
        worst = worst.max((availability(t_a, t_r) - target).abs());
        checked += 1;
    }
    g.report(
        4,
        example && worst <= 1e-9,
        format!(
            "T_A={t_a} T_R={t_r} availability {avail}; round trip over {checked} feasible configs, worst error {worst:.1e}"
        ),
    );
}

struct Timed {
    run: ScenarioRun,
    secs: f64,
}

fn run_seeds(name: ScenarioName) -> Vec<Timed> {
    let cfg = name.config(&RunConfig::default());
    SEEDS
        .par_iter()
        .map(|&seed| {
            let started = Instant::now();
            let run = run_scenario(&cfg, seed).unwrap_or_else(|e| panic!("{}: {e}", name.as_str()));
            Timed {
                run,
                secs: started.elapsed().as_secs_f64(),
            }
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn min(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::INFINITY, f64::min)
}

fn max(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(f64::NEG_INFINITY, f64::max)
}

fn multi_random(g: &mut Gate, runs: &[Timed]) {
    let evt = || runs.iter().map(|t| &t.run.evt.report);
    let p = min(evt().map(|r| r.precision.value));
    let r = min(evt().map(|r| r.recall.value));
    let confusion: u64 = evt().map(|r| r.verdicts.mistakes()).sum();
    let lat = max(evt().map(|r| r.mean_latency_s.unwrap_or(f64::INFINITY)));
    let secs = max(runs.iter().map(|t| t.secs));
    g.report(
        5,
        p >= 0.98 && r >= 0.98 && confusion == 0 && lat <= 6.0 && secs < 120.0,
        format!(
            "multi_random over 5 seeds: min precision {p:.4}, min recall {r:.4}, verdict mistakes {confusion}, worst mean latency {lat:.2} s, slowest seed {secs:.1} s"
        ),
    );
}

fn baseline_gap(g: &mut Gate, runs: &[Timed]) {
    let evt_p = mean(runs.iter().map(|t| t.run.evt.report.precision.value));
    let gau_p = mean(runs.iter().map(|t| t.run.gaussian.report.precision.value));
    let gau_r = min(runs.iter().map(|t| t.run.gaussian.report.recall.value));
    let lower_every_seed = runs
        .iter()
        .all(|t| t.run.gaussian.report.precision.value < t.run.evt.report.precision.value);
    let min_gap = min(runs
        .iter()
        .map(|t| t.run.evt.report.precision.value - t.run.gaussian.report.precision.value));
    let gap = evt_p - gau_p;
    g.report(
        6,
        gap >= 0.05 && gau_r >= 0.98 && lower_every_seed,
        format!(
            "multi_random mean precision EVT {evt_p:.4} vs Gaussian {gau_p:.4} (gap {:.1} pp, smallest per-seed gap {:.1} pp), Gaussian min recall {gau_r:.4}",
            gap * 100.0,
            min_gap * 100.0
        ),
    );
}

fn hard_scenarios(g: &mut Gate, low_unavail: &[Timed], low_rate: &[Timed], busy: &[Timed]) {
    let stats = |runs: &[Timed]| {
        let p = min(runs.iter().map(|t| t.run.evt.report.precision.value));
        let r = min(runs.iter().map(|t| t.run.evt.report.recall.value));
        let c: u64 = runs
            .iter()
            .map(|t| t.run.evt.report.verdicts.mistakes())
            .sum();
        (p, r, c)
    };
    let (p1, r1, c1) = stats(low_unavail);
    let (p2, r2, c2) = stats(low_rate);
    let (p3, r3, c3) = stats(busy);
    let pass =
        r1 >= 0.85 && p1 >= 0.95 && p2 >= 0.95 && r3 >= 0.95 && p3 >= 0.95 && c1 + c2 + c3 == 0;
    g.report(
        7,
        pass,
        format!(
            "min over 5 seeds — low_unavailability P {p1:.4} R {r1:.4}; low_rate P {p2:.4} (R {r2:.4}); busy_gnb P {p3:.4} R {r3:.4}; verdict mistakes {}",
            c1 + c2 + c3
        ),
    );
}

fn clean_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scenario.attack = 0.0;
    cfg.scenario.highload = 0.0;
    cfg
}

fn clean_days(g: &mut Gate) {
    let cfg = clean_config();
    let counts: Vec<usize> = SEEDS
        .par_iter()
        .map(|&seed| {
            let sc = synth_scenario(&cfg, seed).unwrap();
            run_detector(&cfg.detector, cfg.gnb.n_max, &sc.samples)
                .unwrap()
                .1
                .len()
        })
        .collect();
    g.report(
        8,
        counts.iter().all(|&c| c == 0),
        format!("alerts on 4 clean days per seed: {counts:?}"),
    );
}

/// Every file the pipeline would write, in memory.
fn pipeline_bytes(seed: u64) -> Vec<Vec<u8>> {
    let cfg = ScenarioName::MultiRandom.config(&RunConfig::default());
    let sc = synth_scenario(&cfg, seed).unwrap();
    let (decisions, alerts) = run_detector(&cfg.detector, cfg.gnb.n_max, &sc.samples).unwrap();
    let report = score(&sc.labels, cfg.scenario.period_s, &decisions, &alerts).unwrap();
    let mut files = vec![Vec::new(); 5];
    io::write_trace(&mut files[0], &sc.samples).unwrap();
    io::write_labels(&mut files[1], &sc.labels).unwrap();
    io::write_decisions(&mut files[2], &decisions).unwrap();
    io::write_alerts(&mut files[3], &alerts).unwrap();
    io::write_json_sorted(&mut files[4], &report).unwrap();
    files
}

fn determinism(g: &mut Gate) {
    let (a, b) = rayon::join(|| pipeline_bytes(7), || pipeline_bytes(7));
    let same = a == b;
    let bytes: usize = a.iter().map(Vec::len).sum();
    g.report(
        9,
        same && bytes > 0,
        format!(
            "two synth→detect→eval runs, {bytes} bytes of trace/labels/decisions/alerts/report: {}",
            if same { "identical" } else { "differ" }
        ),
    );
}

fn ramp(g: &mut Gate) {
    const OFFSET: i64 = 15 * 3600 + 15 * 60;
    let mut cfg = clean_config();
    cfg.scenario.episodes = vec![ScriptedEpisode {
        kind: EpisodeKind::Attack,
        rate: 100.0,
        offset_s: OFFSET,
        duration_s: 60,
        ramp_s: 60,
    }];
    let delays: Vec<Option<i64>> = SEEDS
        .par_iter()
        .map(|&seed| {
            let sc = synth_scenario(&cfg, seed).unwrap();
            let start = sc.episodes[0].start;
            let (_, alerts) = run_detector(&cfg.detector, cfg.gnb.n_max, &sc.samples).unwrap();
            alerts
                .iter()
                .find(|a| a.end_ts(i64::MAX) >= start && a.onset_ts < start + 60)
                .map(|a| a.detect_ts - start)
        })
        .collect();
    let pass = delays.iter().all(|d| d.is_some_and(|d| d < 30));
    g.report(
        10,
        pass,
        format!("60 s ramp to 100 at day 1 15:15, alert seconds after episode start per seed: {delays:?} (midpoint 30)"),
    );
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut g = Gate { failed: Vec::new() };
    gpd_recovery(&mut g);
    threshold_formula(&mut g);
    pot_calibration(&mut g);
    storm_closed_forms(&mut g);
    let multi = run_seeds(ScenarioName::MultiRandom);
    multi_random(&mut g, &multi);
    baseline_gap(&mut g, &multi);
    let low_unavail = run_seeds(ScenarioName::LowUnavailability);
    let low_rate = run_seeds(ScenarioName::LowRate);
    let busy = run_seeds(ScenarioName::BusyGnb);
    hard_scenarios(&mut g, &low_unavail, &low_rate, &busy);
    clean_days(&mut g);
    determinism(&mut g);
    ramp(&mut g);
    println!(
        "acceptance finished in {:.1} s",
        started.elapsed().as_secs_f64()
    );
    if g.failed.is_empty() {
        println!("all 10 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {:?}", g.failed);
        ExitCode::FAILURE
    }
}
