mod manifest;

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use thiserror::Error;

use rrc_storm::baseline::{fit_baseline, StaticDetector};
use rrc_storm::config::{ConfigError, RunConfig};
use rrc_storm::detector::{Alert, Decision, Detector};
use rrc_storm::eval::{
    report_table, run_suite, score, suite_table, synth_scenario, Method, ScenarioName,
    ScenarioSuite, SuiteRow,
};
use rrc_storm::io::{self as fmt, DecisionWriter, IoError, TraceReader};
use rrc_storm::synth::{LabelKind, ScenarioLabel, TrafficSample};

use manifest::{OutDir, RunManifest};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  I/O or internal failure
  2  invalid configuration or arguments
  3  malformed input data
  4  inputs that do not belong together (manifest mismatch)";

#[derive(Debug, Parser)]
#[command(
    name = "rrc-storm",
    version,
    about = "Simulate RRC signaling storms, detect them, score the detector"
)]
#[command(after_help = EXIT_CODES)]
struct Cli {
    /// More log output (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize a labelled trace.
    #[command(after_help = EXIT_CODES)]
    Synth(SynthArgs),
    /// Run a detector over a trace.
    #[command(after_help = EXIT_CODES)]
    Detect(DetectArgs),
    /// Score a detection run against its labels, or run the scenario suite.
    #[command(after_help = EXIT_CODES)]
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory [default: $RRC_STORM_OUT/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root for default output directories.
    #[arg(long, env = "RRC_STORM_OUT", hide_env_values = true)]
    out_root: Option<PathBuf>,
}

impl OutArgs {
    fn resolve(&self, command: &str) -> Result<PathBuf, CliError> {
        match (&self.out, &self.out_root) {
            (Some(p), _) => Ok(p.clone()),
            (None, Some(root)) => Ok(root.join(command)),
            (None, None) => Err(CliError::Config(
                "no output directory: pass --out or set RRC_STORM_OUT".into(),
            )),
        }
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// TOML run configuration; defaults apply to everything left out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Start from one of the evaluation scenarios.
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Trace CSV written by `synth` (or any file in the same format).
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::Evt)]
    method: MethodArg,
    /// TOML run configuration; only the detector and gnb tables matter here.
    #[arg(long)]
    config: Option<PathBuf>,
    /// 1-based trace day the Gaussian thresholds are fitted on.
    #[arg(long)]
    reference_day: Option<u32>,
    /// Labels of the trace; anomalous periods are left out of the reference day.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// decisions.csv of a detect run.
    #[arg(long, required_unless_present = "suite")]
    decisions: Option<PathBuf>,
    /// alerts.json of the same detect run.
    #[arg(long, required_unless_present = "suite")]
    alerts: Option<PathBuf>,
    /// labels.csv of the synth run whose trace was scanned.
    #[arg(long, required_unless_present = "suite")]
    labels: Option<PathBuf>,
    /// Run all five scenarios end to end instead.
    #[arg(long, conflicts_with_all = ["decisions", "alerts", "labels"])]
    suite: bool,
    /// Seeds for --suite.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Base configuration for --suite.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Evt,
    Gaussian,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Evt => Method::Evt,
            MethodArg::Gaussian => Method::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum ScenarioArg {
    SingleAttack,
    MultiRandom,
    LowUnavailability,
    LowRate,
    BusyGnb,
}

impl From<ScenarioArg> for ScenarioName {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::SingleAttack => ScenarioName::SingleAttack,
            ScenarioArg::MultiRandom => ScenarioName::MultiRandom,
            ScenarioArg::LowUnavailability => ScenarioName::LowUnavailability,
            ScenarioArg::LowRate => ScenarioName::LowRate,
            ScenarioArg::BusyGnb => ScenarioName::BusyGnb,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Consistency(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Consistency(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn data_err(path: &Path) -> impl Fn(IoError) -> CliError + '_ {
    move |e| match e {
        IoError::Io(_) => CliError::Io(format!("{}: {e}", path.display())),
        _ => CliError::Data(format!("{}: {e}", path.display())),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::io(path, e))
}

fn cmd_synth(args: &SynthArgs) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.scenario {
        cfg = ScenarioName::from(s).config(&cfg);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let sc = synth_scenario(&cfg, cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
    info!(
        "synthesized {} s with {} episodes",
        sc.samples.len(),
        sc.episodes.len()
    );

    let mut manifest = RunManifest::new("synth", &cfg.to_toml());
    manifest.seeds = vec![cfg.seed];
    let mut out = OutDir::create(args.out.resolve("synth")?, manifest)?;
    out.write("trace.csv", |w| Ok(fmt::write_trace(w, &sc.samples)?))?;
    out.write("labels.csv", |w| Ok(fmt::write_labels(w, &sc.labels)?))?;
    out.finish(started.elapsed().as_secs_f64())
}

/// Samples of day `day` (1-based, counted from the first sample), minus
/// anomalous periods when labels are given.
fn reference_day(
    trace: &Path,
    day: u32,
    labels: Option<&[ScenarioLabel]>,
) -> Result<Vec<TrafficSample>, CliError> {
    if day == 0 {
        return Err(CliError::Config("--reference-day counts from 1".into()));
    }
    let mut out = Vec::new();
    let mut t0 = None;
    for s in TraceReader::new(open(trace)?).map_err(data_err(trace))? {
        let s = s.map_err(data_err(trace))?;
        let t0 = *t0.get_or_insert(s.ts);
        let lo = t0 + i64::from(day - 1) * 86_400;
        if s.ts < lo {
            continue;
        }
        if s.ts >= lo + 86_400 {
            break;
        }
        out.push(s);
    }
    if let Some(labels) = labels {
        out.retain(|s| {
            let i = labels.partition_point(|l| l.period_start <= s.ts);
            i > 0 && labels[i - 1].kind == LabelKind::Normal
        });
    }
    Ok(out)
}

enum AnyDetector {
    Evt(Box<Detector>),
    Static(StaticDetector),
}

impl AnyDetector {
    fn step(&mut self, s: &TrafficSample) -> Decision {
        match self {
            AnyDetector::Evt(d) => d.step(s),
            AnyDetector::Static(d) => d.step(s),
        }
    }

    fn finish(self) -> Vec<Alert> {
        match self {
            AnyDetector::Evt(d) => d.finish(),
            AnyDetector::Static(d) => d.finish(),
        }
    }
}

fn cmd_detect(args: &DetectArgs) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    let cfg = load_config(args.config.as_deref())?;
    let method = Method::from(args.method);
    let mut manifest = RunManifest::new("detect", &cfg.to_toml());
    manifest.method = Some(method.as_str().into());
    manifest.add_input("trace", &args.trace)?;

    let d = &cfg.detector;
    let detector = match method {
        Method::Evt => AnyDetector::Evt(Box::new(
            Detector::new(d.clone(), cfg.gnb.n_max).map_err(|e| CliError::Config(e.to_string()))?,
        )),
        Method::Gaussian => {
            let day = args.reference_day.ok_or_else(|| {
                CliError::Config("--method gaussian needs --reference-day".into())
            })?;
            let labels = match &args.labels {
                Some(p) => {
                    manifest.add_input("labels", p)?;
                    Some(fmt::read_labels(open(p)?).map_err(data_err(p))?)
                }
                None => None,
            };
            let reference = reference_day(&args.trace, day, labels.as_deref())?;
            let th = fit_baseline(&reference)
                .map_err(|e| CliError::Data(format!("reference day {day}: {e}")))?;
            AnyDetector::Static(StaticDetector::new(
                th,
                d.confirm_count,
                d.r2_highload_level,
                d.r2_horizon,
                cfg.gnb.n_max,
            ))
        }
    };

    let mut out = OutDir::create(args.out.resolve("detect")?, manifest)?;
    let mut detector = Some(detector);
    let mut alerts = Vec::new();
    let trace = &args.trace;
    out.write("decisions.csv", |w| {
        let mut det = detector.take().expect("detector is used once");
        let mut log = DecisionWriter::new(w)?;
        for s in TraceReader::new(open(trace)?).map_err(data_err(trace))? {
            let s = s.map_err(data_err(trace))?;
            log.write(&det.step(&s))?;
        }
        log.finish()?;
        alerts = det.finish();
        Ok(())
    })?;
    info!("{} alerts", alerts.len());
    out.write("alerts.json", |w| Ok(fmt::write_alerts(w, &alerts)?))?;
    out.finish(started.elapsed().as_secs_f64())
}

fn parent(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn file_name(path: &Path) -> Result<&str, CliError> {
    path.file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CliError::Config(format!("{} is not a file path", path.display())))
}

fn cmd_eval(args: &EvalArgs) -> Result<PathBuf, CliError> {
    if args.suite {
        return cmd_suite(args);
    }
    let started = Instant::now();
    let (dec_path, alert_path, label_path) = match (&args.decisions, &args.alerts, &args.labels) {
        (Some(d), Some(a), Some(l)) => (d, a, l),
        _ => {
            return Err(CliError::Config(
                "--decisions, --alerts and --labels are required".into(),
            ))
        }
    };

    // every input has to be vouched for by the manifest beside it, and the
    // detection run has to have read the trace these labels came with
    let det_dir = parent(dec_path);
    if parent(alert_path) != det_dir {
        return Err(CliError::Consistency(
            "decisions and alerts come from different runs".into(),
        ));
    }
    let syn_dir = parent(label_path);
    let det = RunManifest::load(det_dir)?;
    let syn = RunManifest::load(syn_dir)?;
    det.verify_output(det_dir, file_name(dec_path)?)?;
    det.verify_output(det_dir, file_name(alert_path)?)?;
    syn.verify_output(syn_dir, file_name(label_path)?)?;
    let trace_sha = syn.verify_output(syn_dir, "trace.csv")?;
    match det.inputs.get("trace") {
        Some(t) if t.sha256 == trace_sha => {}
        _ => {
            return Err(CliError::Consistency(format!(
                "{} was not produced from {}",
                dec_path.display(),
                syn_dir.join("trace.csv").display()
            )))
        }
    }
    let cfg = RunConfig::from_toml(&syn.config, "synth manifest")?;
    let method = match det.method.as_deref() {
        Some("gaussian") => Method::Gaussian,
        _ => Method::Evt,
    };

    let decisions = fmt::read_decisions(open(dec_path)?).map_err(data_err(dec_path))?;
    let alerts = fmt::read_alerts(open(alert_path)?).map_err(data_err(alert_path))?;
    let labels = fmt::read_labels(open(label_path)?).map_err(data_err(label_path))?;
    let report = score(&labels, cfg.scenario.period_s, &decisions, &alerts)
        .map_err(|e| CliError::Consistency(e.to_string()))?;
    let trace_path = syn_dir.join("trace.csv");
    let trace = fmt::read_trace(open(&trace_path)?).map_err(data_err(&trace_path))?;

    let mut manifest = RunManifest::new("eval", &syn.config);
    manifest.seeds = syn.seeds.clone();
    manifest.method = Some(method.as_str().into());
    manifest.add_input("decisions", dec_path)?;
    manifest.add_input("alerts", alert_path)?;
    manifest.add_input("labels", label_path)?;
    manifest.add_input("trace", &trace_path)?;
    let mut out = OutDir::create(args.out.resolve("eval")?, manifest)?;
    out.write("report.json", |w| Ok(fmt::write_json_sorted(w, &report)?))?;
    out.write("report.csv", |w| {
        write_str(w, &report_table(method, &report))
    })?;
    out.write("plot_msg3.csv", |w| {
        Ok(fmt::write_plot_msg3(w, &decisions)?)
    })?;
    out.write("plot_r1.csv", |w| Ok(fmt::write_plot_r1(w, &decisions)?))?;
    out.write("plot_r2.csv", |w| {
        Ok(fmt::write_plot_r2(w, &alerts, &trace, cfg.gnb.n_max)?)
    })?;
    print_summary(method, &report);
    out.finish(started.elapsed().as_secs_f64())
}

fn write_str(w: &mut impl Write, s: &str) -> Result<(), CliError> {
    w.write_all(s.as_bytes())
        .map_err(|e| CliError::Io(e.to_string()))
}

fn print_summary(method: Method, r: &rrc_storm::eval::EvalReport) {
    println!(
        "{:<8} precision {:.4}  recall {:.4}  accuracy {:.4}  latency {}  verdict mistakes {}",
        method.as_str(),
        r.precision.value,
        r.recall.value,
        r.accuracy.value,
        r.mean_latency_s
            .map_or("n/a".into(), |l| format!("{l:.2} s")),
        r.verdicts.mistakes(),
    );
}

/// Mean, min and max of one metric over seeds.
fn spread(xs: impl Iterator<Item = f64>) -> Option<(f64, f64, f64)> {
    let xs: Vec<f64> = xs.collect();
    if xs.is_empty() {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((mean, min, max))
}

type MetricFn = Box<dyn Fn(&SuiteRow) -> Option<f64>>;

fn summary_table(rows: &[SuiteRow]) -> String {
    let mut out = String::from("scenario,method,seeds,metric,mean,min,max\n");
    let mut keys: Vec<(ScenarioName, Method)> = Vec::new();
    for r in rows {
        if !keys.contains(&(r.scenario, r.method)) {
            keys.push((r.scenario, r.method));
        }
    }
    for (scenario, method) in keys {
        let group: Vec<_> = rows
            .iter()
            .filter(|r| r.scenario == scenario && r.method == method)
            .collect();
        let metrics: [(&str, MetricFn); 5] = [
            ("precision", Box::new(|r| Some(r.report.precision.value))),
            ("recall", Box::new(|r| Some(r.report.recall.value))),
            ("accuracy", Box::new(|r| Some(r.report.accuracy.value))),
            ("mean_latency_s", Box::new(|r| r.report.mean_latency_s)),
            (
                "verdict_mistakes",
                Box::new(|r| Some(r.report.verdicts.mistakes() as f64)),
            ),
        ];
        for (name, get) in metrics.iter() {
            if let Some((mean, min, max)) = spread(group.iter().filter_map(|r| get(r))) {
                out.push_str(&format!(
                    "{},{},{},{name},{mean:.6},{min:.6},{max:.6}\n",
                    scenario.as_str(),
                    method.as_str(),
                    group.len()
                ));
            }
        }
    }
    out
}

fn cmd_suite(args: &EvalArgs) -> Result<PathBuf, CliError> {
    let started = Instant::now();
    if args.seeds.is_empty() {
        return Err(CliError::Config("--seeds is empty".into()));
    }
    let base = load_config(args.config.as_deref())?;
    let suite = ScenarioSuite::standard(&base);
    let rows = run_suite(&suite, &args.seeds).map_err(|e| CliError::Config(e.to_string()))?;

    let mut manifest = RunManifest::new("eval --suite", &base.to_toml());
    manifest.seeds = args.seeds.clone();
    let mut out = OutDir::create(args.out.resolve("suite")?, manifest)?;
    let summary = summary_table(&rows);
    out.write("suite.csv", |w| write_str(w, &suite_table(&rows)))?;
    out.write("suite_summary.csv", |w| write_str(w, &summary))?;
    out.write("suite.json", |w| Ok(fmt::write_json_sorted(w, &rows)?))?;
    print!("{summary}");
    out.finish(started.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match result {
        Ok(dir) => {
            info!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
