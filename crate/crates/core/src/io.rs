//! File formats: trace, label and decision CSVs, alert and report JSON,
//! and the plot-data tables.
//!
//! Writers are byte-stable: floats in the decision log are rounded to six
//! decimals and JSON objects are emitted with sorted keys.

use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::detector::{Alert, Decision, DecisionClass, Verdict};
use crate::storm::compute_r2;
use crate::synth::{LabelKind, ScenarioLabel, TrafficSample};

pub const TRACE_HEADER: [&str; 4] = ["ts", "msg3", "msg5", "n_bue"];
pub const LABEL_HEADER: [&str; 3] = ["period_start", "kind", "rate"];
pub const DECISION_HEADER: [&str; 8] = [
    "ts", "msg3", "r1", "th_msg3", "th_r1", "class", "alert_id", "verdict",
];

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<(), IoError> {
    let found = rdr.headers()?;
    if found.iter().ne(expected.iter().copied()) {
        return Err(IoError::Header {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(r)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize, name: &str) -> Result<&'a str, IoError> {
    rec.get(i).ok_or_else(|| IoError::Row {
        line: line_of(rec),
        message: format!("missing field `{name}`"),
    })
}

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, name: &str) -> Result<T, IoError>
where
    T::Err: std::fmt::Display,
{
    let raw = field(rec, i, name)?;
    raw.parse().map_err(|e| IoError::Row {
        line: line_of(rec),
        message: format!("`{name}` = {raw:?}: {e}"),
    })
}

fn parse_opt<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<Option<T>, IoError>
where
    T::Err: std::fmt::Display,
{
    if field(rec, i, name)?.is_empty() {
        Ok(None)
    } else {
        parse(rec, i, name).map(Some)
    }
}

fn row_error(rec: &csv::StringRecord, message: String) -> IoError {
    IoError::Row {
        line: line_of(rec),
        message,
    }
}

pub fn write_trace<W: Write>(w: W, samples: &[TrafficSample]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for s in samples {
        out.write_record([
            s.ts.to_string(),
            s.msg3.to_string(),
            s.msg5.to_string(),
            s.n_bue.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Streaming trace reader. Rejects malformed rows and any timestamp that
/// does not follow its predecessor by exactly one second.
pub struct TraceReader<R: Read> {
    rdr: csv::Reader<R>,
    rec: csv::StringRecord,
    prev_ts: Option<i64>,
    failed: bool,
}

impl<R: Read> TraceReader<R> {
    pub fn new(r: R) -> Result<Self, IoError> {
        let mut rdr = reader(r);
        check_header(&mut rdr, &TRACE_HEADER)?;
        Ok(Self {
            rdr,
            rec: csv::StringRecord::new(),
            prev_ts: None,
            failed: false,
        })
    }

    fn next_sample(&mut self) -> Result<Option<TrafficSample>, IoError> {
        if !self.rdr.read_record(&mut self.rec)? {
            return Ok(None);
        }
        let rec = &self.rec;
        if rec.len() != TRACE_HEADER.len() {
            return Err(row_error(
                rec,
                format!("expected 4 fields, found {}", rec.len()),
            ));
        }
        let s = TrafficSample {
            ts: parse(rec, 0, "ts")?,
            msg3: parse(rec, 1, "msg3")?,
            msg5: parse(rec, 2, "msg5")?,
            n_bue: parse(rec, 3, "n_bue")?,
        };
        if let Some(prev) = self.prev_ts {
            if s.ts != prev + 1 {
                return Err(row_error(
                    rec,
                    format!("timestamp {} does not follow {prev}", s.ts),
                ));
            }
        }
        self.prev_ts = Some(s.ts);
        Ok(Some(s))
    }
}

impl<R: Read> Iterator for TraceReader<R> {
    type Item = Result<TrafficSample, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let out = self.next_sample().transpose();
        if matches!(out, Some(Err(_))) {
            self.failed = true;
        }
        out
    }
}

pub fn read_trace<R: Read>(r: R) -> Result<Vec<TrafficSample>, IoError> {
    TraceReader::new(r)?.collect()
}

fn label_kind_str(k: LabelKind) -> &'static str {
    match k {
        LabelKind::Normal => "normal",
        LabelKind::Attack => "attack",
        LabelKind::HighLoad => "highload",
    }
}

pub fn write_labels<W: Write>(w: W, labels: &[ScenarioLabel]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(LABEL_HEADER)?;
    for l in labels {
        out.write_record([
            l.period_start.to_string(),
            label_kind_str(l.kind).to_string(),
            l.rate.map(|r| format!("{r:.6}")).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_labels<R: Read>(r: R) -> Result<Vec<ScenarioLabel>, IoError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &LABEL_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let kind = match field(&rec, 1, "kind")? {
            "normal" => LabelKind::Normal,
            "attack" => LabelKind::Attack,
            "highload" => LabelKind::HighLoad,
            other => return Err(row_error(&rec, format!("unknown kind {other:?}"))),
        };
        let rate = parse_opt(&rec, 2, "rate")?;
        if (kind == LabelKind::Normal) != rate.is_none() {
            return Err(row_error(
                &rec,
                "rate must be empty exactly for normal periods".into(),
            ));
        }
        out.push(ScenarioLabel {
            period_start: parse(&rec, 0, "period_start")?,
            kind,
            rate,
        });
    }
    Ok(out)
}

fn fmt6(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_default()
}

/// Incremental decision-log writer, so detection never holds the log.
pub struct DecisionWriter<W: Write> {
    out: csv::Writer<W>,
}

impl<W: Write> DecisionWriter<W> {
    pub fn new(w: W) -> Result<Self, IoError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(DECISION_HEADER)?;
        Ok(Self { out })
    }

    pub fn write(&mut self, d: &Decision) -> Result<(), IoError> {
        self.out.write_record([
            d.ts.to_string(),
            d.msg3.to_string(),
            format!("{:.6}", d.r1),
            fmt6(d.th_msg3),
            fmt6(d.th_r1),
            d.class.as_str().to_string(),
            d.alert_id.map(|a| a.to_string()).unwrap_or_default(),
            d.verdict
                .map(|v| v.as_str().to_string())
                .unwrap_or_default(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, IoError> {
        self.out.flush()?;
        self.out
            .into_inner()
            .map_err(|e| IoError::Io(e.into_error()))
    }
}

pub fn write_decisions<W: Write>(w: W, decisions: &[Decision]) -> Result<(), IoError> {
    let mut out = DecisionWriter::new(w)?;
    for d in decisions {
        out.write(d)?;
    }
    out.finish()?;
    Ok(())
}

fn parse_class(rec: &csv::StringRecord, raw: &str) -> Result<DecisionClass, IoError> {
    Ok(match raw {
        "bootstrap" => DecisionClass::Bootstrap,
        "normal" => DecisionClass::Normal,
        "msg3" => DecisionClass::Msg3,
        "r1" => DecisionClass::R1,
        "positive" => DecisionClass::Positive,
        other => return Err(row_error(rec, format!("unknown class {other:?}"))),
    })
}

fn parse_verdict(raw: &str) -> Option<Verdict> {
    match raw {
        "pending" => Some(Verdict::Pending),
        "attack" => Some(Verdict::Attack),
        "highload" => Some(Verdict::HighLoad),
        _ => None,
    }
}

pub fn read_decisions<R: Read>(r: R) -> Result<Vec<Decision>, IoError> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &DECISION_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let verdict = match field(&rec, 7, "verdict")? {
            "" => None,
            raw => Some(
                parse_verdict(raw)
                    .ok_or_else(|| row_error(&rec, format!("unknown verdict {raw:?}")))?,
            ),
        };
        out.push(Decision {
            ts: parse(&rec, 0, "ts")?,
            msg3: parse(&rec, 1, "msg3")?,
            r1: parse(&rec, 2, "r1")?,
            th_msg3: parse_opt(&rec, 3, "th_msg3")?,
            th_r1: parse_opt(&rec, 4, "th_r1")?,
            class: parse_class(&rec, field(&rec, 5, "class")?)?,
            alert_id: parse_opt(&rec, 6, "alert_id")?,
            verdict,
        });
    }
    Ok(out)
}

/// Pretty JSON with object keys in lexicographic order and a final newline.
pub fn write_json_sorted<W: Write, T: Serialize + ?Sized>(
    mut w: W,
    value: &T,
) -> Result<(), IoError> {
    // serde_json's map type is ordered by key unless `preserve_order` is on
    let v = serde_json::to_value(value)?;
    serde_json::to_writer_pretty(&mut w, &v)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_alerts<W: Write>(w: W, alerts: &[Alert]) -> Result<(), IoError> {
    write_json_sorted(w, alerts)
}

pub fn read_alerts<R: Read>(r: R) -> Result<Vec<Alert>, IoError> {
    Ok(serde_json::from_reader(r)?)
}

/// Msg3 count with its anomaly threshold, one row per second.
pub fn write_plot_msg3<W: Write>(w: W, decisions: &[Decision]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["ts", "msg3", "th_msg3", "positive"])?;
    for d in decisions {
        out.write_record([
            d.ts.to_string(),
            d.msg3.to_string(),
            fmt6(d.th_msg3),
            u8::from(d.class == DecisionClass::Positive).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// R1 with its anomaly threshold, one row per second.
pub fn write_plot_r1<W: Write>(w: W, decisions: &[Decision]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["ts", "r1", "th_r1", "positive"])?;
    for d in decisions {
        out.write_record([
            d.ts.to_string(),
            format!("{:.6}", d.r1),
            fmt6(d.th_r1),
            u8::from(d.class == DecisionClass::Positive).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// R2 over every second covered by an alert.
pub fn write_plot_r2<W: Write>(
    w: W,
    alerts: &[Alert],
    trace: &[TrafficSample],
    n_max: u32,
) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["alert_id", "ts", "r2", "verdict"])?;
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else {
        out.flush()?;
        return Ok(());
    };
    for a in alerts {
        let lo = (a.onset_ts - first.ts).max(0) as usize;
        let hi = (a.end_ts(last.ts) - first.ts).min(last.ts - first.ts) as usize;
        for s in trace.get(lo..=hi).unwrap_or_default() {
            out.write_record([
                a.alert_id.to_string(),
                s.ts.to_string(),
                format!("{:.6}", compute_r2(s.n_bue, n_max)),
                a.verdict.as_str().to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
