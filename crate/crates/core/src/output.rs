//! CSV/JSON persistence shared by single runs and sweeps.
//!
//! Floats are written with 9 significant digits (`%.9g` style) and missing
//! values as empty fields.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::StepRecord;
use crate::error::{Error, Result};
use crate::metrics::{GroupRateSeries, ScoreHistogram};

pub const SIGNIFICANT_DIGITS: usize = 9;

/// Formats `x` like C's `%.9g`.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= SIGNIFICANT_DIGITS as i32 {
        let mantissa = trim_fraction(mantissa);
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim_fraction(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

fn parse_opt(field: &str) -> std::result::Result<Option<f64>, std::num::ParseFloatError> {
    if field.is_empty() {
        Ok(None)
    } else {
        field.parse().map(Some)
    }
}

pub const TRACE_HEADER: [&str; 11] = [
    "t",
    "threshold",
    "prev_threshold",
    "rr",
    "pop_size",
    "n_winners",
    "n_acted",
    "n_candidates",
    "n_new",
    "stationarity_ratio",
    "mean_score",
];

/// One line of a per-run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub threshold: Option<f64>,
    pub prev_threshold: Option<f64>,
    pub rr: Option<f64>,
    pub pop_size: usize,
    pub n_winners: usize,
    pub n_acted: usize,
    pub n_candidates: usize,
    pub n_new: usize,
    pub stationarity_ratio: Option<f64>,
    pub mean_score: Option<f64>,
}

impl From<&StepRecord> for TraceRow {
    fn from(r: &StepRecord) -> Self {
        TraceRow {
            t: r.t,
            threshold: r.threshold,
            prev_threshold: r.prev_threshold,
            rr: r.rr,
            pop_size: r.pop_size,
            n_winners: r.winner_ids.len(),
            n_acted: r.n_acted,
            n_candidates: r.candidate_ids.len(),
            n_new: r.n_new,
            stationarity_ratio: r.stationarity_ratio,
            mean_score: r.mean_score,
        }
    }
}

impl TraceRow {
    fn fields(&self) -> [String; 11] {
        [
            self.t.to_string(),
            fmt_opt(self.threshold),
            fmt_opt(self.prev_threshold),
            fmt_opt(self.rr),
            self.pop_size.to_string(),
            self.n_winners.to_string(),
            self.n_acted.to_string(),
            self.n_candidates.to_string(),
            self.n_new.to_string(),
            fmt_opt(self.stationarity_ratio),
            fmt_opt(self.mean_score),
        ]
    }

    fn parse(record: &csv::StringRecord) -> std::result::Result<Self, String> {
        let get = |i: usize| record.get(i).ok_or_else(|| format!("missing column {}", TRACE_HEADER[i]));
        let int = |i: usize| -> std::result::Result<usize, String> {
            get(i)?.parse().map_err(|e| format!("{}: {e}", TRACE_HEADER[i]))
        };
        let float = |i: usize| -> std::result::Result<Option<f64>, String> {
            parse_opt(get(i)?).map_err(|e| format!("{}: {e}", TRACE_HEADER[i]))
        };
        Ok(TraceRow {
            t: int(0)?,
            threshold: float(1)?,
            prev_threshold: float(2)?,
            rr: float(3)?,
            pop_size: int(4)?,
            n_winners: int(5)?,
            n_acted: int(6)?,
            n_candidates: int(7)?,
            n_new: int(8)?,
            stationarity_ratio: float(9)?,
            mean_score: float(10)?,
        })
    }
}

pub fn trace_rows(records: &[StepRecord]) -> Vec<TraceRow> {
    records.iter().map(TraceRow::from).collect()
}

pub fn trace_csv_bytes(rows: &[TraceRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).expect("in-memory write");
    for row in rows {
        w.write_record(row.fields()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_bytes(path, &trace_csv_bytes(rows))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(Error::Metric(format!(
            "{}: unexpected trace header `{}`",
            path.display(),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::csv(path, e))?;
            TraceRow::parse(&rec).map_err(|msg| Error::Metric(format!("{}: {msg}", path.display())))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

/// `groups.csv`: one `group,t,rate` row per group and step.
pub fn groups_csv_bytes(series: &GroupRateSeries) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "t", "rate"]).expect("in-memory write");
    for (label, rates) in series.labels.iter().zip(&series.rates) {
        for (t, rate) in rates.iter().enumerate() {
            w.write_record([label.clone(), t.to_string(), fmt_sig(*rate)])
                .expect("in-memory write");
        }
    }
    w.into_inner().expect("in-memory flush")
}

/// `hist_t{t}.csv`: `bin_lo,bin_hi,count`; header only for an empty population.
pub fn histogram_csv_bytes(hist: &ScoreHistogram) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin_lo", "bin_hi", "count"]).expect("in-memory write");
    for (bin, count) in hist.counts.iter().enumerate() {
        let (lo, hi) = hist.bin_edges(bin);
        w.write_record([fmt_sig(lo), fmt_sig(hi), count.to_string()])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
