//! Benchmark records and their CSV/JSON renderings.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::decode::DecodeMode;

use super::BenchError;

pub const CSV_HEADER: [&str; 9] = [
    "scenario_id",
    "mode",
    "wall_time_median_s",
    "tokens_generated",
    "tokens_per_second",
    "acceptance_rate",
    "target_calls",
    "draft_calls",
    "speedup",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub scenario_id: String,
    pub mode: DecodeMode,
    #[serde(rename = "wall_time_median_s")]
    pub wall_time_median: f64,
    pub tokens_generated: usize,
    pub tokens_per_second: f64,
    pub acceptance_rate: Option<f64>,
    pub target_calls: usize,
    pub draft_calls: usize,
    #[serde(rename = "speedup")]
    pub speedup_vs_autoregressive: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(BenchError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        })
    }
}

/// Formats like C's `%.{sig}g`: `sig` significant digits, trailing zeros
/// trimmed, scientific notation outside `[1e-4, 10^sig)`.
pub fn format_significant(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let sig = sig.max(1);
    // `{:e}` rounds the mantissa first, so the exponent already reflects
    // carries such as 9.999995 -> 1.00000e1.
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn real(x: f64) -> String {
    format_significant(x, 6)
}

pub fn emit_report(records: &[BenchRecord], format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => to_csv(records),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(records).expect("records serialize");
            s.push('\n');
            s
        }
    }
}

fn to_csv(records: &[BenchRecord]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.scenario_id.clone(),
            r.mode.to_string(),
            real(r.wall_time_median),
            r.tokens_generated.to_string(),
            real(r.tokens_per_second),
            r.acceptance_rate.map(real).unwrap_or_default(),
            r.target_calls.to_string(),
            r.draft_calls.to_string(),
            r.speedup_vs_autoregressive.map(real).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 fields")
}

pub fn parse_csv_report(text: &str) -> Result<Vec<BenchRecord>, BenchError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| BenchError::Parse(e.to_string()))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(BenchError::Parse(format!("unexpected header {header:?}")));
    }
    let parse_err = |field: &str, v: &str| BenchError::Parse(format!("bad {field}: {v:?}"));
    let num = |field: &str, v: &str| v.parse::<f64>().map_err(|_| parse_err(field, v));
    let count = |field: &str, v: &str| v.parse::<usize>().map_err(|_| parse_err(field, v));
    let opt = |field: &str, v: &str| {
        if v.is_empty() {
            Ok(None)
        } else {
            num(field, v).map(Some)
        }
    };
    rdr.records()
        .map(|row| {
            let row = row.map_err(|e| BenchError::Parse(e.to_string()))?;
            let f = |i: usize| row.get(i).unwrap_or_default();
            Ok(BenchRecord {
                scenario_id: f(0).to_string(),
                mode: f(1).parse().map_err(BenchError::Parse)?,
                wall_time_median: num(CSV_HEADER[2], f(2))?,
                tokens_generated: count(CSV_HEADER[3], f(3))?,
                tokens_per_second: num(CSV_HEADER[4], f(4))?,
                acceptance_rate: opt(CSV_HEADER[5], f(5))?,
                target_calls: count(CSV_HEADER[6], f(6))?,
                draft_calls: count(CSV_HEADER[7], f(7))?,
                speedup_vs_autoregressive: opt(CSV_HEADER[8], f(8))?,
            })
        })
        .collect()
}

pub fn parse_json_report(text: &str) -> Result<Vec<BenchRecord>, BenchError> {
    serde_json::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))
}

/// Human-readable blocks in the style of the decode transcripts:
/// a banner, `Time = <t>s` and the measured rates, plus the speedup line.
pub fn format_summary(records: &[BenchRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let banner = r.mode.banner();
        out.push_str(&format!("[{}] {banner}\n", r.scenario_id));
        out.push_str(&"-".repeat(banner.len()));
        out.push('\n');
        out.push_str(&format!("Time = {:.2}s\n", r.wall_time_median));
        out.push_str(&format!("Tokens/s = {:.2}\n", r.tokens_per_second));
        if let Some(a) = r.acceptance_rate {
            out.push_str(&format!("Acceptance = {a:.3}\n"));
        }
        if let Some(s) = r.speedup_vs_autoregressive {
            out.push_str(&format!("Speedup = {s:.2}x\n"));
        }
        out.push('\n');
    }
    out
}
