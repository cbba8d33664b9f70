//! Speculative-vs-autoregressive measurement: the analytic cost model,
//! scenario execution with synthetic per-forward delays, and reports.

mod cost;
mod report;
mod scenario;

pub use cost::{expected_speedup, expected_tokens_per_cycle, CostModelParams};
pub use report::{
    emit_report, format_significant, format_summary, parse_csv_report, parse_json_report,
    BenchRecord, ReportFormat, CSV_HEADER,
};
pub use scenario::{
    build_records, load_scenario_file, measure, parse_scenarios, read_scenario_file, run_scenario,
    Delayed, ModeMeasurement, Scenario, ScenarioSpec, DEFAULT_DRAFT_DELAY, DEFAULT_TARGET_DELAY,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::decode::DecodeError;
use crate::model::LoadError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown report format {0:?} (expected csv or json)")]
    UnknownFormat(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("scenario {scenario}: {source}")]
    Generation {
        scenario: String,
        #[source]
        source: DecodeError,
    },
}
