//! Scenario files, parameter sweeps over replicated simulations, aggregation
//! with confidence intervals, CSV output and analytic-vs-simulation reports.

mod aggregate;
mod compare;
mod config;
mod csv_out;
mod sweep;

pub use aggregate::{aggregate, mean_ci, LocationSummary, MeanCi, SimSummary};
pub use compare::{compare, Comparison, Gap, Metric, Tolerance, ToleranceProfile};
pub use config::{
    load_config, load_config_file, Axis, ConfigKeys, ConfigValue, Document, SweepPoint, SweepSpec,
    DEFAULT_MAX_POINTS, SCENARIO_KEYS,
};
pub use csv_out::{emit_csv, emit_csv_file, emit_locations_csv, emit_locations_file, CSV_COLUMNS};
pub use sweep::{analytic_prediction, run_sweep, AggregateResult, AnalyticPoint, Prediction};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("invalid value for {key}: {reason}")]
    InvalidValue { key: String, reason: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Sim(#[from] crate::simcore::SimError),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}
