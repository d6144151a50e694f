//! Scenario configuration, run logs, closed-loop and replay execution,
//! metrics and parameter sweeps.

mod metrics;
mod replay;
mod run;
pub mod runlog;
mod scenario;
mod sweep;

pub use metrics::{compute_report, ErrorBin, MetricsReport, TracePoint};
pub use replay::{replay, ReplayOptions, ReplayOutput};
pub use run::{run_scenario, RunOutput, Termination};
pub use runlog::{Event, EventKind, Record, RecordSink, RunLog};
pub use scenario::{
    DriveMode, InitSpec, MapSource, PreparedScenario, RunSpec, Scenario, SensorSpec, SCENARIO_VERSION,
};
pub use sweep::{apply_override, run_sweep, Axis, SweepCell, SweepSpec, SweepTable};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },
    #[error("unsupported replay: {0}")]
    UnsupportedReplay(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl HarnessError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { field: field.into(), message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.display().to_string(), source }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config { .. } => 1,
            HarnessError::Runtime(_) => 2,
            HarnessError::Io { .. } | HarnessError::Parse { .. } | HarnessError::UnsupportedReplay(_) => 3,
        }
    }
}
