//! Benchmark harness: builds hardware-efficient-ansatz workloads, runs the
//! per-gate, fused and checkpointed gradient modes, and reports timings,
//! traversal counts and stored-vector units as CSV or JSON.

pub mod config;
pub mod report;
pub mod run;

pub use config::{BenchConfig, Format, Mode, PrecisionArg};
pub use report::{read_reports, write_reports, BenchReport, SCHEMA_VERSION};
pub use run::{run_bench, scan_blocks};

use qfuse::SimError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Sim(#[from] SimError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for configuration errors, 3 for capacity errors, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Sim(SimError::Capacity { .. }) => 3,
            CliError::Sim(
                SimError::InvalidArgument(_)
                | SimError::Divisibility { .. }
                | SimError::QubitOutOfRange { .. }
                | SimError::DimensionMismatch { .. }
                | SimError::Parse { .. },
            ) => 2,
            _ => 1,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
