use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::config::{Format, Mode, PrecisionArg};
use crate::Result;

/// Bumped whenever a column is added, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// One benchmark run. Flat so the CSV and JSON forms carry the same fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub tool_version: String,
    // Configuration echo.
    pub qubits: usize,
    pub layers: usize,
    pub batch: usize,
    pub mode: Mode,
    pub block: Option<usize>,
    pub precision: PrecisionArg,
    pub seed: u64,
    pub observable: String,
    pub reps: usize,
    pub warmup: usize,
    pub threads: usize,
    pub count_only: bool,
    // Circuit shape.
    pub gates: usize,
    pub params: usize,
    pub fused_ops: usize,
    // Timing; absent for count-only runs.
    pub mean_seconds: Option<f64>,
    pub stddev_seconds: Option<f64>,
    pub samples_per_sec: Option<f64>,
    // Exact counters for one gradient evaluation.
    pub forward_traversals: u64,
    pub backward_traversals: u64,
    pub observable_traversals: u64,
    pub total_traversals: u64,
    pub peak_units: f64,
    pub peak_bytes: u64,
    pub state_bytes: u64,
    pub loss: Option<f64>,
    pub gradient_checksum: Option<f64>,
}

impl BenchReport {
    /// Copy with the wall-clock fields cleared, for comparing runs.
    pub fn without_timing(&self) -> Self {
        Self {
            mean_seconds: None,
            stddev_seconds: None,
            samples_per_sec: None,
            ..self.clone()
        }
    }
}

pub fn write_reports<W: Write>(reports: &[BenchReport], format: Format, mut w: W) -> Result<()> {
    match format {
        Format::Json => {
            if let [one] = reports {
                serde_json::to_writer_pretty(&mut w, one)?;
            } else {
                serde_json::to_writer_pretty(&mut w, reports)?;
            }
            writeln!(w)?;
        }
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(w);
            for r in reports {
                csv.serialize(r)?;
            }
            csv.flush()?;
        }
    }
    Ok(())
}

/// Parses what [`write_reports`] emitted.
pub fn read_reports<R: Read>(format: Format, mut r: R) -> Result<Vec<BenchReport>> {
    match format {
        Format::Json => {
            let value: serde_json::Value = serde_json::from_reader(&mut r)?;
            Ok(if value.is_array() {
                serde_json::from_value(value)?
            } else {
                vec![serde_json::from_value(value)?]
            })
        }
        Format::Csv => csv::Reader::from_reader(r)
            .deserialize()
            .map(|row| row.map_err(Into::into))
            .collect(),
    }
}
