use clap::{Args, ValueEnum};
use qfuse::statevec::{check_capacity, state_bytes, DEFAULT_ALLOC_LIMIT, MAX_QUBITS};
use qfuse::{PauliString, Precision};
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One traversal per gate, every gate input stored.
    Naive,
    /// Fused blocks, full-precision ledger.
    Fused,
    /// Fused blocks, narrowed ledger.
    #[value(name = "fused_mem_save")]
    FusedMemSave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionArg {
    Single,
    Double,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Single => Precision::Single,
            PrecisionArg::Double => Precision::Double,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct BenchConfig {
    #[arg(long, default_value_t = 10)]
    pub qubits: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = Mode::Fused)]
    pub mode: Mode,
    /// Checkpoint block size in layers; must divide --layers.
    #[arg(long)]
    pub block: Option<usize>,
    #[arg(long, value_enum, default_value_t = PrecisionArg::Single)]
    pub precision: PrecisionArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pauli label, leftmost character on the highest qubit. Defaults to
    /// IXYZ repeated to the register width.
    #[arg(long)]
    pub observable: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Evaluate traversal counts and stored-vector units from the circuit
    /// structure without allocating amplitudes.
    #[arg(long)]
    pub count_only: bool,
    /// Refuse workloads whose estimated footprint exceeds this many bytes.
    #[arg(long, default_value_t = DEFAULT_ALLOC_LIMIT)]
    pub max_bytes: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            qubits: 10,
            layers: 1,
            batch: 1,
            mode: Mode::Fused,
            block: None,
            precision: PrecisionArg::Single,
            seed: 0,
            observable: None,
            reps: 5,
            warmup: 3,
            threads: None,
            count_only: false,
            max_bytes: DEFAULT_ALLOC_LIMIT,
        }
    }
}

impl BenchConfig {
    pub fn observable_label(&self) -> String {
        self.observable
            .clone()
            .unwrap_or_else(|| PauliString::repeating_ixyz_label(self.qubits))
    }

    /// Checks everything that does not need amplitudes.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.qubits == 0 || self.qubits > MAX_QUBITS {
            return bad(format!("--qubits must be in 1..={MAX_QUBITS}"));
        }
        if self.layers == 0 {
            return bad("--layers must be positive".into());
        }
        if self.batch == 0 {
            return bad("--batch must be positive".into());
        }
        if self.reps == 0 {
            return bad("--reps must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("--threads must be positive".into());
        }
        if let Some(b) = self.block {
            if b == 0 || self.layers % b != 0 {
                return bad(format!("--block {b} does not divide --layers {}", self.layers));
            }
        }
        PauliString::parse_for(&self.observable_label(), self.qubits).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Bytes of one batched state vector.
    pub fn sv_bytes(&self) -> u128 {
        state_bytes(self.qubits, self.batch, self.precision.into())
    }

    /// Rejects the run before allocating if `peak_units` stored vectors plus
    /// three working buffers would exceed `--max-bytes`.
    pub fn check_footprint(&self, peak_units: f64) -> Result<()> {
        let total = (peak_units + 3.0) * self.sv_bytes() as f64;
        check_capacity("benchmark working set", total.ceil() as u128, self.max_bytes)?;
        Ok(())
    }
}
