use std::time::Instant;

use qfuse::checkpoint::{count_checkpointed, count_checkpointed_naive, divisors};
use qfuse::{
    build_hea, fuse_circuit, run_checkpointed, run_checkpointed_naive, BatchedState, Circuit, Engine, FusedCircuit,
    FusionPolicy, LedgerMode, PauliString, Real, Traversals,
};

use crate::config::{BenchConfig, Mode, PrecisionArg};
use crate::report::{BenchReport, SCHEMA_VERSION};
use crate::{CliError, Result};

/// Counters of one gradient evaluation.
#[derive(Debug, Clone, PartialEq)]
struct Evaluation {
    traversals: Traversals,
    peak_half_units: u64,
    loss: Option<f64>,
    checksum: Option<f64>,
}

struct Workload {
    circuit: Circuit,
    fused: FusedCircuit,
    pauli: PauliString,
}

impl Workload {
    fn build(config: &BenchConfig) -> Result<Self> {
        let circuit = build_hea(config.qubits, config.layers, config.seed)?;
        let fused = fuse_circuit(&circuit, FusionPolicy::default())?;
        let pauli = PauliString::parse_for(&config.observable_label(), config.qubits)?;
        Ok(Self { circuit, fused, pauli })
    }
}

fn ledger_mode(mode: Mode) -> LedgerMode {
    match mode {
        Mode::FusedMemSave => LedgerMode::MemSave,
        _ => LedgerMode::Full,
    }
}

/// Counters derived from the circuit structure alone.
fn count(config: &BenchConfig, w: &Workload) -> Result<Evaluation> {
    let ops = match config.mode {
        Mode::Naive => w.circuit.gates().len() as u64,
        _ => w.fused.ops().len() as u64,
    };
    let recompute = if config.block.is_some() { ops } else { 0 };
    let peak_half_units = match (config.mode, config.block) {
        (Mode::Naive, None) => 2 * w.circuit.gates().len() as u64,
        (Mode::Naive, Some(b)) => count_checkpointed_naive(&w.circuit, b)?.peak_half_units(),
        (mode, None) => w.fused.variational_count() as u64 * ledger_mode(mode).entry_half_units(),
        (mode, Some(b)) => count_checkpointed(&w.fused, b, ledger_mode(mode))?.peak_half_units(),
    };
    Ok(Evaluation {
        traversals: Traversals {
            forward: ops + recompute,
            backward: ops,
            observable: 2,
        },
        peak_half_units,
        loss: None,
        checksum: None,
    })
}

fn evaluate<F: Real>(engine: &mut Engine, config: &BenchConfig, w: &Workload, state: &BatchedState<F>) -> Result<Evaluation> {
    let theta = w.circuit.theta();
    let (loss, gradient, traversals, peak_half_units) = match (config.mode, config.block) {
        (Mode::Naive, None) => {
            let r = engine.naive_gradient(&w.circuit, state, theta, &w.pauli)?;
            (r.loss, r.gradient, r.traversals, r.ledger_half_units)
        }
        (Mode::Naive, Some(b)) => {
            let r = run_checkpointed_naive(engine, &w.circuit, state, theta, &w.pauli, b)?;
            (r.loss, r.gradient, r.traversals, r.accountant.peak_half_units())
        }
        (mode, None) => {
            let r = engine.gradient(&w.fused, state, theta, &w.pauli, ledger_mode(mode))?;
            (r.loss, r.gradient, r.traversals, r.ledger_half_units)
        }
        (mode, Some(b)) => {
            let r = run_checkpointed(engine, &w.fused, state, theta, &w.pauli, b, ledger_mode(mode))?;
            (r.loss, r.gradient, r.traversals, r.accountant.peak_half_units())
        }
    };
    Ok(Evaluation {
        traversals,
        peak_half_units,
        loss: Some(loss),
        checksum: Some(gradient.checksum()),
    })
}

struct Timing {
    mean: f64,
    stddev: f64,
}

fn timed<F: Real>(config: &BenchConfig, w: &Workload, engine: &mut Engine) -> Result<(Evaluation, Timing)> {
    // Parameters come from `seed`, input states from the next stream.
    let state = BatchedState::<F>::random_with_limit(config.qubits, config.batch, config.seed.wrapping_add(1), config.max_bytes)?;
    for _ in 0..config.warmup {
        evaluate(engine, config, w, &state)?;
    }
    let mut times = Vec::with_capacity(config.reps);
    let mut last = None;
    for _ in 0..config.reps {
        let start = Instant::now();
        let eval = evaluate(engine, config, w, &state)?;
        times.push(start.elapsed().as_secs_f64());
        if let Some(prev) = &last {
            debug_assert_eq!(prev, &eval, "repeated evaluations must agree");
        }
        last = Some(eval);
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let stddev = if times.len() > 1 {
        (times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (times.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok((last.expect("reps >= 1"), Timing { mean, stddev }))
}

/// Builds the workload, times its gradient after `warmup` untimed runs and
/// reports exact counters from the last run.
pub fn run_bench(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let w = Workload::build(config)?;
    let structural = count(config, &w)?;
    let mut engine = Engine::with_threads(config.threads).with_alloc_limit(config.max_bytes);
    let (eval, timing) = if config.count_only {
        (structural, None)
    } else {
        config.check_footprint(structural.peak_half_units as f64 / 2.0)?;
        let (eval, timing) = match config.precision {
            PrecisionArg::Single => timed::<f32>(config, &w, &mut engine)?,
            PrecisionArg::Double => timed::<f64>(config, &w, &mut engine)?,
        };
        (eval, Some(timing))
    };
    let sv_bytes = u64::try_from(config.sv_bytes()).map_err(|_| CliError::Config("state size overflows u64".into()))?;
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        qubits: config.qubits,
        layers: config.layers,
        batch: config.batch,
        mode: config.mode,
        block: config.block,
        precision: config.precision,
        seed: config.seed,
        observable: config.observable_label(),
        reps: config.reps,
        warmup: config.warmup,
        threads: engine.threads(),
        count_only: config.count_only,
        gates: w.circuit.gates().len(),
        params: w.circuit.n_params(),
        fused_ops: w.fused.ops().len(),
        mean_seconds: timing.as_ref().map(|t| t.mean),
        stddev_seconds: timing.as_ref().map(|t| t.stddev),
        samples_per_sec: timing.as_ref().map(|t| config.batch as f64 / t.mean),
        forward_traversals: eval.traversals.forward,
        backward_traversals: eval.traversals.backward,
        observable_traversals: eval.traversals.observable,
        total_traversals: eval.traversals.total(),
        peak_units: eval.peak_half_units as f64 / 2.0,
        peak_bytes: eval.peak_half_units * sv_bytes / 2,
        state_bytes: sv_bytes,
        loss: eval.loss,
        gradient_checksum: eval.checksum,
    })
}

/// One checkpointed run per block size; an empty list means every divisor
/// of the layer count.
pub fn scan_blocks(config: &BenchConfig, blocks: &[usize]) -> Result<Vec<BenchReport>> {
    let blocks = if blocks.is_empty() {
        divisors(config.layers)
    } else {
        blocks.to_vec()
    };
    let configs: Vec<BenchConfig> = blocks
        .iter()
        .map(|&b| BenchConfig {
            block: Some(b),
            ..config.clone()
        })
        .collect();
    // Validate every entry before running any.
    for c in &configs {
        c.validate()?;
    }
    configs.iter().map(run_bench).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: Mode) -> BenchConfig {
        BenchConfig {
            qubits: 6,
            layers: 4,
            batch: 2,
            mode,
            precision: PrecisionArg::Double,
            reps: 1,
            warmup: 0,
            ..BenchConfig::default()
        }
    }

    #[test]
    fn counting_agrees_with_real_runs() {
        for mode in [Mode::Naive, Mode::Fused, Mode::FusedMemSave] {
            for block in [None, Some(1), Some(2), Some(4)] {
                let c = BenchConfig { block, ..cfg(mode) };
                let real = run_bench(&c).unwrap();
                let counted = run_bench(&BenchConfig { count_only: true, ..c }).unwrap();
                assert_eq!(real.peak_units, counted.peak_units, "{mode:?} {block:?}");
                assert_eq!(real.total_traversals, counted.total_traversals, "{mode:?} {block:?}");
                assert_eq!(real.forward_traversals, counted.forward_traversals, "{mode:?} {block:?}");
            }
        }
    }

    #[test]
    fn zero_reps_is_a_config_error() {
        let err = run_bench(&BenchConfig { reps: 0, ..cfg(Mode::Fused) }).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn oversized_workload_is_a_capacity_error() {
        let c = BenchConfig {
            qubits: 30,
            max_bytes: 1 << 30,
            ..cfg(Mode::Naive)
        };
        assert_eq!(run_bench(&c).unwrap_err().exit_code(), 3);
    }
}
