//! Block-wise gradient checkpointing over circuit layers and the closed-form
//! stored-vector model it is checked against.
//!
//! The forward pass keeps only the input state of each checkpoint block of
//! `b` layers. The backward pass visits blocks last to first: it reruns the
//! block forward from its stored input while recording a ledger, runs the
//! block backward, then frees both. Peak storage is therefore
//! `d/b` checkpoint inputs plus one block's ledger.

use std::ops::Range;

use crate::circuit::{Circuit, PauliString};
use crate::engine::{
    check_circuit, check_naive, check_pauli, sum_ordered, AdjointState, Engine, GradientVector, LedgerMode, NaiveTape, StateLedger,
    Traversals,
};
use crate::error::{invalid, Result, SimError};
use crate::fusion::FusedCircuit;
use crate::precision::Real;
use crate::statevec::BatchedState;

/// `d` layers split into blocks of `b` consecutive layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointPlan {
    layers: usize,
    block: usize,
}

impl CheckpointPlan {
    pub fn new(layers: usize, block: usize) -> Result<Self> {
        if block == 0 || layers == 0 || layers % block != 0 {
            return Err(SimError::Divisibility { block, layers });
        }
        Ok(Self { layers, block })
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn block(&self) -> usize {
        self.block
    }

    pub fn n_blocks(&self) -> usize {
        self.layers / self.block
    }

    pub fn block_layers(&self, k: usize) -> Range<usize> {
        k * self.block..(k + 1) * self.block
    }
}

/// Stored state-vector accounting in half units (a narrowed ledger entry is
/// one half unit, a full entry or checkpoint input two). Working buffers are
/// not counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MemoryAccountant {
    current_half: u64,
    peak_half: u64,
    /// Bytes of one full-precision batched state vector.
    sv_bytes: u64,
}

impl MemoryAccountant {
    pub fn new(sv_bytes: u64) -> Self {
        Self {
            sv_bytes,
            ..Self::default()
        }
    }

    pub fn add(&mut self, half_units: u64) {
        self.current_half += half_units;
        self.peak_half = self.peak_half.max(self.current_half);
    }

    pub fn remove(&mut self, half_units: u64) {
        debug_assert!(half_units <= self.current_half);
        self.current_half -= half_units;
    }

    pub fn current_half_units(&self) -> u64 {
        self.current_half
    }

    pub fn peak_half_units(&self) -> u64 {
        self.peak_half
    }

    pub fn current_units(&self) -> f64 {
        self.current_half as f64 / 2.0
    }

    pub fn peak_units(&self) -> f64 {
        self.peak_half as f64 / 2.0
    }

    pub fn sv_bytes(&self) -> u64 {
        self.sv_bytes
    }

    pub fn peak_bytes(&self) -> u64 {
        self.peak_half * self.sv_bytes / 2
    }
}

/// A layered computation that can run the checkpoint schedule.
pub trait SegmentExecutor {
    type State;
    type Tape;

    fn n_layers(&self) -> usize;
    fn n_params(&self) -> usize;
    fn sv_bytes(&self) -> u64;

    /// Runs `layers` from `input`; with `record` also returns what the
    /// backward pass over those layers needs.
    fn forward(&mut self, layers: Range<usize>, input: &Self::State, record: bool) -> Result<(Self::State, Option<Self::Tape>)>;
    fn tape_half_units(&self, tape: &Self::Tape) -> u64;
    /// Owned copy of the initial state, stored as the first checkpoint.
    fn snapshot(&mut self, state: &Self::State) -> Result<Self::State>;
    /// Per-sample expectation values and the seeded adjoint.
    fn observe(&mut self, last: &Self::State) -> Result<(Vec<f64>, Self::State)>;
    fn backward(&mut self, layers: Range<usize>, tape: Self::Tape, adjoint: Self::State, grad: &mut [f64]) -> Result<Self::State>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOutcome {
    pub per_sample: Vec<f64>,
    pub gradient: GradientVector,
    pub accountant: MemoryAccountant,
}

/// Runs the checkpoint schedule on any executor.
pub fn run_schedule<E: SegmentExecutor>(exec: &mut E, state0: &E::State, block: usize) -> Result<ScheduleOutcome> {
    let plan = CheckpointPlan::new(exec.n_layers(), block)?;
    let mut acc = MemoryAccountant::new(exec.sv_bytes());
    let mut checkpoints: Vec<E::State> = Vec::with_capacity(plan.n_blocks());
    let mut cur: Option<E::State> = None;

    for k in 0..plan.n_blocks() {
        let input = match cur.take() {
            Some(s) => s,
            None => exec.snapshot(state0)?,
        };
        checkpoints.push(input);
        acc.add(2);
        let (out, _) = exec.forward(plan.block_layers(k), checkpoints.last().unwrap(), false)?;
        cur = Some(out);
    }
    let last = cur.expect("at least one block");
    let (per_sample, mut adjoint) = exec.observe(&last)?;
    drop(last);

    let mut grad = vec![0.0; exec.n_params()];
    for k in (0..plan.n_blocks()).rev() {
        let layers = plan.block_layers(k);
        let (_, tape) = exec.forward(layers.clone(), &checkpoints[k], true)?;
        let tape = tape.expect("recording forward returns a tape");
        let units = exec.tape_half_units(&tape);
        acc.add(units);
        adjoint = exec.backward(layers, tape, adjoint, &mut grad)?;
        acc.remove(units);
        checkpoints.pop();
        acc.remove(2);
    }
    Ok(ScheduleOutcome {
        per_sample,
        gradient: GradientVector(grad),
        accountant: acc,
    })
}

/// Fused-engine segments: recorded ledgers hold variational block outputs.
pub struct FusedSegments<'a> {
    pub engine: &'a mut Engine,
    pub circuit: &'a FusedCircuit,
    pub theta: &'a [f64],
    pub pauli: &'a PauliString,
    pub mode: LedgerMode,
    pub sv_bytes: u64,
}

/// Binds a precision to a segment executor.
pub struct Typed<'a, 'b, F: Real, S> {
    pub inner: &'b mut S,
    _marker: std::marker::PhantomData<&'a F>,
}

impl<'a, 'b, F: Real, S> Typed<'a, 'b, F, S> {
    pub fn new(inner: &'b mut S) -> Self {
        Self {
            inner,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<F: Real> SegmentExecutor for Typed<'_, '_, F, FusedSegments<'_>> {
    type State = BatchedState<F>;
    type Tape = StateLedger<F>;

    fn n_layers(&self) -> usize {
        self.inner.circuit.n_layers()
    }
    fn n_params(&self) -> usize {
        self.inner.circuit.n_params()
    }
    fn sv_bytes(&self) -> u64 {
        self.inner.sv_bytes
    }
    fn forward(&mut self, layers: Range<usize>, input: &BatchedState<F>, record: bool) -> Result<(BatchedState<F>, Option<StateLedger<F>>)> {
        let s = &mut *self.inner;
        let ops = s.circuit.layer_ops(layers);
        s.engine.forward_ops(s.circuit, ops, input, s.theta, s.mode, record)
    }
    fn tape_half_units(&self, tape: &StateLedger<F>) -> u64 {
        tape.half_units()
    }
    fn snapshot(&mut self, state: &BatchedState<F>) -> Result<BatchedState<F>> {
        Ok(state.clone())
    }
    fn observe(&mut self, last: &BatchedState<F>) -> Result<(Vec<f64>, AdjointState<F>)> {
        self.inner.engine.observe(last, self.inner.pauli)
    }
    fn backward(&mut self, layers: Range<usize>, tape: StateLedger<F>, adjoint: AdjointState<F>, grad: &mut [f64]) -> Result<AdjointState<F>> {
        let s = &mut *self.inner;
        let ops = s.circuit.layer_ops(layers);
        s.engine.backward_ops(s.circuit, ops, &tape, adjoint, s.theta, grad)
    }
}

/// Store-everything baseline segments: recorded tapes hold every gate input.
pub struct NaiveSegments<'a> {
    pub engine: &'a mut Engine,
    pub circuit: &'a Circuit,
    pub theta: &'a [f64],
    pub pauli: &'a PauliString,
    pub sv_bytes: u64,
}

impl NaiveSegments<'_> {
    fn gate_range(&self, layers: Range<usize>) -> Range<usize> {
        let b = self.circuit.layer_bounds();
        if b.is_empty() {
            0..self.circuit.gates().len()
        } else {
            b[layers.start]..b[layers.end]
        }
    }
}

impl<F: Real> SegmentExecutor for Typed<'_, '_, F, NaiveSegments<'_>> {
    type State = BatchedState<F>;
    type Tape = NaiveTape<F>;

    fn n_layers(&self) -> usize {
        self.inner.circuit.n_layers()
    }
    fn n_params(&self) -> usize {
        self.inner.circuit.n_params()
    }
    fn sv_bytes(&self) -> u64 {
        self.inner.sv_bytes
    }
    fn forward(&mut self, layers: Range<usize>, input: &BatchedState<F>, record: bool) -> Result<(BatchedState<F>, Option<NaiveTape<F>>)> {
        let gates = self.inner.gate_range(layers);
        let s = &mut *self.inner;
        s.engine.naive_forward_gates(s.circuit, gates, input, s.theta, record)
    }
    fn tape_half_units(&self, tape: &NaiveTape<F>) -> u64 {
        tape.half_units()
    }
    fn snapshot(&mut self, state: &BatchedState<F>) -> Result<BatchedState<F>> {
        Ok(state.clone())
    }
    fn observe(&mut self, last: &BatchedState<F>) -> Result<(Vec<f64>, AdjointState<F>)> {
        self.inner.engine.observe(last, self.inner.pauli)
    }
    fn backward(&mut self, layers: Range<usize>, tape: NaiveTape<F>, adjoint: AdjointState<F>, grad: &mut [f64]) -> Result<AdjointState<F>> {
        let gates = self.inner.gate_range(layers);
        let s = &mut *self.inner;
        s.engine.naive_backward_gates(s.circuit, gates, &tape, adjoint, s.theta, grad)
    }
}

/// Runs the schedule without amplitudes: each layer's tape size is known
/// from the circuit structure, so peak storage can be evaluated for
/// registers far too large to simulate.
#[derive(Debug, Clone)]
pub struct CountingSegments {
    layer_half_units: Vec<u64>,
    n_params: usize,
}

impl CountingSegments {
    pub fn fused(circuit: &FusedCircuit, mode: LedgerMode) -> Self {
        let layer_half_units = (0..circuit.n_layers())
            .map(|l| {
                let ops = circuit.layer_ops(l..l + 1);
                circuit.ops()[ops].iter().filter(|o| o.is_variational()).count() as u64 * mode.entry_half_units()
            })
            .collect();
        Self {
            layer_half_units,
            n_params: circuit.n_params(),
        }
    }

    pub fn naive(circuit: &Circuit) -> Self {
        let b = circuit.layer_bounds();
        let layer_half_units = if b.is_empty() {
            vec![2 * circuit.gates().len() as u64]
        } else {
            b.windows(2).map(|w| 2 * (w[1] - w[0]) as u64).collect()
        };
        Self {
            layer_half_units,
            n_params: circuit.n_params(),
        }
    }
}

impl SegmentExecutor for CountingSegments {
    type State = ();
    type Tape = u64;

    fn n_layers(&self) -> usize {
        self.layer_half_units.len()
    }
    fn n_params(&self) -> usize {
        self.n_params
    }
    fn sv_bytes(&self) -> u64 {
        0
    }
    fn forward(&mut self, layers: Range<usize>, _: &(), record: bool) -> Result<((), Option<u64>)> {
        Ok(((), record.then(|| self.layer_half_units[layers].iter().sum())))
    }
    fn tape_half_units(&self, tape: &u64) -> u64 {
        *tape
    }
    fn snapshot(&mut self, _: &()) -> Result<()> {
        Ok(())
    }
    fn observe(&mut self, _: &()) -> Result<(Vec<f64>, ())> {
        Ok((Vec::new(), ()))
    }
    fn backward(&mut self, _: Range<usize>, _: u64, _: (), _: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointResult {
    pub loss: f64,
    pub per_sample: Vec<f64>,
    pub gradient: GradientVector,
    pub accountant: MemoryAccountant,
    pub traversals: Traversals,
}

impl CheckpointResult {
    pub fn peak_units(&self) -> f64 {
        self.accountant.peak_units()
    }

    pub fn peak_half_units(&self) -> u64 {
        self.accountant.peak_half_units()
    }
}

/// Checkpointed fused adjoint gradient with blocks of `block` layers.
pub fn run_checkpointed<F: Real>(
    engine: &mut Engine,
    circuit: &FusedCircuit,
    state0: &BatchedState<F>,
    theta: &[f64],
    pauli: &PauliString,
    block: usize,
    mode: LedgerMode,
) -> Result<CheckpointResult> {
    check_circuit(circuit, state0, theta)?;
    check_pauli(state0, pauli)?;
    let start = engine.traversals();
    let sv_bytes = state0.bytes();
    let outcome = engine.install(|e| {
        let mut seg = FusedSegments {
            engine: e,
            circuit,
            theta,
            pauli,
            mode,
            sv_bytes,
        };
        run_schedule(&mut Typed::<F, _>::new(&mut seg), state0, block)
    })?;
    Ok(finish(outcome, engine.traversals().since(start)))
}

/// Checkpointed store-everything baseline.
pub fn run_checkpointed_naive<F: Real>(
    engine: &mut Engine,
    circuit: &Circuit,
    state0: &BatchedState<F>,
    theta: &[f64],
    pauli: &PauliString,
    block: usize,
) -> Result<CheckpointResult> {
    check_naive(circuit, state0, theta)?;
    check_pauli(state0, pauli)?;
    let start = engine.traversals();
    let sv_bytes = state0.bytes();
    let outcome = engine.install(|e| {
        let mut seg = NaiveSegments {
            engine: e,
            circuit,
            theta,
            pauli,
            sv_bytes,
        };
        run_schedule(&mut Typed::<F, _>::new(&mut seg), state0, block)
    })?;
    Ok(finish(outcome, engine.traversals().since(start)))
}

fn finish(outcome: ScheduleOutcome, traversals: Traversals) -> CheckpointResult {
    CheckpointResult {
        loss: sum_ordered(&outcome.per_sample),
        per_sample: outcome.per_sample,
        gradient: outcome.gradient,
        accountant: outcome.accountant,
        traversals,
    }
}

/// Peak stored units of the fused schedule, without simulating.
pub fn count_checkpointed(circuit: &FusedCircuit, block: usize, mode: LedgerMode) -> Result<MemoryAccountant> {
    Ok(run_schedule(&mut CountingSegments::fused(circuit, mode), &(), block)?.accountant)
}

/// Peak stored units of the checkpointed baseline, without simulating.
pub fn count_checkpointed_naive(circuit: &Circuit, block: usize) -> Result<MemoryAccountant> {
    Ok(run_schedule(&mut CountingSegments::naive(circuit), &(), block)?.accountant)
}

fn check_model(b: usize, d: usize) -> Result<()> {
    CheckpointPlan::new(d, b).map(|_| ())
}

/// Store-everything baseline with checkpointing:
/// `(l_var + l_const)·b + d/b` state vectors.
pub fn model_native(b: usize, l_var: usize, l_const: usize, d: usize) -> Result<f64> {
    check_model(b, d)?;
    Ok(((l_var + l_const) * b + d / b) as f64)
}

/// Stored units per layer of the fused ledger: `⌈l_var/m⌉` block outputs,
/// each worth ½ in memory-saving mode. Equivalent to an effective fusion
/// factor `α = m` (full) or `α = 2m` (memory-saving).
pub fn fused_units_per_layer(l_var: usize, max_constituents: usize, mode: LedgerMode) -> f64 {
    let blocks = l_var.div_ceil(max_constituents) as f64;
    match mode {
        LedgerMode::Full => blocks,
        LedgerMode::MemSave => blocks / 2.0,
    }
}

/// Fused ledger with checkpointing: `⌈l_var/α⌉·b + d/b` units.
pub fn model_fused(b: usize, l_var: usize, max_constituents: usize, mode: LedgerMode, d: usize) -> Result<f64> {
    check_model(b, d)?;
    if max_constituents == 0 {
        return Err(invalid("max constituents must be positive"));
    }
    Ok(fused_units_per_layer(l_var, max_constituents, mode) * b as f64 + (d / b) as f64)
}

/// Block size minimizing `l_eff·b + d/b`: `√(d / l_eff)`.
pub fn optimal_block(units_per_layer: f64, d: usize) -> f64 {
    (d as f64 / units_per_layer).sqrt()
}

pub fn divisors(d: usize) -> Vec<usize> {
    (1..=d).filter(|b| d % b == 0).collect()
}

/// Divisor of `d` closest to `target` (the smaller one on ties).
pub fn nearest_divisor(d: usize, target: f64) -> usize {
    divisors(d)
        .into_iter()
        .min_by(|a, b| {
            let da = (*a as f64 - target).abs();
            let db = (*b as f64 - target).abs();
            da.partial_cmp(&db).unwrap().then(a.cmp(b))
        })
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::build_hea;
    use crate::fusion::{fuse_circuit, FusionPolicy};
    use crate::statevec::BatchedState;

    #[test]
    fn native_model_values() {
        assert_eq!(model_native(1, 60, 20, 100).unwrap(), 180.0);
        assert_eq!(model_native(2, 60, 20, 100).unwrap(), 210.0);
        assert_eq!(model_native(100, 60, 20, 100).unwrap(), 80.0 * 100.0 + 1.0);
        assert!(matches!(model_native(3, 60, 20, 100), Err(SimError::Divisibility { .. })));
    }

    #[test]
    fn fused_model_values() {
        assert_eq!(model_fused(4, 60, 9, LedgerMode::Full, 100).unwrap(), 53.0);
        assert_eq!(model_fused(5, 60, 9, LedgerMode::MemSave, 100).unwrap(), 37.5);
        assert_eq!(model_fused(10, 60, 9, LedgerMode::Full, 1000).unwrap(), 170.0);
    }

    #[test]
    fn optimal_block_values() {
        assert!((optimal_block(7.0, 1000) - 11.952).abs() < 1e-3);
        assert!((optimal_block(3.5, 1000) - 16.903).abs() < 1e-3);
        assert!((optimal_block(7.0, 100) - 3.7796).abs() < 1e-4);
        assert!((optimal_block(80.0, 100) - 1.118).abs() < 1e-3);
    }

    #[test]
    fn plan_requires_divisor() {
        assert!(CheckpointPlan::new(8, 3).is_err());
        assert!(CheckpointPlan::new(8, 0).is_err());
        let p = CheckpointPlan::new(8, 2).unwrap();
        assert_eq!(p.n_blocks(), 4);
        assert_eq!(p.block_layers(3), 6..8);
    }

    #[test]
    fn accountant_tracks_peak() {
        let mut a = MemoryAccountant::new(16);
        a.add(2);
        a.add(1);
        a.remove(1);
        a.add(2);
        assert_eq!(a.peak_half_units(), 4);
        assert_eq!(a.current_units(), 2.0);
        assert_eq!(a.peak_bytes(), 32);
    }

    #[test]
    fn counting_matches_model_for_twenty_qubit_shape() {
        let c = build_hea(20, 100, 0).unwrap();
        let f = fuse_circuit(&c, FusionPolicy::default()).unwrap();
        for b in divisors(100) {
            let full = count_checkpointed(&f, b, LedgerMode::Full).unwrap();
            assert_eq!(full.peak_units(), model_fused(b, 60, 9, LedgerMode::Full, 100).unwrap());
            let half = count_checkpointed(&f, b, LedgerMode::MemSave).unwrap();
            assert_eq!(half.peak_units(), model_fused(b, 60, 9, LedgerMode::MemSave, 100).unwrap());
            let native = count_checkpointed_naive(&c, b).unwrap();
            assert_eq!(native.peak_units(), model_native(b, 60, 20, 100).unwrap());
        }
    }

    #[test]
    fn nearest_divisor_picks_closest() {
        assert_eq!(nearest_divisor(16, 8f64.sqrt()), 2);
        assert_eq!(nearest_divisor(64, 32f64.sqrt()), 4);
        assert_eq!(nearest_divisor(100, 3.78), 4);
    }

    #[test]
    fn real_schedule_matches_counting_and_model() {
        let n = 8;
        let d = 12;
        let c = build_hea(n, d, 3).unwrap();
        let f = fuse_circuit(&c, FusionPolicy::default()).unwrap();
        let s = BatchedState::<f32>::random(n, 2, 1).unwrap();
        let p = PauliString::repeating_ixyz(n).unwrap();
        let mut e = Engine::new();
        let plain = e.gradient(&f, &s, c.theta(), &p, LedgerMode::Full).unwrap();
        for b in divisors(d) {
            for mode in [LedgerMode::Full, LedgerMode::MemSave] {
                let r = run_checkpointed(&mut e, &f, &s, c.theta(), &p, b, mode).unwrap();
                let counted = count_checkpointed(&f, b, mode).unwrap();
                assert_eq!(r.accountant.peak_half_units(), counted.peak_half_units());
                assert_eq!(r.peak_units(), model_fused(b, 3 * n, 9, mode, d).unwrap());
                assert_eq!(r.accountant.peak_bytes(), (r.peak_units() * s.bytes() as f64) as u64);
                assert_eq!(r.per_sample, plain.per_sample);
                if mode == LedgerMode::Full {
                    // Same kernels in the same order: bit-identical.
                    assert_eq!(r.gradient, plain.gradient);
                }
                let ops = f.ops().len() as u64;
                assert_eq!(r.traversals.forward, 2 * ops);
                assert_eq!(r.traversals.backward, ops);
                assert_eq!(r.traversals.observable, 2);
            }
            let naive = run_checkpointed_naive(&mut e, &c, &s, c.theta(), &p, b).unwrap();
            assert_eq!(naive.peak_units(), model_native(b, 3 * n, n, d).unwrap());
            assert_eq!(naive.peak_half_units(), count_checkpointed_naive(&c, b).unwrap().peak_half_units());
            assert!(crate::oracle::max_rel_diff(&naive.gradient, &plain.gradient) < 1e-5);
        }
    }

    #[test]
    fn checkpointing_rejects_non_divisors() {
        let c = build_hea(4, 6, 0).unwrap();
        let f = fuse_circuit(&c, FusionPolicy::default()).unwrap();
        let s = BatchedState::<f64>::basis(4, 1).unwrap();
        let p = PauliString::parse("ZZZZ").unwrap();
        let err = run_checkpointed(&mut Engine::new(), &f, &s, c.theta(), &p, 4, LedgerMode::Full).unwrap_err();
        assert!(matches!(err, SimError::Divisibility { block: 4, layers: 6 }));
    }
}
