//! Forward execution, matrix-free expectation values and the fused adjoint
//! backward pass.
//!
//! The forward pass applies each fused op in one traversal and keeps only
//! the outputs of variational blocks. The backward pass walks the ops in
//! reverse; for a variational block it loads the stored output and the
//! adjoint tuple by tuple and, for each constituent from last to first,
//! recomputes the constituent's input, accumulates its gradient and pulls
//! the adjoint back, all in local scratch. Nothing inside a block is ever
//! written to a shared buffer.

pub(crate) mod kernels;
mod ledger;
mod naive;

use std::ops::{AddAssign, Deref, Range};

use num_complex::Complex;

pub use ledger::{LedgerEntry, LedgerMode, StateLedger};
pub(crate) use naive::check_naive;
pub use naive::NaiveTape;

use crate::circuit::PauliString;
use crate::error::{invalid, mismatch, Result};
use crate::exec::Exec;
use crate::fusion::{compose_block_unitary, FusedCircuit, FusedCnotBlock, FusedCzBlock, FusedOp, FusedUnitaryBlock};
use crate::precision::Real;
use crate::statevec::{check_capacity, BatchedState, NarrowedState, DEFAULT_ALLOC_LIMIT};
use kernels::Rot;

/// Adjoint state `|λ⟩`; same layout as a state but not normalized.
pub type AdjointState<F> = BatchedState<F>;

/// `∂L/∂θ_j` for every parameter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradientVector(pub Vec<f64>);

impl GradientVector {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    /// Sum of all components, used as a cross-mode checksum.
    pub fn checksum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for GradientVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Full passes over the batched amplitude array, by phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Traversals {
    pub forward: u64,
    pub backward: u64,
    /// Expectation value and adjoint seeding.
    pub observable: u64,
}

impl Traversals {
    pub fn total(&self) -> u64 {
        self.forward + self.backward + self.observable
    }

    pub fn since(&self, earlier: Traversals) -> Traversals {
        Traversals {
            forward: self.forward - earlier.forward,
            backward: self.backward - earlier.backward,
            observable: self.observable - earlier.observable,
        }
    }
}

impl AddAssign for Traversals {
    fn add_assign(&mut self, rhs: Self) {
        self.forward += rhs.forward;
        self.backward += rhs.backward;
        self.observable += rhs.observable;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    /// Sum of per-sample expectation values.
    pub loss: f64,
    pub per_sample: Vec<f64>,
    pub gradient: GradientVector,
    /// Traversals spent by this call.
    pub traversals: Traversals,
    /// Ledger size at the end of the forward pass.
    pub ledger_entries: usize,
    pub ledger_half_units: u64,
}

impl GradientResult {
    pub fn ledger_units(&self) -> f64 {
        self.ledger_half_units as f64 / 2.0
    }
}

/// Execution context: thread pool, allocation limit and traversal counters.
#[derive(Debug, Clone)]
pub struct Engine {
    exec: Exec,
    alloc_limit: u64,
    traversals: Traversals,
}

impl Default for Engine {
    fn default() -> Self {
        Self::new()
    }
}

impl Engine {
    pub fn new() -> Self {
        Self::with_threads(None)
    }

    /// `None` uses the global rayon pool.
    pub fn with_threads(threads: Option<usize>) -> Self {
        Self {
            exec: Exec::new(threads),
            alloc_limit: DEFAULT_ALLOC_LIMIT,
            traversals: Traversals::default(),
        }
    }

    pub fn with_alloc_limit(mut self, bytes: u64) -> Self {
        self.alloc_limit = bytes;
        self
    }

    pub fn alloc_limit(&self) -> u64 {
        self.alloc_limit
    }

    pub fn threads(&self) -> usize {
        self.exec.threads()
    }

    pub fn traversals(&self) -> Traversals {
        self.traversals
    }

    pub fn reset_traversals(&mut self) {
        self.traversals = Traversals::default();
    }

    pub(crate) fn install<R: Send>(&mut self, f: impl FnOnce(&mut Self) -> R + Send) -> R {
        let exec = self.exec.clone();
        exec.install(|| f(self))
    }

    pub(crate) fn alloc<F: Real>(&self, like: &BatchedState<F>) -> Result<BatchedState<F>> {
        BatchedState::zeros_with_limit(like.n_qubits(), like.batch(), self.alloc_limit)
    }

    pub(crate) fn check_ledger_bytes(&self, bytes: u64) -> Result<()> {
        check_capacity("state ledger", bytes as u128, self.alloc_limit)
    }

    // ---------------------------------------------------------------------
    // Single fused ops

    /// Applies a fused rotation block out of place in one traversal.
    pub fn apply_fused_unitary<F: Real>(
        &mut self,
        state: &BatchedState<F>,
        block: &FusedUnitaryBlock,
        theta: &[f64],
    ) -> Result<BatchedState<F>> {
        check_block(state.n_qubits(), block, theta)?;
        let mut out = self.alloc(state)?;
        self.install(|e| {
            e.unitary_into(state, &mut out, None, block, theta);
        });
        Ok(out)
    }

    pub fn apply_fused_cz<F: Real>(&mut self, state: &BatchedState<F>, block: &FusedCzBlock) -> Result<BatchedState<F>> {
        check_masks(state.n_qubits(), block.masks().iter().copied())?;
        let mut out = self.alloc(state)?;
        self.install(|e| {
            kernels::apply_cz(state.amplitudes(), out.amplitudes_mut(), state.n_qubits(), block.masks());
            e.traversals.forward += 1;
        });
        Ok(out)
    }

    pub fn apply_fused_cnot<F: Real>(&mut self, state: &BatchedState<F>, block: &FusedCnotBlock) -> Result<BatchedState<F>> {
        check_masks(state.n_qubits(), block.masks().flat_map(|(c, t)| [c, t]))?;
        let mut out = self.alloc(state)?;
        self.install(|e| {
            e.cnot_into(state, &mut out, block, false);
            e.traversals.forward += 1;
        });
        Ok(out)
    }

    fn unitary_into<F: Real>(
        &mut self,
        input: &BatchedState<F>,
        out: &mut BatchedState<F>,
        narrow: Option<&mut NarrowedState<F>>,
        block: &FusedUnitaryBlock,
        theta: &[f64],
    ) {
        let m: Vec<Complex<F>> = compose_block_unitary(block, theta)
            .into_iter()
            .map(|z| Complex::new(F::of(z.re), F::of(z.im)))
            .collect();
        kernels::apply_unitary(
            input.amplitudes(),
            out.amplitudes_mut(),
            narrow.map(|n| n.components_mut()),
            input.n_qubits(),
            block.first_qubit(),
            block.width(),
            &m,
        );
        self.traversals.forward += 1;
    }

    /// `adjoint == false`: `out = G·input`; `true`: `out = G†·input`.
    fn cnot_into<F: Real>(&self, input: &BatchedState<F>, out: &mut BatchedState<F>, block: &FusedCnotBlock, adjoint: bool) {
        let forward_order: Vec<(usize, usize)> = block.masks().collect();
        let order: Vec<(usize, usize)> = if adjoint {
            forward_order
        } else {
            forward_order.into_iter().rev().collect()
        };
        kernels::gather_cnot(input.amplitudes(), out.amplitudes_mut(), input.n_qubits(), &order);
    }

    // ---------------------------------------------------------------------
    // Observable

    /// Per-sample `⟨ψ|O|ψ⟩` without materializing `O`.
    pub fn expectation<F: Real>(&mut self, state: &BatchedState<F>, pauli: &PauliString) -> Result<Vec<f64>> {
        check_pauli(state, pauli)?;
        Ok(self.install(|e| {
            e.traversals.observable += 1;
            kernels::expectation(state.amplitudes(), state.n_qubits(), pauli.x_mask(), pauli.z_mask(), pauli.y_count())
        }))
    }

    /// `|λ⟩ = 2 O |ψ⟩`.
    pub fn seed_adjoint<F: Real>(&mut self, state: &BatchedState<F>, pauli: &PauliString) -> Result<AdjointState<F>> {
        check_pauli(state, pauli)?;
        let mut out = self.alloc(state)?;
        self.install(|e| {
            e.traversals.observable += 1;
            kernels::seed_adjoint(
                state.amplitudes(),
                out.amplitudes_mut(),
                state.n_qubits(),
                pauli.x_mask(),
                pauli.z_mask(),
                pauli.y_count(),
            );
        });
        Ok(out)
    }

    // ---------------------------------------------------------------------
    // Backward

    /// Backward through one variational block given its stored output and
    /// the adjoint at its output. Returns the adjoint at the block input and
    /// one gradient contribution per constituent (in constituent order).
    pub fn backward_block<F: Real>(
        &mut self,
        psi_out: &BatchedState<F>,
        lambda_out: &AdjointState<F>,
        block: &FusedUnitaryBlock,
        theta: &[f64],
    ) -> Result<(AdjointState<F>, Vec<f64>)> {
        check_block(psi_out.n_qubits(), block, theta)?;
        psi_out.expect_shape(lambda_out)?;
        let mut lambda = lambda_out.clone();
        let grads = self.install(|e| e.backward_block_in_place(psi_out, &mut lambda, block, theta));
        Ok((lambda, grads))
    }

    fn backward_block_in_place<F: Real>(
        &mut self,
        psi_out: &BatchedState<F>,
        lambda: &mut AdjointState<F>,
        block: &FusedUnitaryBlock,
        theta: &[f64],
    ) -> Vec<f64> {
        let rots: Vec<Rot<F>> = block
            .constituents()
            .iter()
            .map(|c| Rot::new(c.axis, c.local, theta[c.param]))
            .collect();
        let partials = kernels::backward_unitary(
            psi_out.amplitudes(),
            lambda.amplitudes_mut(),
            psi_out.n_qubits(),
            block.first_qubit(),
            block.width(),
            &rots,
        );
        self.traversals.backward += 1;
        let mut grads = vec![0.0; rots.len()];
        for p in &partials {
            for (g, v) in grads.iter_mut().zip(p) {
                *g += v;
            }
        }
        grads
    }

    /// `λ ← G†λ` for a constant (CZ or CNOT) block.
    pub fn backward_constant<F: Real>(&mut self, lambda: &AdjointState<F>, op: &FusedOp) -> Result<AdjointState<F>> {
        if matches!(op, FusedOp::Unitary(_)) {
            return Err(invalid("backward_constant called with a variational block"));
        }
        let mut out = self.alloc(lambda)?;
        self.install(|e| e.constant_backward_into(lambda, &mut out, op));
        Ok(out)
    }

    fn constant_backward_into<F: Real>(&mut self, lambda: &AdjointState<F>, out: &mut AdjointState<F>, op: &FusedOp) {
        match op {
            FusedOp::Cz(b) => kernels::apply_cz(lambda.amplitudes(), out.amplitudes_mut(), lambda.n_qubits(), b.masks()),
            FusedOp::Cnot(b) => self.cnot_into(lambda, out, b, true),
            FusedOp::Unitary(_) => unreachable!("checked by caller"),
        }
        self.traversals.backward += 1;
    }

    // ---------------------------------------------------------------------
    // Whole-circuit passes

    /// Runs every op of `circuit`, storing variational block outputs.
    pub fn forward<F: Real>(
        &mut self,
        circuit: &FusedCircuit,
        state0: &BatchedState<F>,
        theta: &[f64],
        mode: LedgerMode,
    ) -> Result<(BatchedState<F>, StateLedger<F>)> {
        check_circuit(circuit, state0, theta)?;
        let all = 0..circuit.ops().len();
        self.install(|e| {
            let (out, ledger) = e.forward_ops(circuit, all, state0, theta, mode, true)?;
            Ok((out, ledger.expect("recording forward returns a ledger")))
        })
    }

    /// Forward over `ops`. With `record` the variational outputs go to a
    /// ledger; otherwise only two working buffers are used.
    pub(crate) fn forward_ops<F: Real>(
        &mut self,
        circuit: &FusedCircuit,
        ops: Range<usize>,
        state0: &BatchedState<F>,
        theta: &[f64],
        mode: LedgerMode,
        record: bool,
    ) -> Result<(BatchedState<F>, Option<StateLedger<F>>)> {
        #[derive(Clone, Copy, PartialEq)]
        enum Current {
            Input,
            Work,
            Ledger,
        }
        let mut ledger = StateLedger::new(mode);
        let mut work: Option<BatchedState<F>> = None;
        let mut spare: Option<BatchedState<F>> = None;
        let mut cur = Current::Input;

        for i in ops {
            let op = &circuit.ops()[i];
            let keep = record && op.is_variational();
            let store_full = keep && mode == LedgerMode::Full;
            let mut out = match spare.take() {
                Some(s) if !store_full => s,
                _ => self.alloc(state0)?,
            };
            let mut narrow = (keep && mode == LedgerMode::MemSave)
                .then(|| NarrowedState::zeros(state0.n_qubits(), state0.batch()));
            {
                let input = match cur {
                    Current::Input => state0,
                    Current::Work => work.as_ref().expect("work buffer"),
                    Current::Ledger => ledger.last_full().expect("full ledger entry"),
                };
                match op {
                    FusedOp::Unitary(b) => self.unitary_into(input, &mut out, narrow.as_mut(), b, theta),
                    FusedOp::Cz(b) => {
                        kernels::apply_cz(input.amplitudes(), out.amplitudes_mut(), input.n_qubits(), b.masks());
                        self.traversals.forward += 1;
                    }
                    FusedOp::Cnot(b) => {
                        self.cnot_into(input, &mut out, b, false);
                        self.traversals.forward += 1;
                    }
                }
            }
            if store_full {
                ledger.push(i, LedgerEntry::Full(out));
                if cur == Current::Work {
                    spare = work.take();
                }
                cur = Current::Ledger;
            } else {
                if let Some(nw) = narrow {
                    ledger.push(i, LedgerEntry::Narrow(nw));
                }
                let old = work.replace(out);
                if cur == Current::Work {
                    spare = old;
                }
                cur = Current::Work;
            }
            if keep {
                self.check_ledger_bytes(ledger.bytes())?;
            }
        }

        let out = match cur {
            Current::Input => state0.clone(),
            Current::Work => work.expect("work buffer"),
            Current::Ledger => ledger.last_full().expect("full ledger entry").clone(),
        };
        Ok((out, record.then_some(ledger)))
    }

    /// Backward over `ops` in reverse, consuming the adjoint at the end of
    /// the range and returning the adjoint at its start. Gradient
    /// contributions are added into `grad`.
    pub(crate) fn backward_ops<F: Real>(
        &mut self,
        circuit: &FusedCircuit,
        ops: Range<usize>,
        ledger: &StateLedger<F>,
        mut lambda: AdjointState<F>,
        theta: &[f64],
        grad: &mut [f64],
    ) -> Result<AdjointState<F>> {
        let mut widened: Option<BatchedState<F>> = None;
        let mut spare: Option<BatchedState<F>> = None;
        for i in ops.rev() {
            match &circuit.ops()[i] {
                FusedOp::Unitary(block) => {
                    let entry = ledger
                        .get(i)
                        .ok_or_else(|| invalid(format!("ledger has no entry for op {i}")))?;
                    let psi = match entry {
                        LedgerEntry::Full(s) => s,
                        LedgerEntry::Narrow(nw) => {
                            if widened.is_none() {
                                widened = Some(self.alloc(&lambda)?);
                            }
                            let w = widened.as_mut().unwrap();
                            nw.widen_into(w);
                            &*w
                        }
                    };
                    let contrib = self.backward_block_in_place(psi, &mut lambda, block, theta);
                    for (c, g) in block.constituents().iter().zip(contrib) {
                        grad[c.param] += g;
                    }
                }
                op => {
                    let mut out = match spare.take() {
                        Some(s) => s,
                        None => self.alloc(&lambda)?,
                    };
                    self.constant_backward_into(&lambda, &mut out, op);
                    spare = Some(std::mem::replace(&mut lambda, out));
                }
            }
        }
        Ok(lambda)
    }

    /// Loss `Σ_samples ⟨ψ|O|ψ⟩` and its gradient via the fused adjoint method.
    pub fn gradient<F: Real>(
        &mut self,
        circuit: &FusedCircuit,
        state0: &BatchedState<F>,
        theta: &[f64],
        pauli: &PauliString,
        mode: LedgerMode,
    ) -> Result<GradientResult> {
        check_circuit(circuit, state0, theta)?;
        check_pauli(state0, pauli)?;
        let start = self.traversals;
        self.install(|e| {
            let all = 0..circuit.ops().len();
            let (last, ledger) = e.forward_ops(circuit, all.clone(), state0, theta, mode, true)?;
            let ledger = ledger.expect("recording forward returns a ledger");
            let (per_sample, lambda) = e.observe(&last, pauli)?;
            drop(last);
            let mut grad = vec![0.0; circuit.n_params()];
            e.backward_ops(circuit, all, &ledger, lambda, theta, &mut grad)?;
            Ok(GradientResult {
                loss: sum_ordered(&per_sample),
                per_sample,
                gradient: GradientVector(grad),
                traversals: e.traversals.since(start),
                ledger_entries: ledger.len(),
                ledger_half_units: ledger.half_units(),
            })
        })
    }

    /// Expectation then adjoint seed (two traversals).
    pub(crate) fn observe<F: Real>(&mut self, last: &BatchedState<F>, pauli: &PauliString) -> Result<(Vec<f64>, AdjointState<F>)> {
        let per_sample =
            kernels::expectation(last.amplitudes(), last.n_qubits(), pauli.x_mask(), pauli.z_mask(), pauli.y_count());
        let mut lambda = self.alloc(last)?;
        kernels::seed_adjoint(
            last.amplitudes(),
            lambda.amplitudes_mut(),
            last.n_qubits(),
            pauli.x_mask(),
            pauli.z_mask(),
            pauli.y_count(),
        );
        self.traversals.observable += 2;
        Ok((per_sample, lambda))
    }
}

pub(crate) fn sum_ordered(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |a, b| a + b)
}

fn check_block(n_qubits: usize, block: &FusedUnitaryBlock, theta: &[f64]) -> Result<()> {
    if block.qubits().end > n_qubits {
        return Err(mismatch(format!("block within {n_qubits} qubits"), format!("qubits {:?}", block.qubits())));
    }
    if let Some(c) = block.constituents().iter().find(|c| c.param >= theta.len()) {
        return Err(mismatch(format!("parameter index < {}", theta.len()), c.param));
    }
    Ok(())
}

fn check_masks(n_qubits: usize, masks: impl Iterator<Item = usize>) -> Result<()> {
    for m in masks {
        if m >> n_qubits != 0 {
            return Err(mismatch(format!("masks within {n_qubits} qubits"), format!("{m:#b}")));
        }
    }
    Ok(())
}

pub(crate) fn check_circuit<F: Real>(circuit: &FusedCircuit, state: &BatchedState<F>, theta: &[f64]) -> Result<()> {
    if circuit.n_qubits() != state.n_qubits() {
        return Err(mismatch(format!("{}-qubit state", circuit.n_qubits()), state.n_qubits()));
    }
    if theta.len() != circuit.n_params() {
        return Err(mismatch(format!("{} parameters", circuit.n_params()), theta.len()));
    }
    Ok(())
}

pub(crate) fn check_pauli<F: Real>(state: &BatchedState<F>, pauli: &PauliString) -> Result<()> {
    if pauli.n_qubits() != state.n_qubits() {
        return Err(mismatch(format!("{}-qubit observable", state.n_qubits()), pauli.n_qubits()));
    }
    Ok(())
}
