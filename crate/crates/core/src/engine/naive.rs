//! Store-everything baseline: one traversal per gate, every gate input kept
//! for the backward pass, every output in a fresh buffer.

use std::ops::Range;

use super::kernels::{self, Rot};
use super::{check_pauli, sum_ordered, AdjointState, Engine, GradientResult, GradientVector};
use crate::circuit::{Circuit, Gate, PauliString};
use crate::error::{mismatch, Result};
use crate::precision::Real;
use crate::statevec::BatchedState;

/// Inputs of every gate in a gate range, in order.
#[derive(Debug, Clone)]
pub struct NaiveTape<F: Real> {
    inputs: Vec<BatchedState<F>>,
}

impl<F: Real> NaiveTape<F> {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn half_units(&self) -> u64 {
        2 * self.inputs.len() as u64
    }
}

impl Engine {
    pub(crate) fn naive_forward_gates<F: Real>(
        &mut self,
        circuit: &Circuit,
        gates: Range<usize>,
        state0: &BatchedState<F>,
        theta: &[f64],
        record: bool,
    ) -> Result<(BatchedState<F>, Option<NaiveTape<F>>)> {
        let n = state0.n_qubits();
        let mut inputs = Vec::new();
        let mut cur: Option<BatchedState<F>> = None;
        for gate in &circuit.gates()[gates] {
            let input = cur.as_ref().unwrap_or(state0);
            let mut out = self.alloc(state0)?;
            match *gate {
                Gate::Rotation { axis, qubit, param } => kernels::apply_rotation(
                    input.amplitudes(),
                    out.amplitudes_mut(),
                    n,
                    Rot::new(axis, qubit, theta[param]),
                ),
                Gate::Cz { control, target } => {
                    kernels::apply_cz(input.amplitudes(), out.amplitudes_mut(), n, &[(1 << control) | (1 << target)])
                }
                Gate::Cnot { control, target } => {
                    kernels::gather_cnot(input.amplitudes(), out.amplitudes_mut(), n, &[(1 << control, 1 << target)])
                }
            }
            self.traversals.forward += 1;
            let prev = cur.replace(out);
            if record {
                inputs.push(prev.unwrap_or_else(|| state0.clone()));
                self.check_ledger_bytes(inputs.len() as u64 * state0.bytes())?;
            }
        }
        let out = cur.unwrap_or_else(|| state0.clone());
        Ok((out, record.then_some(NaiveTape { inputs })))
    }

    pub(crate) fn naive_backward_gates<F: Real>(
        &mut self,
        circuit: &Circuit,
        gates: Range<usize>,
        tape: &NaiveTape<F>,
        mut lambda: AdjointState<F>,
        theta: &[f64],
        grad: &mut [f64],
    ) -> Result<AdjointState<F>> {
        let n = lambda.n_qubits();
        let start = gates.start;
        for g in gates.rev() {
            let psi = &tape.inputs[g - start];
            match circuit.gates()[g] {
                Gate::Rotation { axis, qubit, param } => {
                    let rot = Rot::new(axis, qubit, theta[param]);
                    let partials = kernels::backward_rotation(psi.amplitudes(), lambda.amplitudes_mut(), n, rot);
                    grad[param] += sum_ordered(&partials);
                }
                Gate::Cz { control, target } => {
                    let mut out = self.alloc(&lambda)?;
                    kernels::apply_cz(lambda.amplitudes(), out.amplitudes_mut(), n, &[(1 << control) | (1 << target)]);
                    lambda = out;
                }
                Gate::Cnot { control, target } => {
                    let mut out = self.alloc(&lambda)?;
                    kernels::gather_cnot(lambda.amplitudes(), out.amplitudes_mut(), n, &[(1 << control, 1 << target)]);
                    lambda = out;
                }
            }
            self.traversals.backward += 1;
        }
        Ok(lambda)
    }

    /// Baseline gradient: per-gate forward storing every gate input, then a
    /// per-gate adjoint sweep reading those inputs directly.
    pub fn naive_gradient<F: Real>(
        &mut self,
        circuit: &Circuit,
        state0: &BatchedState<F>,
        theta: &[f64],
        pauli: &PauliString,
    ) -> Result<GradientResult> {
        check_naive(circuit, state0, theta)?;
        check_pauli(state0, pauli)?;
        let start = self.traversals;
        self.install(|e| {
            let all = 0..circuit.gates().len();
            let (last, tape) = e.naive_forward_gates(circuit, all.clone(), state0, theta, true)?;
            let tape = tape.expect("recording forward returns a tape");
            let (per_sample, lambda) = e.observe(&last, pauli)?;
            drop(last);
            let mut grad = vec![0.0; circuit.n_params()];
            e.naive_backward_gates(circuit, all, &tape, lambda, theta, &mut grad)?;
            Ok(GradientResult {
                loss: sum_ordered(&per_sample),
                per_sample,
                gradient: GradientVector(grad),
                traversals: e.traversals.since(start),
                ledger_entries: tape.len(),
                ledger_half_units: tape.half_units(),
            })
        })
    }

    /// Per-gate forward without recording; returns the final state.
    pub fn naive_forward<F: Real>(&mut self, circuit: &Circuit, state0: &BatchedState<F>, theta: &[f64]) -> Result<BatchedState<F>> {
        check_naive(circuit, state0, theta)?;
        self.install(|e| {
            let all = 0..circuit.gates().len();
            Ok(e.naive_forward_gates(circuit, all, state0, theta, false)?.0)
        })
    }
}

pub(crate) fn check_naive<F: Real>(circuit: &Circuit, state: &BatchedState<F>, theta: &[f64]) -> Result<()> {
    if circuit.n_qubits() != state.n_qubits() {
        return Err(mismatch(format!("{}-qubit state", circuit.n_qubits()), state.n_qubits()));
    }
    if theta.len() != circuit.n_params() {
        return Err(mismatch(format!("{} parameters", circuit.n_params()), theta.len()));
    }
    Ok(())
}
