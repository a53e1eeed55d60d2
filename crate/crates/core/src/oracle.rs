//! Slow, independent reference semantics for tests: dense operators, a
//! per-gate simulator that loops over every basis index, finite-difference
//! and parameter-shift gradients. Nothing here uses the fused kernels,
//! the bitmask Pauli kernel, or the rotation helpers in [`crate::circuit`].

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;

use crate::circuit::{Axis, Circuit, Gate, PauliString};
use crate::engine::GradientVector;
use crate::error::{invalid, Result};
use crate::statevec::BatchedState;

/// Largest register for which a dense `2^n × 2^n` operator is built.
pub const MAX_DENSE_QUBITS: usize = 12;

type M2 = [[Complex64; 2]; 2];

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// `exp(−iθP/2)` written out per axis.
fn rotation(axis: Axis, theta: f64) -> M2 {
    let c = Complex64::new((0.5 * theta).cos(), 0.0);
    let s = (0.5 * theta).sin();
    match axis {
        Axis::X => [[c, Complex64::new(0.0, -s)], [Complex64::new(0.0, -s), c]],
        Axis::Y => [[c, Complex64::new(-s, 0.0)], [Complex64::new(s, 0.0), c]],
        Axis::Z => [[(-I * 0.5 * theta).exp(), ZERO], [ZERO, (I * 0.5 * theta).exp()]],
    }
}

fn pauli_factor(ch: char) -> M2 {
    match ch {
        'I' => [[ONE, ZERO], [ZERO, ONE]],
        'X' => [[ZERO, ONE], [ONE, ZERO]],
        'Y' => [[ZERO, -I], [I, ZERO]],
        'Z' => [[ONE, ZERO], [ZERO, -ONE]],
        _ => unreachable!("labels come from PauliString"),
    }
}

/// Dense row-major operator on `n` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    n_qubits: usize,
    data: Vec<Complex64>,
}

impl DenseOperator {
    fn guard(n_qubits: usize) -> Result<()> {
        if n_qubits > MAX_DENSE_QUBITS {
            return Err(invalid(format!(
                "dense operators are limited to {MAX_DENSE_QUBITS} qubits, requested {n_qubits}"
            )));
        }
        Ok(())
    }

    pub fn identity(n_qubits: usize) -> Result<Self> {
        Self::guard(n_qubits)?;
        let dim = 1 << n_qubits;
        let mut data = vec![ZERO; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = ONE;
        }
        Ok(Self { n_qubits, data })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim() + col]
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &DenseOperator) -> DenseOperator {
        let d = self.dim();
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for k in 0..d {
                let a = self.data[r * d + k];
                if a == ZERO {
                    continue;
                }
                for c in 0..d {
                    data[r * d + c] += a * rhs.data[k * d + c];
                }
            }
        }
        DenseOperator {
            n_qubits: self.n_qubits,
            data,
        }
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let d = self.dim();
        (0..d)
            .map(|r| (0..d).map(|c| self.data[r * d + c] * v[c]).sum())
            .collect()
    }

    pub fn adjoint(&self) -> DenseOperator {
        let d = self.dim();
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                data[c * d + r] = self.data[r * d + c].conj();
            }
        }
        DenseOperator {
            n_qubits: self.n_qubits,
            data,
        }
    }

    /// Largest entry of `|U U† − I|`.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.mul(&self.adjoint());
        let d = self.dim();
        (0..d)
            .flat_map(|r| (0..d).map(move |c| (r, c)))
            .map(|(r, c)| (p.get(r, c) - if r == c { ONE } else { ZERO }).norm())
            .fold(0.0, f64::max)
    }

    /// Embeds a single-qubit matrix on qubit `q`.
    fn single(n_qubits: usize, q: usize, m: M2) -> Result<Self> {
        Self::guard(n_qubits)?;
        let d = 1usize << n_qubits;
        let mut data = vec![ZERO; d * d];
        for r in 0..d {
            for c in 0..d {
                if (r ^ c) & !(1 << q) == 0 {
                    data[r * d + c] = m[(r >> q) & 1][(c >> q) & 1];
                }
            }
        }
        Ok(Self { n_qubits, data })
    }

    /// Operator of one gate.
    pub fn gate(n_qubits: usize, gate: &Gate, theta: &[f64]) -> Result<Self> {
        match *gate {
            Gate::Rotation { axis, qubit, param } => Self::single(n_qubits, qubit, rotation(axis, theta[param])),
            Gate::Cz { control, target } => {
                let mut m = Self::identity(n_qubits)?;
                let d = m.dim();
                for x in 0..d {
                    if (x >> control) & 1 == 1 && (x >> target) & 1 == 1 {
                        m.data[x * d + x] = -ONE;
                    }
                }
                Ok(m)
            }
            Gate::Cnot { control, target } => {
                Self::guard(n_qubits)?;
                let d = 1usize << n_qubits;
                let mut data = vec![ZERO; d * d];
                for x in 0..d {
                    let y = if (x >> control) & 1 == 1 { x ^ (1 << target) } else { x };
                    // |x⟩ ↦ |y⟩
                    data[y * d + x] = ONE;
                }
                Ok(Self { n_qubits, data })
            }
        }
    }

    /// Product of a gate sequence, first gate rightmost.
    pub fn gates(n_qubits: usize, gates: &[Gate], theta: &[f64]) -> Result<Self> {
        let mut u = Self::identity(n_qubits)?;
        for g in gates {
            u = Self::gate(n_qubits, g, theta)?.mul(&u);
        }
        Ok(u)
    }

    /// Tensor product of the label's single-qubit factors.
    pub fn pauli(pauli: &PauliString) -> Result<Self> {
        let n = pauli.n_qubits();
        let mut u = Self::identity(n)?;
        // Leftmost label character is the highest qubit.
        for (i, ch) in pauli.label().chars().enumerate() {
            u = Self::single(n, n - 1 - i, pauli_factor(ch))?.mul(&u);
        }
        Ok(u)
    }
}

/// `U(θ) = U_M ⋯ U_1` as a dense matrix.
pub fn circuit_to_matrix(circuit: &Circuit, theta: &[f64]) -> Result<DenseOperator> {
    DenseOperator::gates(circuit.n_qubits(), circuit.gates(), theta)
}

fn apply_gate(n: usize, gate: &Gate, theta: &[f64], psi: &[Complex64]) -> Vec<Complex64> {
    let dim = 1usize << n;
    match *gate {
        Gate::Rotation { axis, qubit, param } => {
            let u = rotation(axis, theta[param]);
            (0..dim)
                .map(|x| {
                    let row = (x >> qubit) & 1;
                    let x0 = x & !(1 << qubit);
                    u[row][0] * psi[x0] + u[row][1] * psi[x0 | (1 << qubit)]
                })
                .collect()
        }
        Gate::Cz { control, target } => (0..dim)
            .map(|x| {
                if (x >> control) & 1 == 1 && (x >> target) & 1 == 1 {
                    -psi[x]
                } else {
                    psi[x]
                }
            })
            .collect(),
        Gate::Cnot { control, target } => (0..dim)
            .map(|x| if (x >> control) & 1 == 1 { psi[x ^ (1 << target)] } else { psi[x] })
            .collect(),
    }
}

/// Gate-by-gate simulation of one sample.
pub fn simulate(circuit: &Circuit, theta: &[f64], psi: &[Complex64]) -> Vec<Complex64> {
    circuit
        .gates()
        .iter()
        .fold(psi.to_vec(), |v, g| apply_gate(circuit.n_qubits(), g, theta, &v))
}

/// `O|ψ⟩` by applying each non-identity factor as a single-qubit operator.
pub fn apply_pauli(pauli: &PauliString, psi: &[Complex64]) -> Vec<Complex64> {
    let n = pauli.n_qubits();
    let mut v = psi.to_vec();
    for (i, ch) in pauli.label().chars().enumerate() {
        if ch == 'I' {
            continue;
        }
        let q = n - 1 - i;
        let m = pauli_factor(ch);
        v = (0..v.len())
            .map(|x| {
                let row = (x >> q) & 1;
                let x0 = x & !(1 << q);
                m[row][0] * v[x0] + m[row][1] * v[x0 | (1 << q)]
            })
            .collect();
    }
    v
}

pub fn expectation(pauli: &PauliString, psi: &[Complex64]) -> f64 {
    let o = apply_pauli(pauli, psi);
    psi.iter().zip(&o).map(|(a, b)| (a.conj() * b).re).sum()
}

fn samples(state0: &BatchedState<f64>) -> Vec<Vec<Complex64>> {
    (0..state0.batch()).map(|s| state0.sample(s).to_vec()).collect()
}

/// `Σ_samples ⟨ψ_M|O|ψ_M⟩`.
pub fn loss(circuit: &Circuit, state0: &BatchedState<f64>, theta: &[f64], pauli: &PauliString) -> f64 {
    samples(state0)
        .iter()
        .map(|psi| expectation(pauli, &simulate(circuit, theta, psi)))
        .sum()
}

/// Central differences `(L(θ_j + h) − L(θ_j − h)) / 2h`.
pub fn fd_gradient(circuit: &Circuit, state0: &BatchedState<f64>, theta: &[f64], pauli: &PauliString, h: f64) -> GradientVector {
    assert!(h > 0.0, "step must be positive");
    let mut t = theta.to_vec();
    GradientVector(
        (0..theta.len())
            .map(|j| {
                t[j] = theta[j] + h;
                let up = loss(circuit, state0, &t, pauli);
                t[j] = theta[j] - h;
                let down = loss(circuit, state0, &t, pauli);
                t[j] = theta[j];
                (up - down) / (2.0 * h)
            })
            .collect(),
    )
}

/// Parameter-shift gradient `½[E(θ_j + π/2) − E(θ_j − π/2)]`, exact for
/// Pauli rotations. Also returns the number of full circuit executions
/// (`2M`).
pub fn parameter_shift_gradient(
    circuit: &Circuit,
    state0: &BatchedState<f64>,
    theta: &[f64],
    pauli: &PauliString,
) -> (GradientVector, usize) {
    let mut t = theta.to_vec();
    let mut executions = 0;
    let grad = (0..theta.len())
        .map(|j| {
            t[j] = theta[j] + FRAC_PI_2;
            let up = loss(circuit, state0, &t, pauli);
            t[j] = theta[j] - FRAC_PI_2;
            let down = loss(circuit, state0, &t, pauli);
            t[j] = theta[j];
            executions += 2;
            0.5 * (up - down)
        })
        .collect();
    (GradientVector(grad), executions)
}

/// Final states of every sample, packed as a batched state.
pub fn simulate_batch(circuit: &Circuit, state0: &BatchedState<f64>, theta: &[f64]) -> BatchedState<f64> {
    let amps = samples(state0)
        .iter()
        .flat_map(|psi| simulate(circuit, theta, psi))
        .collect();
    BatchedState::from_amplitudes(state0.n_qubits(), state0.batch(), amps).expect("same shape as input")
}

/// Largest `|a_j − b_j| / max_k |b_k|`: error relative to the reference's
/// largest component.
pub fn max_rel_diff(actual: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = actual
        .iter()
        .zip(reference)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
