//! Gate fusion.
//!
//! Consecutive rotations whose targets fall in the same fixed qubit window
//! `[g·k, g·k + g)` become one [`FusedUnitaryBlock`]; maximal runs of CZ
//! gates become one parity operator and runs of CNOT gates one
//! index-permutation operator. Fusion never crosses a two-qubit gate or a
//! layer boundary, so flattening a fused circuit reproduces the source gate
//! list exactly.

use std::fmt;
use std::ops::Range;

use num_complex::Complex64;

use crate::circuit::{rotation_matrix, Axis, Circuit, Gate};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FusionPolicy {
    /// Qubits per fusion window, 1 to 3.
    pub group_size: usize,
    /// Rotations per block before a new block is opened.
    pub max_constituents: usize,
}

impl Default for FusionPolicy {
    fn default() -> Self {
        Self {
            group_size: 3,
            max_constituents: 9,
        }
    }
}

impl FusionPolicy {
    pub fn new(group_size: usize, max_constituents: usize) -> Result<Self> {
        let p = Self {
            group_size,
            max_constituents,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.group_size) {
            return Err(invalid(format!("group size {} outside 1..=3", self.group_size)));
        }
        if self.max_constituents == 0 {
            return Err(invalid("max constituents must be positive"));
        }
        Ok(())
    }
}

/// One rotation inside a fused block; `local` is the bit position within
/// the block's qubit window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Constituent {
    pub axis: Axis,
    pub local: usize,
    pub param: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusedUnitaryBlock {
    first_qubit: usize,
    width: usize,
    constituents: Vec<Constituent>,
}

impl FusedUnitaryBlock {
    pub fn new(first_qubit: usize, width: usize, constituents: Vec<Constituent>) -> Result<Self> {
        if !(1..=3).contains(&width) {
            return Err(invalid(format!("block width {width} outside 1..=3")));
        }
        if let Some(c) = constituents.iter().find(|c| c.local >= width) {
            return Err(invalid(format!("constituent on local qubit {} of a {width}-qubit block", c.local)));
        }
        Ok(Self {
            first_qubit,
            width,
            constituents,
        })
    }

    pub fn qubits(&self) -> Range<usize> {
        self.first_qubit..self.first_qubit + self.width
    }

    pub fn first_qubit(&self) -> usize {
        self.first_qubit
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Tuple length `2^width`.
    pub fn dim(&self) -> usize {
        1 << self.width
    }

    pub fn constituents(&self) -> &[Constituent] {
        &self.constituents
    }

    /// Every constituent is a parameterized rotation, so a block is
    /// variational whenever it is non-empty.
    pub fn is_variational(&self) -> bool {
        !self.constituents.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FusedCzBlock {
    pairs: Vec<(usize, usize)>,
    masks: Vec<usize>,
}

impl FusedCzBlock {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        let masks = pairs.iter().map(|&(c, t)| (1 << c) | (1 << t)).collect();
        Self { pairs, masks }
    }

    /// One mask per gate with the control and target bits set.
    pub fn masks(&self) -> &[usize] {
        &self.masks
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    fn push(&mut self, c: usize, t: usize) {
        self.pairs.push((c, t));
        self.masks.push((1 << c) | (1 << t));
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FusedCnotBlock {
    pairs: Vec<(usize, usize)>,
}

impl FusedCnotBlock {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `(control_mask, target_mask)` per gate, in circuit order.
    pub fn masks(&self) -> impl DoubleEndedIterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(c, t)| (1 << c, 1 << t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FusedOp {
    Unitary(FusedUnitaryBlock),
    Cz(FusedCzBlock),
    Cnot(FusedCnotBlock),
}

impl FusedOp {
    pub fn is_variational(&self) -> bool {
        matches!(self, FusedOp::Unitary(b) if b.is_variational())
    }

    /// Source gates of this op in circuit order.
    pub fn gates(&self) -> Vec<Gate> {
        match self {
            FusedOp::Unitary(b) => b
                .constituents
                .iter()
                .map(|c| Gate::Rotation {
                    axis: c.axis,
                    qubit: b.first_qubit + c.local,
                    param: c.param,
                })
                .collect(),
            FusedOp::Cz(b) => b.pairs.iter().map(|&(c, t)| Gate::cz(c, t)).collect(),
            FusedOp::Cnot(b) => b.pairs.iter().map(|&(c, t)| Gate::cnot(c, t)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedCircuit {
    n_qubits: usize,
    ops: Vec<FusedOp>,
    n_params: usize,
    policy: FusionPolicy,
    /// Op-index boundaries of the source circuit's layers (`d + 1` entries).
    layer_bounds: Vec<usize>,
}

impl FusedCircuit {
    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[FusedOp] {
        &self.ops
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn policy(&self) -> FusionPolicy {
        self.policy
    }

    pub fn layer_bounds(&self) -> &[usize] {
        &self.layer_bounds
    }

    pub fn n_layers(&self) -> usize {
        self.layer_bounds.len() - 1
    }

    /// Op indices covering layers `layers`.
    pub fn layer_ops(&self, layers: Range<usize>) -> Range<usize> {
        self.layer_bounds[layers.start]..self.layer_bounds[layers.end]
    }

    pub fn variational_count(&self) -> usize {
        self.ops.iter().filter(|o| o.is_variational()).count()
    }

    pub fn flatten(&self) -> Vec<Gate> {
        self.ops.iter().flat_map(FusedOp::gates).collect()
    }
}

impl fmt::Display for FusedCircuit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "fused circuit: {} qubits, {} ops ({} variational), {} params, g={} m={}",
            self.n_qubits,
            self.ops.len(),
            self.variational_count(),
            self.n_params,
            self.policy.group_size,
            self.policy.max_constituents
        )?;
        let mut layer = 0;
        for (i, op) in self.ops.iter().enumerate() {
            if self.layer_bounds.len() > 2 && self.layer_bounds.get(layer) == Some(&i) {
                writeln!(f, "-- layer {layer}")?;
                layer += 1;
            }
            match op {
                FusedOp::Unitary(b) => {
                    let body: Vec<String> = b
                        .constituents
                        .iter()
                        .map(|c| format!("r{}(q{},p{})", c.axis.name(), b.first_qubit + c.local, c.param))
                        .collect();
                    writeln!(
                        f,
                        "[{i:>4}] unitary q{}..q{} ({}): {}",
                        b.first_qubit,
                        b.first_qubit + b.width - 1,
                        b.constituents.len(),
                        body.join(" ")
                    )?;
                }
                FusedOp::Cz(b) => {
                    let body: Vec<String> = b.pairs.iter().map(|(c, t)| format!("{c}-{t}")).collect();
                    writeln!(f, "[{i:>4}] cz x{}: {}", b.pairs.len(), body.join(" "))?;
                }
                FusedOp::Cnot(b) => {
                    let body: Vec<String> = b.pairs.iter().map(|(c, t)| format!("{c}->{t}")).collect();
                    writeln!(f, "[{i:>4}] cnot x{}: {}", b.pairs.len(), body.join(" "))?;
                }
            }
        }
        Ok(())
    }
}

pub fn fuse_circuit(circuit: &Circuit, policy: FusionPolicy) -> Result<FusedCircuit> {
    policy.validate()?;
    let n = circuit.n_qubits();
    let g = policy.group_size;
    let gate_bounds: Vec<usize> = if circuit.layer_bounds().is_empty() {
        vec![0, circuit.gates().len()]
    } else {
        circuit.layer_bounds().to_vec()
    };

    let mut ops = Vec::new();
    let mut open: Option<FusedOp> = None;
    let mut layer_bounds = vec![0];
    let mut next_bound = 1;

    for (i, gate) in circuit.gates().iter().enumerate() {
        while next_bound < gate_bounds.len() && gate_bounds[next_bound] == i {
            ops.extend(open.take());
            layer_bounds.push(ops.len());
            next_bound += 1;
        }
        match *gate {
            Gate::Rotation { axis, qubit, param } => {
                let first = qubit / g * g;
                let c = Constituent {
                    axis,
                    local: qubit - first,
                    param,
                };
                match &mut open {
                    Some(FusedOp::Unitary(b))
                        if b.first_qubit == first && b.constituents.len() < policy.max_constituents =>
                    {
                        b.constituents.push(c);
                    }
                    _ => {
                        ops.extend(open.take());
                        open = Some(FusedOp::Unitary(FusedUnitaryBlock {
                            first_qubit: first,
                            width: g.min(n - first),
                            constituents: vec![c],
                        }));
                    }
                }
            }
            Gate::Cz { control, target } => match &mut open {
                Some(FusedOp::Cz(b)) => b.push(control, target),
                _ => {
                    ops.extend(open.take());
                    open = Some(FusedOp::Cz(FusedCzBlock::new(vec![(control, target)])));
                }
            },
            Gate::Cnot { control, target } => match &mut open {
                Some(FusedOp::Cnot(b)) => b.pairs.push((control, target)),
                _ => {
                    ops.extend(open.take());
                    open = Some(FusedOp::Cnot(FusedCnotBlock::new(vec![(control, target)])));
                }
            },
        }
    }
    ops.extend(open.take());
    while layer_bounds.len() < gate_bounds.len() {
        layer_bounds.push(ops.len());
    }

    Ok(FusedCircuit {
        n_qubits: n,
        ops,
        n_params: circuit.n_params(),
        policy,
        layer_bounds,
    })
}

/// Dense `2^w × 2^w` row-major matrix of a block: constituents embedded on
/// their local bit and multiplied in circuit order (later on the left).
pub fn compose_block_unitary(block: &FusedUnitaryBlock, theta: &[f64]) -> Vec<Complex64> {
    let dim = block.dim();
    let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
    for i in 0..dim {
        m[i * dim + i] = Complex64::new(1.0, 0.0);
    }
    for c in &block.constituents {
        let u = rotation_matrix(c.axis, theta[c.param]);
        let bit = 1 << c.local;
        for col in 0..dim {
            for r0 in (0..dim).filter(|r| r & bit == 0) {
                let r1 = r0 | bit;
                let (a, b) = (m[r0 * dim + col], m[r1 * dim + col]);
                m[r0 * dim + col] = u[0][0] * a + u[0][1] * b;
                m[r1 * dim + col] = u[1][0] * a + u[1][1] * b;
            }
        }
    }
    m
}
