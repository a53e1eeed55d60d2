//! Gate IR, rotation math, the hardware-efficient ansatz and Pauli strings.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::error::{invalid, Result, SimError};
use crate::rng::SplitMix64;

pub type Mat2 = [[Complex64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn pauli(self) -> Mat2 {
        let (o, l, i) = (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0));
        match self {
            Axis::X => [[o, l], [l, o]],
            Axis::Y => [[o, -i], [i, o]],
            Axis::Z => [[l, o], [o, -l]],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    Rotation { axis: Axis, qubit: usize, param: usize },
    Cz { control: usize, target: usize },
    Cnot { control: usize, target: usize },
}

impl Gate {
    pub fn rx(qubit: usize, param: usize) -> Self {
        Gate::Rotation { axis: Axis::X, qubit, param }
    }
    pub fn ry(qubit: usize, param: usize) -> Self {
        Gate::Rotation { axis: Axis::Y, qubit, param }
    }
    pub fn rz(qubit: usize, param: usize) -> Self {
        Gate::Rotation { axis: Axis::Z, qubit, param }
    }
    pub fn cz(control: usize, target: usize) -> Self {
        Gate::Cz { control, target }
    }
    pub fn cnot(control: usize, target: usize) -> Self {
        Gate::Cnot { control, target }
    }

    pub fn is_two_qubit(&self) -> bool {
        !matches!(self, Gate::Rotation { .. })
    }
}

/// `cos(θ/2) I − i sin(θ/2) P`.
pub fn rotation_matrix(axis: Axis, theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    combine(Complex64::new(c, 0.0), Complex64::new(0.0, -s), axis)
}

/// `−½ sin(θ/2) I − (i/2) cos(θ/2) P`.
pub fn rotation_derivative(axis: Axis, theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    combine(Complex64::new(-0.5 * s, 0.0), Complex64::new(0.0, -0.5 * c), axis)
}

/// `a I + b P`.
fn combine(a: Complex64, b: Complex64, axis: Axis) -> Mat2 {
    let p = axis.pauli();
    let mut m = [[Complex64::new(0.0, 0.0); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            m[r][c] = b * p[r][c] + if r == c { a } else { Complex64::new(0.0, 0.0) };
        }
    }
    m
}

/// An ordered gate list with its parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    theta: Vec<f64>,
    /// Gate-index boundaries of repeating layers (`d + 1` entries), empty
    /// when the circuit has no layer structure.
    layer_bounds: Vec<usize>,
}

impl Circuit {
    /// Validates qubit ranges and that every parameter index is used by
    /// exactly one rotation.
    pub fn new(n_qubits: usize, gates: Vec<Gate>, theta: Vec<f64>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(invalid("a circuit needs at least one qubit"));
        }
        let check = |q: usize| {
            if q >= n_qubits {
                Err(SimError::QubitOutOfRange { qubit: q, n_qubits })
            } else {
                Ok(())
            }
        };
        let mut used = vec![false; theta.len()];
        for g in &gates {
            match *g {
                Gate::Rotation { qubit, param, .. } => {
                    check(qubit)?;
                    match used.get_mut(param) {
                        None => {
                            return Err(invalid(format!(
                                "parameter index {param} out of range for {} parameters",
                                theta.len()
                            )))
                        }
                        Some(true) => return Err(invalid(format!("parameter {param} used by more than one rotation"))),
                        Some(u) => *u = true,
                    }
                }
                Gate::Cz { control, target } | Gate::Cnot { control, target } => {
                    check(control)?;
                    check(target)?;
                    if control == target {
                        return Err(invalid(format!("two-qubit gate with control == target == {control}")));
                    }
                }
            }
        }
        if let Some(p) = used.iter().position(|u| !u) {
            return Err(invalid(format!("parameter {p} is not used by any rotation")));
        }
        Ok(Self {
            n_qubits,
            gates,
            theta,
            layer_bounds: Vec::new(),
        })
    }

    /// Attaches layer boundaries (gate indices, first `0`, last `gates.len()`).
    pub fn with_layers(mut self, bounds: Vec<usize>) -> Result<Self> {
        let ok = !bounds.is_empty()
            && bounds[0] == 0
            && *bounds.last().unwrap() == self.gates.len()
            && bounds.windows(2).all(|w| w[0] <= w[1]);
        if !ok {
            return Err(invalid("layer bounds must ascend from 0 to the gate count"));
        }
        self.layer_bounds = bounds;
        Ok(self)
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != self.theta.len() {
            return Err(crate::error::mismatch(self.theta.len(), theta.len()));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn layer_bounds(&self) -> &[usize] {
        &self.layer_bounds
    }

    /// Number of layers; a circuit without layer structure counts as one.
    pub fn n_layers(&self) -> usize {
        if self.layer_bounds.is_empty() {
            1
        } else {
            self.layer_bounds.len() - 1
        }
    }

    /// Serializes to the line-oriented text format:
    ///
    /// ```text
    /// qubits 3
    /// params 2
    /// layers 0 3
    /// theta 0.5 1.25
    /// rx q0 p0
    /// ry q1 p1
    /// cz q0 q1
    /// ```
    ///
    /// `layers` is omitted when the circuit has no layer structure. Angles
    /// use Rust's shortest round-trip float formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "qubits {}", self.n_qubits).unwrap();
        writeln!(out, "params {}", self.theta.len()).unwrap();
        if !self.layer_bounds.is_empty() {
            out.push_str("layers");
            for b in &self.layer_bounds {
                write!(out, " {b}").unwrap();
            }
            out.push('\n');
        }
        if !self.theta.is_empty() {
            out.push_str("theta");
            for t in &self.theta {
                write!(out, " {t}").unwrap();
            }
            out.push('\n');
        }
        for g in &self.gates {
            match *g {
                Gate::Rotation { axis, qubit, param } => writeln!(out, "r{} q{qubit} p{param}", axis.name()),
                Gate::Cz { control, target } => writeln!(out, "cz q{control} q{target}"),
                Gate::Cnot { control, target } => writeln!(out, "cnot q{control} q{target}"),
            }
            .unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n_qubits = None;
        let mut n_params = None;
        let mut layers = Vec::new();
        let mut theta = None;
        let mut gates = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |m: String| SimError::Parse { line: line_no, message: m };
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace();
            let head = words.next().unwrap();
            let rest: Vec<&str> = words.collect();
            let number = |w: &str| w.parse::<usize>().map_err(|_| err(format!("expected an integer, found `{w}`")));
            let tagged = |w: &str, tag: char| {
                w.strip_prefix(tag)
                    .ok_or_else(|| err(format!("expected `{tag}<index>`, found `{w}`")))
                    .and_then(|v| v.parse::<usize>().map_err(|_| err(format!("bad index `{w}`"))))
            };
            let arity = |k: usize| {
                if rest.len() != k {
                    Err(err(format!("`{head}` takes {k} operands, found {}", rest.len())))
                } else {
                    Ok(())
                }
            };
            match head {
                "qubits" => {
                    arity(1)?;
                    n_qubits = Some(number(rest[0])?);
                }
                "params" => {
                    arity(1)?;
                    n_params = Some(number(rest[0])?);
                }
                "layers" => {
                    layers = rest.iter().map(|w| number(w)).collect::<Result<_>>()?;
                }
                "theta" => {
                    theta = Some(
                        rest.iter()
                            .map(|w| w.parse::<f64>().map_err(|_| err(format!("bad angle `{w}`"))))
                            .collect::<Result<Vec<_>>>()?,
                    );
                }
                "rx" | "ry" | "rz" => {
                    arity(2)?;
                    let axis = match head {
                        "rx" => Axis::X,
                        "ry" => Axis::Y,
                        _ => Axis::Z,
                    };
                    gates.push(Gate::Rotation {
                        axis,
                        qubit: tagged(rest[0], 'q')?,
                        param: tagged(rest[1], 'p')?,
                    });
                }
                "cz" | "cnot" => {
                    arity(2)?;
                    let (control, target) = (tagged(rest[0], 'q')?, tagged(rest[1], 'q')?);
                    gates.push(if head == "cz" {
                        Gate::Cz { control, target }
                    } else {
                        Gate::Cnot { control, target }
                    });
                }
                other => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let missing = |what: &str| SimError::Parse {
            line: 0,
            message: format!("missing `{what}` header"),
        };
        let n_qubits = n_qubits.ok_or_else(|| missing("qubits"))?;
        let n_params = n_params.ok_or_else(|| missing("params"))?;
        let theta = theta.unwrap_or_else(|| vec![0.0; n_params]);
        if theta.len() != n_params {
            return Err(SimError::Parse {
                line: 0,
                message: format!("`theta` has {} values, header says {n_params}", theta.len()),
            });
        }
        let c = Circuit::new(n_qubits, gates, theta)?;
        if layers.is_empty() {
            Ok(c)
        } else {
            c.with_layers(layers)
        }
    }
}

/// Entangling pairs of one ansatz layer: a ring `(i, (i+1) mod n)`; for two
/// qubits the ring collapses to a single pair.
pub fn ring_pairs(n_qubits: usize) -> Vec<(usize, usize)> {
    if n_qubits == 2 {
        return vec![(0, 1)];
    }
    (0..n_qubits).map(|i| (i, (i + 1) % n_qubits)).collect()
}

/// Hardware-efficient ansatz with `layers` repetitions of
/// `Rx Ry Rz` on every qubit (qubit by qubit) followed by a CZ ring.
/// Angles are drawn uniformly from `[0, 2π)` with the given seed.
pub fn build_hea(n_qubits: usize, layers: usize, seed: u64) -> Result<Circuit> {
    let mut rng = SplitMix64::new(seed);
    let theta: Vec<f64> = (0..3 * n_qubits * layers).map(|_| rng.next_angle()).collect();
    build_hea_with_theta(n_qubits, layers, theta)
}

pub fn build_hea_with_theta(n_qubits: usize, layers: usize, theta: Vec<f64>) -> Result<Circuit> {
    if n_qubits < 2 {
        return Err(invalid("the ansatz needs at least two qubits"));
    }
    let ring = ring_pairs(n_qubits);
    let mut gates = Vec::with_capacity(layers * (3 * n_qubits + ring.len()));
    let mut bounds = vec![0];
    let mut p = 0;
    for _ in 0..layers {
        for q in 0..n_qubits {
            for axis in [Axis::X, Axis::Y, Axis::Z] {
                gates.push(Gate::Rotation { axis, qubit: q, param: p });
                p += 1;
            }
        }
        gates.extend(ring.iter().map(|&(c, t)| Gate::Cz { control: c, target: t }));
        bounds.push(gates.len());
    }
    Circuit::new(n_qubits, gates, theta)?.with_layers(bounds)
}

/// Pauli string stored as bit masks, using `Y = iXZ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliString {
    n_qubits: usize,
    x_mask: usize,
    z_mask: usize,
    y_count: u32,
}

impl PauliString {
    pub fn new(n_qubits: usize, x_mask: usize, z_mask: usize) -> Result<Self> {
        let width = if n_qubits >= usize::BITS as usize { usize::MAX } else { (1usize << n_qubits) - 1 };
        if (x_mask | z_mask) & !width != 0 {
            return Err(invalid(format!("Pauli masks wider than {n_qubits} qubits")));
        }
        Ok(Self {
            n_qubits,
            x_mask,
            z_mask,
            y_count: (x_mask & z_mask).count_ones(),
        })
    }

    /// Parses a label over `{I, X, Y, Z}`; the leftmost character acts on the
    /// highest qubit.
    pub fn parse(label: &str) -> Result<Self> {
        let n = label.chars().count();
        if n == 0 {
            return Err(invalid("empty Pauli label"));
        }
        let (mut x, mut z) = (0usize, 0usize);
        for (i, ch) in label.chars().enumerate() {
            let bit = 1usize << (n - 1 - i);
            match ch.to_ascii_uppercase() {
                'I' => {}
                'X' => x |= bit,
                'Z' => z |= bit,
                'Y' => {
                    x |= bit;
                    z |= bit;
                }
                other => return Err(invalid(format!("invalid Pauli character `{other}`"))),
            }
        }
        Self::new(n, x, z)
    }

    /// Parses and checks the width against a register.
    pub fn parse_for(label: &str, n_qubits: usize) -> Result<Self> {
        let p = Self::parse(label)?;
        if p.n_qubits != n_qubits {
            return Err(crate::error::mismatch(format!("{n_qubits}-character label"), label.chars().count()));
        }
        Ok(p)
    }

    /// `IXYZ` repeated and truncated to `n` characters.
    pub fn repeating_ixyz(n_qubits: usize) -> Result<Self> {
        Self::parse(&Self::repeating_ixyz_label(n_qubits))
    }

    pub fn repeating_ixyz_label(n_qubits: usize) -> String {
        "IXYZ".chars().cycle().take(n_qubits).collect()
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }
    pub fn x_mask(&self) -> usize {
        self.x_mask
    }
    pub fn z_mask(&self) -> usize {
        self.z_mask
    }
    pub fn y_count(&self) -> u32 {
        self.y_count
    }

    pub fn label(&self) -> String {
        (0..self.n_qubits)
            .rev()
            .map(|q| match ((self.x_mask >> q) & 1, (self.z_mask >> q) & 1) {
                (0, 0) => 'I',
                (1, 0) => 'X',
                (0, 1) => 'Z',
                _ => 'Y',
            })
            .collect()
    }
}
