//! Gate arrays over a fixed elementary set, their dense integer coding, the
//! application function `App`, and the conditional/sequential powers of a
//! device.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, CMat, C64, ONE, ZERO};
use crate::statevec::{DenseUnitary, StateVector};

#[derive(Clone, Debug, PartialEq)]
pub struct Gate {
    pub name: String,
    pub arity: usize,
    pub unitary: DenseUnitary,
}

/// Fixed elementary gate set `{E_1, …, E_o}`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateSet {
    name: String,
    gates: Vec<Gate>,
}

fn mat(n: usize, entries: &[C64]) -> DenseUnitary {
    DenseUnitary::new(CMat::from_row_slice(n, n, entries)).expect("built-in gate is unitary")
}

fn gate_h() -> Gate {
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    Gate { name: "H".into(), arity: 1, unitary: mat(2, &[h, h, h, -h]) }
}

fn gate_t() -> Gate {
    Gate { name: "T".into(), arity: 1, unitary: mat(2, &[ONE, ZERO, ZERO, cis(0.125)]) }
}

fn gate_x() -> Gate {
    Gate { name: "X".into(), arity: 1, unitary: mat(2, &[ZERO, ONE, ONE, ZERO]) }
}

fn gate_z() -> Gate {
    Gate { name: "Z".into(), arity: 1, unitary: mat(2, &[ONE, ZERO, ZERO, -ONE]) }
}

fn gate_cnot() -> Gate {
    let (o, z) = (ONE, ZERO);
    Gate {
        name: "CNOT".into(),
        arity: 2,
        unitary: mat(4, &[o, z, z, z, z, o, z, z, z, z, z, o, z, z, o, z]),
    }
}

fn gate_cz() -> Gate {
    let (o, z) = (ONE, ZERO);
    Gate {
        name: "CZ".into(),
        arity: 2,
        unitary: mat(4, &[o, z, z, z, z, o, z, z, z, z, o, z, z, z, z, -o]),
    }
}

fn gate_swap() -> Gate {
    let (o, z) = (ONE, ZERO);
    Gate {
        name: "SWAP".into(),
        arity: 2,
        unitary: mat(4, &[o, z, z, z, z, z, o, z, z, o, z, z, z, z, z, o]),
    }
}

impl GateSet {
    pub fn new(name: &str, gates: Vec<Gate>) -> Result<Self> {
        for (i, g) in gates.iter().enumerate() {
            if gates[..i].iter().any(|h| h.name == g.name) {
                return Err(Error::InvalidCircuit(format!("duplicate gate name `{}`", g.name)));
            }
            if g.unitary.dim() != 1 << g.arity {
                return Err(Error::InvalidCircuit(format!("gate `{}` has arity {} but dimension {}", g.name, g.arity, g.unitary.dim())));
            }
        }
        Ok(Self { name: name.into(), gates })
    }

    /// `{H, T, X, CNOT}`.
    pub fn standard() -> Self {
        Self { name: "standard".into(), gates: vec![gate_h(), gate_t(), gate_x(), gate_cnot()] }
    }

    /// `{X, Z, CZ, SWAP}`; every product of these squares to the identity
    /// whenever the factors commute, and each generator is an involution.
    pub fn involutive() -> Self {
        Self { name: "involutive".into(), gates: vec![gate_x(), gate_z(), gate_cz(), gate_swap()] }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "standard" | "default" => Ok(Self::standard()),
            "involutive" => Ok(Self::involutive()),
            other => Err(Error::Invalid(format!("unknown gate set `{other}`"))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    /// Number of elements `o`.
    pub fn size(&self) -> usize {
        self.gates.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.gates.iter().position(|g| g.name == name)
    }
}

/// One placed gate: index into the gate set and ordered target qubits.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GateOp {
    pub gate: usize,
    pub targets: Vec<usize>,
}

/// Gate array acting on `n` qubits.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Circuit {
    pub n: usize,
    pub gates: Vec<GateOp>,
}

impl Circuit {
    pub fn empty(n: usize) -> Self {
        Self { n, gates: Vec::new() }
    }
}

/// The family 𝓔 of all gate arrays of length ≤ c on n qubits over a gate set,
/// enumerated densely as `0 … T−1`.
#[derive(Clone, Debug)]
pub struct CodeSpace {
    gate_set: GateSet,
    n: usize,
    c: usize,
    alphabet: Vec<GateOp>,
    offsets: Vec<u64>,
    size: u64,
}

fn ordered_tuples(n: usize, r: usize) -> Vec<Vec<usize>> {
    if r == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for prefix in ordered_tuples(n, r - 1) {
        for q in 0..n {
            if !prefix.contains(&q) {
                let mut t = prefix.clone();
                t.push(q);
                out.push(t);
            }
        }
    }
    out
}

impl CodeSpace {
    pub fn new(gate_set: GateSet, n: usize, c: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidCircuit("circuits act on at least one qubit".into()));
        }
        let mut alphabet = Vec::new();
        for (gi, g) in gate_set.gates.iter().enumerate() {
            if g.arity <= n {
                for t in ordered_tuples(n, g.arity) {
                    alphabet.push(GateOp { gate: gi, targets: t });
                }
            }
        }
        let a = alphabet.len() as u64;
        let mut offsets = Vec::with_capacity(c + 2);
        let mut total: u64 = 0;
        let mut block: u64 = 1;
        for len in 0..=c {
            offsets.push(total);
            total = total
                .checked_add(block)
                .ok_or_else(|| Error::InvalidCircuit("code space does not fit in 64 bits".into()))?;
            if len < c {
                block = block
                    .checked_mul(a)
                    .ok_or_else(|| Error::InvalidCircuit("code space does not fit in 64 bits".into()))?;
            }
        }
        offsets.push(total);
        Ok(Self { gate_set, n, c, alphabet, offsets, size: total })
    }

    pub fn gate_set(&self) -> &GateSet {
        &self.gate_set
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_len(&self) -> usize {
        self.c
    }

    /// Number of placed gates a single slot can hold.
    pub fn alphabet(&self) -> &[GateOp] {
        &self.alphabet
    }

    /// `T = card(𝓔)`.
    pub fn size(&self) -> u64 {
        self.size
    }

    fn validate(&self, circuit: &Circuit) -> Result<()> {
        if circuit.n != self.n {
            return Err(Error::InvalidCircuit(format!("circuit acts on {} qubits, code space on {}", circuit.n, self.n)));
        }
        if circuit.gates.len() > self.c {
            return Err(Error::InvalidCircuit(format!("circuit has {} gates, limit is {}", circuit.gates.len(), self.c)));
        }
        for op in &circuit.gates {
            let g = self
                .gate_set
                .gates
                .get(op.gate)
                .ok_or_else(|| Error::InvalidCircuit(format!("gate index {} outside the set", op.gate)))?;
            if op.targets.len() != g.arity {
                return Err(Error::InvalidCircuit(format!("gate `{}` needs {} targets", g.name, g.arity)));
            }
            for (i, q) in op.targets.iter().enumerate() {
                if *q >= self.n || op.targets[..i].contains(q) {
                    return Err(Error::InvalidCircuit(format!("bad target list {:?}", op.targets)));
                }
            }
        }
        Ok(())
    }

    pub fn encode(&self, circuit: &Circuit) -> Result<u64> {
        self.validate(circuit)?;
        let a = self.alphabet.len() as u64;
        let mut digits: u64 = 0;
        for op in &circuit.gates {
            let d = self.alphabet.iter().position(|x| x == op).expect("validated op is in the alphabet") as u64;
            digits = digits * a + d;
        }
        Ok(self.offsets[circuit.gates.len()] + digits)
    }

    pub fn decode(&self, code: u64) -> Result<Circuit> {
        if code >= self.size {
            return Err(Error::InvalidCode { code, size: self.size });
        }
        let len = (0..=self.c).rev().find(|l| self.offsets[*l] <= code).expect("offsets start at zero");
        let mut rest = code - self.offsets[len];
        let a = self.alphabet.len() as u64;
        let mut gates = vec![GateOp { gate: 0, targets: vec![] }; len];
        for slot in (0..len).rev() {
            gates[slot] = self.alphabet[(rest % a) as usize].clone();
            rest /= a;
        }
        Ok(Circuit { n: self.n, gates })
    }

    /// Dense matrix of a decoded circuit.
    pub fn build_unitary(&self, code: u64) -> Result<DenseUnitary> {
        let circuit = self.decode(code)?;
        circuit_unitary(&self.gate_set, &circuit)
    }

    /// `App |x,[C]⟩ = |U_C x,[C]⟩`: applies the decoded gate list to `target`.
    pub fn app(&self, code: u64, state: &StateVector, target: &str) -> Result<StateVector> {
        let circuit = self.decode(code)?;
        apply_circuit(&self.gate_set, &circuit, state, target, &|_| true, false)
    }
}

/// Dense matrix of a circuit, built column by column from basis states.
pub fn circuit_unitary(gate_set: &GateSet, circuit: &Circuit) -> Result<DenseUnitary> {
    let dim = 1usize << circuit.n;
    let layout = crate::statevec::RegisterLayout::new(&[("x", circuit.n)])?;
    let mut m = CMat::zeros(dim, dim);
    for col in 0..dim {
        let s = StateVector::basis(layout.clone(), &[("x", col)])?;
        let out = apply_circuit(gate_set, circuit, &s, "x", &|_| true, false)?;
        for (row, a) in out.amplitudes().iter().enumerate() {
            m[(row, col)] = *a;
        }
    }
    DenseUnitary::new(m)
}

/// Applies the gates of `circuit` (or their adjoints in reverse order) to the
/// target register on branches selected by `control`.
pub fn apply_circuit(
    gate_set: &GateSet,
    circuit: &Circuit,
    state: &StateVector,
    target: &str,
    control: &dyn Fn(usize) -> bool,
    inverse: bool,
) -> Result<StateVector> {
    let width = state.layout().register_width(target)?;
    if width != circuit.n {
        return Err(Error::Dimension(format!("circuit on {} qubits applied to register of width {width}", circuit.n)));
    }
    let mut s = state.clone();
    let ops: Box<dyn Iterator<Item = &GateOp>> =
        if inverse { Box::new(circuit.gates.iter().rev()) } else { Box::new(circuit.gates.iter()) };
    for op in ops {
        let g = &gate_set.gates()[op.gate];
        let u = if inverse { g.unitary.adjoint() } else { g.unitary.clone() };
        s = s.apply_on_qubits(&u, target, &op.targets, control)?;
    }
    Ok(s)
}

/// A device that can be applied, possibly conditionally, to a register.
/// Every application counts as one query.
pub trait Oracle: Send + Sync {
    fn qubits(&self) -> usize;
    /// Applies the device to `target` on branches where `control` holds.
    fn apply_where(&self, state: &StateVector, target: &str, control: &dyn Fn(usize) -> bool) -> Result<StateVector>;
    /// Applications made so far.
    fn queries(&self) -> u64;
}

/// A device whose inverse is also accessible (white-box circuits).
pub trait InvertibleOracle: Oracle {
    fn apply_inverse_where(&self, state: &StateVector, target: &str, control: &dyn Fn(usize) -> bool) -> Result<StateVector>;
}

/// White-box circuit: a code over a [`CodeSpace`], applied gate by gate.
#[derive(Debug)]
pub struct Program {
    gate_set: Arc<GateSet>,
    circuit: Circuit,
    queries: AtomicU64,
}

impl Program {
    pub fn from_code(space: &CodeSpace, code: u64) -> Result<Self> {
        Ok(Self::new(space.gate_set().clone(), space.decode(code)?))
    }

    pub fn new(gate_set: GateSet, circuit: Circuit) -> Self {
        Self { gate_set: Arc::new(gate_set), circuit, queries: AtomicU64::new(0) }
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn gate_set(&self) -> &GateSet {
        &self.gate_set
    }

    pub fn unitary(&self) -> Result<DenseUnitary> {
        circuit_unitary(&self.gate_set, &self.circuit)
    }
}

impl Oracle for Program {
    fn qubits(&self) -> usize {
        self.circuit.n
    }

    fn apply_where(&self, state: &StateVector, target: &str, control: &dyn Fn(usize) -> bool) -> Result<StateVector> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        apply_circuit(&self.gate_set, &self.circuit, state, target, control, false)
    }

    fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

impl InvertibleOracle for Program {
    fn apply_inverse_where(&self, state: &StateVector, target: &str, control: &dyn Fn(usize) -> bool) -> Result<StateVector> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        apply_circuit(&self.gate_set, &self.circuit, state, target, control, true)
    }
}

/// White-box device given by its dense matrix.
#[derive(Debug)]
pub struct MatrixDevice {
    u: DenseUnitary,
    u_inv: DenseUnitary,
    queries: AtomicU64,
}

impl MatrixDevice {
    pub fn new(u: DenseUnitary) -> Self {
        let u_inv = u.adjoint();
        Self { u, u_inv, queries: AtomicU64::new(0) }
    }

    pub fn unitary(&self) -> &DenseUnitary {
        &self.u
    }
}

impl Oracle for MatrixDevice {
    fn qubits(&self) -> usize {
        self.u.qubits()
    }

    fn apply_where(&self, state: &StateVector, target: &str, control: &dyn Fn(usize) -> bool) -> Result<StateVector> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        state.apply_where(&self.u, target, control)
    }

    fn queries(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

impl InvertibleOracle for MatrixDevice {
    fn apply_inverse_where(&self, state: &StateVector, target: &str, control: &dyn Fn(usize) -> bool) -> Result<StateVector> {
        self.queries.fetch_add(1, Ordering::Relaxed);
        state.apply_where(&self.u_inv, target, control)
    }
}

/// `U_cond |x,α⟩`: applies the device iff the one-qubit `control` register is 1.
pub fn u_cond(oracle: &dyn Oracle, state: &StateVector, control: &str, target: &str) -> Result<StateVector> {
    let (off, w) = state.layout().locate(control)?;
    if w != 1 {
        return Err(Error::Dimension(format!("control register `{control}` must have width 1")));
    }
    oracle.apply_where(state, target, &move |i| (i >> off) & 1 == 1)
}

/// `U_seq |x,a⟩ = |U^a x, a⟩`, realized as the cycle `j = 1 … L−1`
/// "apply U iff j ≤ a" (L−1 conditional applications).
pub fn u_seq(oracle: &dyn Oracle, state: &StateVector, counter: &str, target: &str) -> Result<StateVector> {
    let (off, w) = state.layout().locate(counter)?;
    let l = 1usize << w;
    let mask = l - 1;
    let mut s = state.clone();
    for j in 1..l {
        s = oracle.apply_where(&s, target, &move |i| (i >> off) & mask >= j)?;
    }
    Ok(s)
}

/// Inverse of [`u_seq`]; needs the inverse device.
pub fn u_seq_inverse(oracle: &dyn InvertibleOracle, state: &StateVector, counter: &str, target: &str) -> Result<StateVector> {
    let (off, w) = state.layout().locate(counter)?;
    let l = 1usize << w;
    let mask = l - 1;
    let mut s = state.clone();
    for j in (1..l).rev() {
        s = oracle.apply_inverse_where(&s, target, &move |i| (i >> off) & mask >= j)?;
    }
    Ok(s)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateEntry {
    pub name: String,
    pub targets: Vec<usize>,
}

/// On-disk circuit description `{n, gate_set, gates: [{name, targets}]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitFile {
    pub n: usize,
    pub gate_set: String,
    pub gates: Vec<GateEntry>,
}

impl CircuitFile {
    pub fn from_circuit(gate_set: &GateSet, circuit: &Circuit) -> Self {
        Self {
            n: circuit.n,
            gate_set: gate_set.name().to_string(),
            gates: circuit
                .gates
                .iter()
                .map(|op| GateEntry { name: gate_set.gates()[op.gate].name.clone(), targets: op.targets.clone() })
                .collect(),
        }
    }

    pub fn to_circuit(&self) -> Result<(GateSet, Circuit)> {
        let set = GateSet::by_name(&self.gate_set)?;
        let mut gates = Vec::with_capacity(self.gates.len());
        for e in &self.gates {
            let gate = set.index_of(&e.name).ok_or_else(|| Error::InvalidCircuit(format!("gate `{}` not in set `{}`", e.name, set.name())))?;
            let arity = set.gates()[gate].arity;
            if e.targets.len() != arity || e.targets.iter().any(|q| *q >= self.n) {
                return Err(Error::InvalidCircuit(format!("bad targets {:?} for `{}`", e.targets, e.name)));
            }
            gates.push(GateOp { gate, targets: e.targets.clone() });
        }
        Ok((set, Circuit { n: self.n, gates }))
    }
}
