//! Dense complex statevectors over named registers.
//!
//! The basis index of a composite state concatenates the register values in
//! layout order, the first register holding the most significant bits. Inside
//! a register, qubit 0 is its most significant bit.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, C64, ONE, ZERO};
use crate::rng::Rng;

/// Largest simulated width, in qubits.
pub const MAX_WIDTH: usize = 24;
/// Per-operation norm tolerance.
pub const NORM_TOL: f64 = 1e-9;
/// Unitarity tolerance checked when a [`DenseUnitary`] is built.
pub const UNITARY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub width: usize,
}

/// Ordered, named partition of the qubits of a state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterLayout {
    registers: Vec<Register>,
}

impl RegisterLayout {
    pub fn new(spec: &[(&str, usize)]) -> Result<Self> {
        let mut registers = Vec::with_capacity(spec.len());
        for (name, width) in spec {
            if *width == 0 {
                return Err(Error::Layout(format!("register `{name}` has zero width")));
            }
            if registers.iter().any(|r: &Register| r.name == *name) {
                return Err(Error::Layout(format!("duplicate register `{name}`")));
            }
            registers.push(Register { name: name.to_string(), width: *width });
        }
        let layout = Self { registers };
        if layout.width() > MAX_WIDTH {
            return Err(Error::WidthCap(layout.width(), MAX_WIDTH));
        }
        Ok(layout)
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    /// Total width ν.
    pub fn width(&self) -> usize {
        self.registers.iter().map(|r| r.width).sum()
    }

    pub fn dim(&self) -> usize {
        1usize << self.width()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.registers.iter().any(|r| r.name == name)
    }

    /// `(bit offset, width)` of a register.
    pub fn locate(&self, name: &str) -> Result<(usize, usize)> {
        let mut offset = self.width();
        for r in &self.registers {
            offset -= r.width;
            if r.name == name {
                return Ok((offset, r.width));
            }
        }
        Err(Error::UnknownRegister(name.to_string()))
    }

    pub fn register_width(&self, name: &str) -> Result<usize> {
        Ok(self.locate(name)?.1)
    }

    /// Value held by `name` in basis state `index`.
    pub fn value(&self, index: usize, name: &str) -> Result<usize> {
        let (off, w) = self.locate(name)?;
        Ok((index >> off) & ((1 << w) - 1))
    }

    /// Splits a basis index into per-register values.
    pub fn decompose(&self, index: usize) -> Vec<usize> {
        let mut offset = self.width();
        self.registers
            .iter()
            .map(|r| {
                offset -= r.width;
                (index >> offset) & ((1 << r.width) - 1)
            })
            .collect()
    }

    /// Inverse of [`decompose`](Self::decompose).
    pub fn compose(&self, values: &[usize]) -> Result<usize> {
        if values.len() != self.registers.len() {
            return Err(Error::Dimension(format!(
                "expected {} register values, got {}",
                self.registers.len(),
                values.len()
            )));
        }
        let mut index = 0usize;
        for (r, v) in self.registers.iter().zip(values) {
            if *v >= 1 << r.width {
                return Err(Error::Dimension(format!("value {v} does not fit register `{}`", r.name)));
            }
            index = (index << r.width) | v;
        }
        Ok(index)
    }

    /// Global bit positions of the register qubits, qubit 0 first.
    pub fn qubit_bits(&self, name: &str) -> Result<Vec<usize>> {
        let (off, w) = self.locate(name)?;
        Ok((0..w).map(|q| off + w - 1 - q).collect())
    }
}

/// Square unitary matrix acting on a power-of-two dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseUnitary {
    m: CMat,
}

impl DenseUnitary {
    /// Checks `‖U†U − I‖ ≤ 1e-8` in operator norm.
    pub fn new(m: CMat) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() || n == 0 || !n.is_power_of_two() {
            return Err(Error::Dimension(format!("unitary must be square with power-of-two size, got {}x{}", m.nrows(), m.ncols())));
        }
        let dev = crate::linalg::op_norm(&(m.adjoint() * &m - CMat::identity(n, n)));
        if dev > UNITARY_TOL {
            return Err(Error::NotUnitary(dev));
        }
        Ok(Self { m })
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: CMat::identity(dim, dim) }
    }

    /// Diagonal unitary `diag(e^{2πiω_k})`.
    pub fn from_frequencies(freqs: &[f64]) -> Result<Self> {
        let n = freqs.len();
        let mut m = CMat::zeros(n, n);
        for (k, w) in freqs.iter().enumerate() {
            m[(k, k)] = crate::linalg::cis(*w);
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &CMat {
        &self.m
    }

    pub fn into_matrix(self) -> CMat {
        self.m
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    /// `self · other` (other acts first).
    pub fn compose(&self, other: &DenseUnitary) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("cannot compose {} with {}", self.dim(), other.dim())));
        }
        Ok(Self { m: &self.m * &other.m })
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut acc = CMat::identity(self.dim(), self.dim());
        for _ in 0..k {
            acc = &self.m * acc;
        }
        Self { m: acc }
    }
}

/// Precomputed gather pattern for an operator acting on a list of bits.
struct Gather {
    offsets: Vec<usize>,
    mask: usize,
}

impl Gather {
    fn new(bits: &[usize]) -> Self {
        let r = bits.len();
        let offsets = (0..1usize << r)
            .map(|s| {
                bits.iter()
                    .enumerate()
                    .filter(|(i, _)| (s >> (r - 1 - i)) & 1 == 1)
                    .map(|(_, b)| 1usize << b)
                    .sum()
            })
            .collect();
        let mask = bits.iter().map(|b| 1usize << b).sum();
        Self { offsets, mask }
    }
}

/// Normalized amplitude vector over a [`RegisterLayout`].
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    layout: RegisterLayout,
    amps: Vec<C64>,
}

impl StateVector {
    /// All registers at zero.
    pub fn zero(layout: RegisterLayout) -> Self {
        let mut amps = vec![ZERO; layout.dim()];
        amps[0] = ONE;
        Self { layout, amps }
    }

    /// Basis state with the given register values; unnamed registers are zero.
    pub fn basis(layout: RegisterLayout, values: &[(&str, usize)]) -> Result<Self> {
        let mut index = 0usize;
        for (name, v) in values {
            let (off, w) = layout.locate(name)?;
            if *v >= 1 << w {
                return Err(Error::Dimension(format!("value {v} does not fit register `{name}`")));
            }
            index |= v << off;
        }
        let mut amps = vec![ZERO; layout.dim()];
        amps[index] = ONE;
        Ok(Self { layout, amps })
    }

    /// Wraps raw amplitudes; they must already be normalized.
    pub fn from_amplitudes(layout: RegisterLayout, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::Dimension(format!("expected {} amplitudes, got {}", layout.dim(), amps.len())));
        }
        let s = Self { layout, amps };
        let n = s.norm();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n));
        }
        Ok(s)
    }

    /// Product state with the given per-register vectors; unnamed registers are zero.
    pub fn product(layout: RegisterLayout, parts: &[(&str, &CVec)]) -> Result<Self> {
        let mut amps = vec![ZERO; layout.dim()];
        amps[0] = ONE;
        let mut s = Self { layout, amps };
        for (name, v) in parts {
            let (off, w) = s.layout.locate(name)?;
            if v.len() != 1 << w {
                return Err(Error::Dimension(format!("register `{name}` has dimension {}, vector has {}", 1 << w, v.len())));
            }
            let nv = v.norm();
            if (nv - 1.0).abs() > NORM_TOL {
                return Err(Error::NotNormalized(nv));
            }
            let mut out = vec![ZERO; s.amps.len()];
            for (i, a) in s.amps.iter().enumerate() {
                if *a == ZERO || (i >> off) & ((1 << w) - 1) != 0 {
                    continue;
                }
                for (x, c) in v.iter().enumerate() {
                    out[i | (x << off)] += a * c;
                }
            }
            s.amps = out;
        }
        Ok(s)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.layout != other.layout {
            return Err(Error::Dimension("inner product of states with different layouts".into()));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    /// Euclidean distance between two states over the same layout.
    pub fn distance(&self, other: &StateVector) -> Result<f64> {
        if self.layout != other.layout {
            return Err(Error::Dimension("distance between states with different layouts".into()));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt())
    }

    fn checked(self) -> Self {
        debug_assert!((self.norm() - 1.0).abs() <= NORM_TOL, "norm drifted to {}", self.norm());
        self
    }

    /// Applies `u` to the listed bits (most significant first) on every branch
    /// where `control` holds. `control` sees the index with the target bits cleared.
    pub fn apply_bits_where(&self, u: &DenseUnitary, bits: &[usize], control: impl Fn(usize) -> bool) -> Result<Self> {
        if u.dim() != 1 << bits.len() {
            return Err(Error::Dimension(format!("operator of dimension {} on {} qubits", u.dim(), bits.len())));
        }
        let g = Gather::new(bits);
        let m = u.matrix();
        let k = u.dim();
        let mut out = self.amps.clone();
        let mut buf = vec![ZERO; k];
        for base in 0..self.amps.len() {
            if base & g.mask != 0 || !control(base) {
                continue;
            }
            for (s, o) in g.offsets.iter().enumerate() {
                buf[s] = self.amps[base | o];
            }
            for (r, o) in g.offsets.iter().enumerate() {
                let mut acc = ZERO;
                for (c, b) in buf.iter().enumerate() {
                    acc += m[(r, c)] * b;
                }
                out[base | o] = acc;
            }
        }
        Ok(Self { layout: self.layout.clone(), amps: out }.checked())
    }

    /// `U ⊗ I` on the target register.
    pub fn apply(&self, u: &DenseUnitary, target: &str) -> Result<Self> {
        self.apply_where(u, target, |_| true)
    }

    /// Applies `u` to `target` on branches selected by `control`.
    pub fn apply_where(&self, u: &DenseUnitary, target: &str, control: impl Fn(usize) -> bool) -> Result<Self> {
        let bits = self.layout.qubit_bits(target)?;
        if u.dim() != 1 << bits.len() {
            return Err(Error::Dimension(format!(
                "operator of dimension {} on register `{target}` of width {}",
                u.dim(),
                bits.len()
            )));
        }
        self.apply_bits_where(u, &bits, control)
    }

    /// Applies `u` to `target` iff the one-qubit `control` register is 1.
    pub fn apply_controlled(&self, u: &DenseUnitary, control: &str, target: &str) -> Result<Self> {
        let (off, w) = self.layout.locate(control)?;
        if w != 1 {
            return Err(Error::Dimension(format!("control register `{control}` must have width 1, has {w}")));
        }
        if control == target {
            return Err(Error::Dimension("control and target coincide".into()));
        }
        self.apply_where(u, target, move |i| (i >> off) & 1 == 1)
    }

    /// Applies `u` to the given qubits of a register.
    pub fn apply_on_qubits(&self, u: &DenseUnitary, target: &str, qubits: &[usize], control: impl Fn(usize) -> bool) -> Result<Self> {
        let all = self.layout.qubit_bits(target)?;
        let mut bits = Vec::with_capacity(qubits.len());
        for q in qubits {
            let b = *all.get(*q).ok_or_else(|| Error::Dimension(format!("qubit {q} outside register `{target}`")))?;
            if bits.contains(&b) {
                return Err(Error::Dimension(format!("qubit {q} repeated")));
            }
            bits.push(b);
        }
        self.apply_bits_where(u, &bits, control)
    }

    /// Multiplies each basis amplitude by a unit-modulus phase.
    pub fn apply_phase(&self, phase: impl Fn(usize) -> C64) -> Self {
        let amps = self.amps.iter().enumerate().map(|(i, a)| a * phase(i)).collect();
        Self { layout: self.layout.clone(), amps }.checked()
    }

    /// Permutes basis states; `f` must be a bijection of the index set.
    pub fn permute(&self, f: impl Fn(usize) -> usize) -> Result<Self> {
        let mut out = vec![ZERO; self.amps.len()];
        let mut seen = vec![false; self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let j = f(i);
            if j >= out.len() || seen[j] {
                return Err(Error::Invalid("basis map is not a bijection".into()));
            }
            seen[j] = true;
            out[j] = *a;
        }
        Ok(Self { layout: self.layout.clone(), amps: out })
    }

    /// Exact marginal distribution of a register.
    pub fn distribution(&self, name: &str) -> Result<Vec<f64>> {
        let (off, w) = self.layout.locate(name)?;
        let mut p = vec![0.0; 1 << w];
        for (i, a) in self.amps.iter().enumerate() {
            p[(i >> off) & ((1 << w) - 1)] += a.norm_sqr();
        }
        Ok(p)
    }

    /// Measures a register, returning the outcome and the collapsed state.
    pub fn measure(&self, name: &str, rng: &mut Rng) -> Result<(usize, StateVector)> {
        let p = self.distribution(name)?;
        let u: f64 = rng.gen::<f64>() * p.iter().sum::<f64>();
        let mut acc = 0.0;
        let mut outcome = None;
        let mut last_nonzero = 0;
        for (v, pv) in p.iter().enumerate() {
            if *pv <= 0.0 {
                continue;
            }
            last_nonzero = v;
            acc += pv;
            if u < acc {
                outcome = Some(v);
                break;
            }
        }
        let outcome = outcome.unwrap_or(last_nonzero);
        let collapsed = self.project(name, outcome)?.1.expect("nonzero branch");
        Ok((outcome, collapsed))
    }

    /// Probability of `value` in `name` and the renormalized projected state.
    pub fn project(&self, name: &str, value: usize) -> Result<(f64, Option<StateVector>)> {
        let (off, w) = self.layout.locate(name)?;
        let mask = (1 << w) - 1;
        let mut amps = self.amps.clone();
        let mut prob = 0.0;
        for (i, a) in amps.iter_mut().enumerate() {
            if (i >> off) & mask == value {
                prob += a.norm_sqr();
            } else {
                *a = ZERO;
            }
        }
        if prob <= 1e-300 {
            return Ok((0.0, None));
        }
        let s = C64::from(1.0 / prob.sqrt());
        for a in amps.iter_mut() {
            *a *= s;
        }
        Ok((prob, Some(Self { layout: self.layout.clone(), amps })))
    }

    /// Appends zeroed registers to the layout.
    pub fn extend(&self, spec: &[(&str, usize)]) -> Result<Self> {
        let mut all: Vec<(&str, usize)> = self.layout.registers.iter().map(|r| (r.name.as_str(), r.width)).collect();
        all.extend_from_slice(spec);
        let layout = RegisterLayout::new(&all)?;
        let shift: usize = spec.iter().map(|(_, w)| w).sum();
        let mut amps = vec![ZERO; layout.dim()];
        for (i, a) in self.amps.iter().enumerate() {
            amps[i << shift] = *a;
        }
        Ok(Self { layout, amps })
    }

    /// Vector of the `target` register when every other register is in a fixed basis state.
    pub fn register_vector(&self, target: &str) -> Result<CVec> {
        let (off, w) = self.layout.locate(target)?;
        let mask = ((1 << w) - 1) << off;
        let mut rest = None;
        let mut v = CVec::zeros(1 << w);
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm_sqr() < 1e-24 {
                continue;
            }
            let r = i & !mask;
            match rest {
                None => rest = Some(r),
                Some(r0) if r0 != r => return Err(Error::Precondition(format!("register `{target}` is entangled with the rest"))),
                _ => {}
            }
            v[(i & mask) >> off] = *a;
        }
        Ok(v)
    }

    /// Debug listing of `(index, re, im)` for amplitudes with magnitude ≥ 1e-12.
    pub fn dump(&self) -> Vec<(usize, f64, f64)> {
        self.amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm() >= 1e-12)
            .map(|(i, a)| (i, a.re, a.im))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cis, haar_unitary, haar_vector};
    use crate::rng::Streams;
    use proptest::prelude::*;

    fn x_gate() -> DenseUnitary {
        DenseUnitary::new(CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])).unwrap()
    }

    fn two_regs() -> RegisterLayout {
        RegisterLayout::new(&[("a", 1), ("b", 1)]).unwrap()
    }

    #[test]
    fn layout_rejects_duplicates_and_zero_width() {
        assert!(RegisterLayout::new(&[("a", 1), ("a", 2)]).is_err());
        assert!(RegisterLayout::new(&[("a", 0)]).is_err());
        assert!(matches!(RegisterLayout::new(&[("a", 25)]), Err(Error::WidthCap(25, 24))));
    }

    #[test]
    fn layout_index_roundtrip() {
        let l = RegisterLayout::new(&[("x", 2), ("y", 3), ("z", 1)]).unwrap();
        for i in 0..l.dim() {
            assert_eq!(l.compose(&l.decompose(i)).unwrap(), i);
        }
        assert_eq!(l.value(0b10_101_1, "y").unwrap(), 0b101);
    }

    #[test]
    fn identity_leaves_basis_state() {
        let s = StateVector::zero(two_regs());
        let out = s.apply(&DenseUnitary::identity(2), "a").unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn x_flips_register() {
        let l = RegisterLayout::new(&[("r", 1)]).unwrap();
        let out = StateVector::zero(l.clone()).apply(&x_gate(), "r").unwrap();
        assert_eq!(out, StateVector::basis(l, &[("r", 1)]).unwrap());
    }

    #[test]
    fn random_unitary_keeps_norm_and_matches_matrix_product() {
        let mut rng = Streams::new(3).stream("sv", 0);
        let l = RegisterLayout::new(&[("q", 2)]).unwrap();
        let s = StateVector::from_amplitudes(l.clone(), vec![C64::from(0.5); 4]).unwrap();
        let u = DenseUnitary::new(haar_unitary(4, &mut rng)).unwrap();
        let out = s.apply(&u, "q").unwrap();
        assert!((out.norm() - 1.0).abs() < 1e-9);
        let expect = u.matrix() * CVec::from_vec(vec![C64::from(0.5); 4]);
        for i in 0..4 {
            assert!((out.amplitudes()[i] - expect[i]).norm() < 1e-12);
        }
    }

    #[test]
    fn non_unitary_rejected() {
        let m = CMat::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(DenseUnitary::new(m), Err(Error::NotUnitary(_))));
        let s = StateVector::zero(two_regs());
        assert!(s.apply(&DenseUnitary::identity(4), "a").is_err());
    }

    #[test]
    fn controlled_respects_control_value() {
        let l = RegisterLayout::new(&[("c", 1), ("t", 1)]).unwrap();
        let off = StateVector::zero(l.clone());
        assert_eq!(off.apply_controlled(&x_gate(), "c", "t").unwrap(), off);
        let on = StateVector::basis(l.clone(), &[("c", 1)]).unwrap();
        let flipped = on.apply_controlled(&x_gate(), "c", "t").unwrap();
        assert_eq!(flipped, StateVector::basis(l, &[("c", 1), ("t", 1)]).unwrap());
    }

    #[test]
    fn controlled_phase_gives_relative_phase() {
        // Oracle: the 2x2 block matrix diag(1, e^{2πiω}) on the control for an eigenvector target.
        let omega = 0.3;
        let l = RegisterLayout::new(&[("c", 1), ("t", 1)]).unwrap();
        let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        let plus = CVec::from_vec(vec![h, h]);
        let e1 = CVec::from_vec(vec![ZERO, ONE]);
        let s = StateVector::product(l, &[("c", &plus), ("t", &e1)]).unwrap();
        let u = DenseUnitary::new(CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, cis(omega)])).unwrap();
        let out = s.apply_controlled(&u, "c", "t").unwrap();
        let a0 = out.amplitudes()[0b01];
        let a1 = out.amplitudes()[0b11];
        assert!((a1 / a0 - cis(omega)).norm() < 1e-12);
    }

    #[test]
    fn measure_basis_state_is_deterministic() {
        let l = RegisterLayout::new(&[("r", 3)]).unwrap();
        let s = StateVector::basis(l, &[("r", 5)]).unwrap();
        let mut rng = Streams::new(1).stream("m", 0);
        for _ in 0..10 {
            assert_eq!(s.measure("r", &mut rng).unwrap().0, 5);
        }
    }

    #[test]
    fn measure_frequency_within_binomial_interval() {
        let l = RegisterLayout::new(&[("r", 1)]).unwrap();
        let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
        let s = StateVector::from_amplitudes(l, vec![h, h]).unwrap();
        let mut rng = Streams::new(11).stream("m", 0);
        let zeros = (0..10_000).filter(|_| s.measure("r", &mut rng).unwrap().0 == 0).count();
        let f = zeros as f64 / 1e4;
        assert!((0.48..=0.52).contains(&f), "{f}");
    }

    #[test]
    fn measuring_one_register_preserves_other_marginal() {
        // Oracle: partial trace of a product state leaves the other factor unchanged.
        let mut rng = Streams::new(5).stream("m", 0);
        let l = RegisterLayout::new(&[("a", 2), ("b", 2)]).unwrap();
        let va = haar_vector(4, &mut rng);
        let vb = haar_vector(4, &mut rng);
        let s = StateVector::product(l, &[("a", &va), ("b", &vb)]).unwrap();
        let (_, c) = s.measure("a", &mut rng).unwrap();
        let pb = c.distribution("b").unwrap();
        for i in 0..4 {
            assert!((pb[i] - vb[i].norm_sqr()).abs() < 1e-12);
        }
    }

    #[test]
    fn distribution_trivial_cases() {
        let l = RegisterLayout::new(&[("r", 2)]).unwrap();
        assert_eq!(StateVector::zero(l.clone()).distribution("r").unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let u = StateVector::from_amplitudes(l, vec![C64::from(0.5); 4]).unwrap();
        for p in u.distribution("r").unwrap() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn empirical_frequencies_match_distribution() {
        let mut rng = Streams::new(9).stream("m", 0);
        let l = RegisterLayout::new(&[("a", 2), ("b", 1)]).unwrap();
        let v = haar_vector(8, &mut rng);
        let s = StateVector::from_amplitudes(l, v.iter().cloned().collect()).unwrap();
        let p = s.distribution("a").unwrap();
        let n = 20_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[s.measure("a", &mut rng).unwrap().0] += 1;
        }
        for i in 0..4 {
            let sigma = (p[i] * (1.0 - p[i]) / n as f64).sqrt();
            assert!((counts[i] as f64 / n as f64 - p[i]).abs() <= 3.0 * sigma + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn apply_is_linear(seed in 0u64..1000, ar in -1.0f64..1.0, ai in -1.0f64..1.0) {
            let mut rng = Streams::new(seed).stream("lin", 0);
            let l = RegisterLayout::new(&[("a", 1), ("b", 2)]).unwrap();
            let u = DenseUnitary::new(haar_unitary(4, &mut rng)).unwrap();
            let x = haar_vector(8, &mut rng);
            let y = haar_vector(8, &mut rng);
            let alpha = C64::new(ar, ai);
            let beta = C64::new(0.3, -0.2);
            let mut z = &x * alpha + &y * beta;
            let nz = z.norm();
            z /= C64::from(nz);
            let sx = StateVector::from_amplitudes(l.clone(), x.iter().cloned().collect()).unwrap().apply(&u, "b").unwrap();
            let sy = StateVector::from_amplitudes(l.clone(), y.iter().cloned().collect()).unwrap().apply(&u, "b").unwrap();
            let sz = StateVector::from_amplitudes(l, z.iter().cloned().collect()).unwrap().apply(&u, "b").unwrap();
            for i in 0..8 {
                let lhs = sz.amplitudes()[i] * C64::from(nz);
                let rhs = sx.amplitudes()[i] * alpha + sy.amplitudes()[i] * beta;
                prop_assert!((lhs - rhs).norm() < 1e-9);
            }
        }

        #[test]
        fn norm_preserved_by_every_operation(seed in 0u64..1000) {
            let mut rng = Streams::new(seed).stream("norm", 0);
            let l = RegisterLayout::new(&[("c", 1), ("t", 2)]).unwrap();
            let v = haar_vector(8, &mut rng);
            let s = StateVector::from_amplitudes(l, v.iter().cloned().collect()).unwrap();
            let u = DenseUnitary::new(haar_unitary(4, &mut rng)).unwrap();
            let a = s.apply(&u, "t").unwrap();
            let b = a.apply_controlled(&u, "c", "t").unwrap();
            let (_, c) = b.measure("t", &mut rng).unwrap();
            for st in [a, b, c] {
                prop_assert!((st.norm() - 1.0).abs() <= NORM_TOL);
            }
        }
    }
}
