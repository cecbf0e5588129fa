//! Frequency-revealing machinery: the Fourier transform on an ancilla, the
//! revealing operator `Rev = QFT · U_seq · QFT`, the turning operator `D`
//! and the restoring operator `Rest`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::{u_seq, u_seq_inverse, InvertibleOracle, Oracle};
use crate::error::{Error, Result};
use crate::linalg::{circ_dist, cis, CMat, C64};
use crate::spectral::{SparsityProfile, SpectralDecomposition};
use crate::statevec::{DenseUnitary, StateVector};

/// `QFT_L |s⟩ = L^{-1/2} Σ_l e^{−2πi sl/L} |l⟩`.
pub fn qft_matrix(l: usize) -> DenseUnitary {
    let s = C64::from(1.0 / (l as f64).sqrt());
    let m = CMat::from_fn(l, l, |r, c| cis(-(((r * c) % l) as f64) / l as f64) * s);
    DenseUnitary::new(m).expect("DFT is unitary")
}

fn register_size(state: &StateVector, register: &str) -> Result<usize> {
    Ok(1usize << state.layout().register_width(register)?)
}

/// Applies `QFT_L` to a register of width `log₂ L`.
pub fn qft(state: &StateVector, register: &str, l: usize) -> Result<StateVector> {
    if register_size(state, register)? != l {
        return Err(Error::Dimension(format!("register `{register}` does not have {l} basis states")));
    }
    state.apply(&qft_matrix(l), register)
}

/// Applies `QFT_L^{-1}`.
pub fn qft_inverse(state: &StateVector, register: &str, l: usize) -> Result<StateVector> {
    if register_size(state, register)? != l {
        return Err(Error::Dimension(format!("register `{register}` does not have {l} basis states")));
    }
    state.apply(&qft_matrix(l).adjoint(), register)
}

fn check_zero_ancilla(state: &StateVector, ancilla: &str) -> Result<()> {
    let p0 = state.distribution(ancilla)?[0];
    if p0 < 1.0 - 1e-9 {
        return Err(Error::Precondition(format!("ancilla `{ancilla}` is not |0⟩ (weight {p0:.3e})")));
    }
    Ok(())
}

/// `Rev` on a state whose ancilla is `|0⟩`; the ancilla size is the register size.
/// Costs `S − 1` queries.
pub fn rev(oracle: &dyn Oracle, state: &StateVector, ancilla: &str, target: &str) -> Result<StateVector> {
    check_zero_ancilla(state, ancilla)?;
    rev_unchecked(oracle, state, ancilla, target)
}

/// `Rev` on an arbitrary state.
pub fn rev_unchecked(oracle: &dyn Oracle, state: &StateVector, ancilla: &str, target: &str) -> Result<StateVector> {
    let s = register_size(state, ancilla)?;
    let f = qft_matrix(s);
    let x = state.apply(&f, ancilla)?;
    let x = u_seq(oracle, &x, ancilla, target)?;
    x.apply(&f, ancilla)
}

/// `Rev` with the first transform replaced by Walsh-Hadamard, valid on a zero ancilla.
pub fn rev_hadamard(oracle: &dyn Oracle, state: &StateVector, ancilla: &str, target: &str) -> Result<StateVector> {
    check_zero_ancilla(state, ancilla)?;
    let s = register_size(state, ancilla)?;
    let w = (s as f64).sqrt();
    let h = CMat::from_fn(s, s, |r, c| C64::from(if (r & c).count_ones() % 2 == 0 { 1.0 } else { -1.0 } / w));
    let x = state.apply(&DenseUnitary::new(h)?, ancilla)?;
    let x = u_seq(oracle, &x, ancilla, target)?;
    x.apply(&qft_matrix(s), ancilla)
}

/// `Rev^{-1}`; needs the inverse device.
pub fn rev_inverse(oracle: &dyn InvertibleOracle, state: &StateVector, ancilla: &str, target: &str) -> Result<StateVector> {
    let s = register_size(state, ancilla)?;
    let f = qft_matrix(s).adjoint();
    let x = state.apply(&f, ancilla)?;
    let x = u_seq_inverse(oracle, &x, ancilla, target)?;
    x.apply(&f, ancilla)
}

/// Ancilla distribution of `Rev` on an eigenvector of frequency `omega`:
/// `|S^{-1} Σ_a e^{2πia(ω − l/S)}|²`.
pub fn rev_kernel(omega: f64, size: usize) -> Vec<f64> {
    // Geometric series; δ within 1e-12 of an integer sums to S.
    (0..size)
        .map(|l| {
            let d = omega - l as f64 / size as f64;
            if (d - d.round()).abs() < 1e-12 {
                return 1.0;
            }
            let z = (C64::from(1.0) - cis(size as f64 * d)) / (C64::from(1.0) - cis(d));
            (z / size as f64).norm_sqr()
        })
        .collect()
}

/// Mass of [`rev_kernel`] within circular distance `window` of `omega`.
pub fn rev_mass_near(omega: f64, size: usize, window: f64) -> f64 {
    rev_kernel(omega, size)
        .iter()
        .enumerate()
        .filter(|(l, _)| circ_dist(*l as f64 / size as f64, omega) <= window + 1e-12)
        .map(|(_, p)| p)
        .sum()
}

/// How an entry of a [`FrequencyTable`] was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Oracle,
    Measured,
    Injected,
}

/// Fine approximations `h(l)/L` of the frequency anchored at each coarse index `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub m: usize,
    pub l: usize,
    pub provenance: Provenance,
    /// Non-anchor indices fall back to `h = l·L/M` (no correction) instead of failing.
    #[serde(default)]
    pub grid_fallback: bool,
    pub entries: BTreeMap<usize, usize>,
}

impl FrequencyTable {
    pub fn new(m: usize, l: usize, provenance: Provenance) -> Result<Self> {
        if !m.is_power_of_two() || !l.is_power_of_two() || l < m {
            return Err(Error::Invalid(format!("table sizes M = {m}, L = {l} must be powers of two with L ≥ M")));
        }
        Ok(Self { m, l, provenance, grid_fallback: false, entries: BTreeMap::new() })
    }

    /// Table whose entries are exactly the grid values.
    pub fn grid(m: usize, l: usize) -> Result<Self> {
        let mut t = Self::new(m, l, Provenance::Injected)?;
        for i in 0..m {
            t.entries.insert(i, i * (l / m));
        }
        Ok(t)
    }

    pub fn with_grid_fallback(mut self) -> Self {
        self.grid_fallback = true;
        self
    }

    pub fn insert(&mut self, coarse: usize, fine: usize) -> Result<()> {
        if coarse >= self.m || fine >= self.l {
            return Err(Error::Invalid(format!("entry {coarse} → {fine} outside M = {}, L = {}", self.m, self.l)));
        }
        self.entries.insert(coarse, fine);
        Ok(())
    }

    /// `h(l)`, or the grid value when the entry is absent and fallback is on.
    pub fn lookup(&self, coarse: usize) -> Result<usize> {
        match self.entries.get(&coarse) {
            Some(h) => Ok(*h),
            None if self.grid_fallback && coarse < self.m => Ok(coarse * (self.l / self.m)),
            None => Err(Error::MissingTableEntry(coarse)),
        }
    }

    pub fn is_anchor(&self, coarse: usize) -> bool {
        self.entries.contains_key(&coarse)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        let mut checked = Self::new(t.m, t.l, t.provenance)?;
        checked.grid_fallback = t.grid_fallback;
        for (k, v) in t.entries {
            checked.insert(k, v)?;
        }
        Ok(checked)
    }
}

/// `h(l) = round(L·ω)` for the midpoint `ω` of the group anchored at each `l`.
pub fn build_frequency_table(dec: &SpectralDecomposition, profile: &SparsityProfile) -> Result<FrequencyTable> {
    let mut t = FrequencyTable::new(profile.m, profile.l, Provenance::Oracle)?.with_grid_fallback();
    let f = dec.frequencies();
    for g in &profile.groups {
        let base = f[g.members[0]];
        let offs: Vec<f64> = g
            .members
            .iter()
            .map(|k| {
                let d = (f[*k] - base).rem_euclid(1.0);
                if d > 0.5 {
                    d - 1.0
                } else {
                    d
                }
            })
            .collect();
        let lo = offs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = offs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mid = (base + 0.5 * (lo + hi)).rem_euclid(1.0);
        let h = ((mid * profile.l as f64).round() as usize) % profile.l;
        t.insert(g.anchor, h)?;
    }
    Ok(t)
}

/// Parameters of the turning operator `D = Enh · D̃ · Enh`.
#[derive(Clone, Debug)]
pub struct Turning {
    pub table: FrequencyTable,
    /// Phase multiplier; `None` uses `S − 1` for an ancilla of `S` points.
    pub multiplier: Option<f64>,
    /// Register of width `log₂ L` that receives `h(l)` during `D̃`.
    pub scratch: Option<String>,
}

impl Turning {
    pub fn new(table: FrequencyTable) -> Self {
        Self { table, multiplier: None, scratch: None }
    }

    pub fn with_scratch(mut self, name: &str) -> Self {
        self.scratch = Some(name.to_string());
        self
    }

    pub fn with_multiplier(mut self, mult: f64) -> Self {
        self.multiplier = Some(mult);
        self
    }
}

/// Diagonal phase of `D̃` on coarse index `l` given the fine approximation `h`.
pub fn turning_phase(h: usize, l: usize, big_l: usize, m: usize, mult: f64) -> C64 {
    cis(-mult * (h as f64 / big_l as f64 - l as f64 / m as f64))
}

/// Applies `D` to the `ancilla` register, which must hold `M` points.
pub fn turning(state: &StateVector, d: &Turning, ancilla: &str) -> Result<StateVector> {
    let t = &d.table;
    let (off, w) = state.layout().locate(ancilla)?;
    if 1usize << w != t.m {
        return Err(Error::Dimension(format!("ancilla `{ancilla}` must hold M = {} points", t.m)));
    }
    let mask = t.m - 1;
    let mult = d.multiplier.unwrap_or((t.m - 1) as f64);
    let looked: Vec<Result<usize>> = (0..t.m).map(|l| t.lookup(l)).collect();
    // Only indices carrying amplitude need an entry.
    for (i, a) in state.amplitudes().iter().enumerate() {
        if a.norm_sqr() > 0.0 {
            if let Err(e) = &looked[(i >> off) & mask] {
                return Err(Error::MissingTableEntry(match e {
                    Error::MissingTableEntry(l) => *l,
                    _ => (i >> off) & mask,
                }));
            }
        }
    }
    let fine: Vec<usize> = looked.into_iter().map(|r| r.unwrap_or(0)).collect();
    match &d.scratch {
        None => Ok(state.apply_phase(|i| {
            let l = (i >> off) & mask;
            turning_phase(fine[l], l, t.l, t.m, mult)
        })),
        Some(name) => {
            let (soff, sw) = state.layout().locate(name)?;
            if 1usize << sw != t.l {
                return Err(Error::Dimension(format!("scratch `{name}` must hold L = {} points", t.l)));
            }
            let smask = t.l - 1;
            let enh = |i: usize| i ^ (fine[(i >> off) & mask] << soff);
            let x = state.permute(enh)?;
            let x = x.apply_phase(|i| {
                let l = (i >> off) & mask;
                turning_phase((i >> soff) & smask, l, t.l, t.m, mult)
            });
            x.permute(enh)
        }
    }
}

/// How `Rest` undoes a preceding `Rev`.
#[derive(Clone, Debug)]
pub enum RestStrategy {
    /// `Rest = Rev^{-1}`, white-box devices only.
    Inverse,
    /// `Rest = Rev · D`, black-box devices with a frequency table.
    Turning(Turning),
}

/// Restoring operator for a black-box device.
pub fn rest_turning(oracle: &dyn Oracle, state: &StateVector, ancilla: &str, target: &str, d: &Turning) -> Result<StateVector> {
    let x = turning(state, d, ancilla)?;
    rev_unchecked(oracle, &x, ancilla, target)
}

/// Restoring operator with the chosen strategy.
pub fn rest(oracle: &dyn InvertibleOracle, state: &StateVector, ancilla: &str, target: &str, strategy: &RestStrategy) -> Result<StateVector> {
    match strategy {
        RestStrategy::Inverse => rev_inverse(oracle, state, ancilla, target),
        RestStrategy::Turning(d) => rest_turning(oracle, state, ancilla, target, d),
    }
}
