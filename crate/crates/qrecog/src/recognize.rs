//! Eigenvalue recognition at fixed precision: the approximate eigenspace
//! reflection, the concentrating state and the accept/reject decision.
//!
//! Two backends share the per-register randomness (start vector, stopping
//! time, readout uniform). The circuit backend simulates the registers
//! coherently through the device; the projector backend replaces the
//! approximate reflection by the exact one and reads frequencies from the
//! revealing kernel.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplify::{Reflection, StoppingPolicy};
use crate::circuit::{MatrixDevice, Oracle};
use crate::error::{Error, Result};
use crate::linalg::{circ_dist, haar_vector, projection_weight, CMat, CVec, C64};
use crate::phase::{rev, rev_inverse, rev_kernel, rev_unchecked};
use crate::report::{Queries, BLACK_BOX, EIGEN_REFLECTIONS, READOUTS, START_REFLECTIONS};
use crate::rng::Streams;
use crate::spectral::{decompose, eigenspace_basis, SparsityProfile, SpectralDecomposition};
use crate::statevec::{DenseUnitary, RegisterLayout, StateVector, MAX_WIDTH};

/// Simulation mode for the multi-register constructions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Circuit,
    Projector,
}

/// A unitary under study with its exact spectrum (used by the projector
/// backend and by tests, never by the circuit backend).
#[derive(Clone, Debug)]
pub struct Device {
    unitary: DenseUnitary,
    dec: SpectralDecomposition,
}

impl Device {
    pub fn new(unitary: DenseUnitary) -> Result<Self> {
        let dec = decompose(&unitary)?;
        Ok(Self { unitary, dec })
    }

    pub fn unitary(&self) -> &DenseUnitary {
        &self.unitary
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.dec
    }

    pub fn dim(&self) -> usize {
        self.unitary.dim()
    }

    /// Fresh counting oracle for the circuit backend.
    pub fn oracle(&self) -> MatrixDevice {
        MatrixDevice::new(self.unitary.clone())
    }
}

/// Candidate frequency `omega / L` with the recognition parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenQuery {
    /// Candidate on the fine grid.
    pub omega: usize,
    pub m: usize,
    pub l: usize,
    /// Copies `v` of the revealing register inside the approximate reflection.
    pub copies: usize,
    /// Registers `h` of the concentrating state.
    pub registers: usize,
    /// Acceptance threshold on the fraction of matching registers.
    pub rho: f64,
    pub policy: StoppingPolicy,
    pub backend: Backend,
}

impl EigenQuery {
    /// Query for the coarse candidate `l/M` with `L = 16M` and default thresholds.
    pub fn coarse(l_coarse: usize, m: usize) -> Self {
        let l = 16 * m;
        Self {
            omega: l_coarse * 16,
            m,
            l,
            copies: 1,
            registers: 32,
            rho: 5.0 / 32.0,
            policy: StoppingPolicy::default(),
            backend: Backend::Projector,
        }
    }

    pub fn frequency(&self) -> f64 {
        self.omega as f64 / self.l as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_power_of_two() || !self.l.is_power_of_two() || self.l < self.m {
            return Err(Error::Invalid(format!("M = {}, L = {} must be powers of two with L ≥ M", self.m, self.l)));
        }
        if self.omega >= self.l {
            return Err(Error::Invalid(format!("candidate {} outside the fine grid of size {}", self.omega, self.l)));
        }
        if self.copies == 0 || self.registers == 0 {
            return Err(Error::Invalid("copies and registers must be at least 1".into()));
        }
        if !(self.rho > 0.0 && self.rho < 7.0 / 32.0) {
            return Err(Error::Invalid(format!("threshold {} outside (0, 7/32)", self.rho)));
        }
        Ok(())
    }

    /// Whether a fine readout `l` matches the candidate.
    pub fn matches(&self, l: usize) -> bool {
        circ_dist(l as f64 / self.l as f64, self.frequency()) <= 1.0 / self.l as f64 + 1e-12
    }

    /// Black-box cost of one approximate reflection.
    pub fn reflection_cost(&self) -> u64 {
        (2 * self.copies * (self.l - 1)) as u64
    }
}

/// Basis of `E_ω`: the groups near the candidate when the spectrum is sparse
/// at `(M, L)`, otherwise every eigenvector within `1/L`.
pub fn eigenspace(dev: &Device, q: &EigenQuery) -> CMat {
    match SparsityProfile::new(&dev.dec, q.m, q.l) {
        Ok(p) => eigenspace_basis(&dev.dec, &p, q.frequency()),
        Err(_) => dev.dec.window_basis(q.frequency(), 1.0 / q.l as f64),
    }
}

fn ancilla_names(v: usize) -> Vec<String> {
    (0..v).map(|j| format!("a{j}")).collect()
}

/// Layout of the main register plus `v` revealing ancillas.
pub fn circuit_layout(n: usize, q: &EigenQuery) -> Result<RegisterLayout> {
    let p = q.l.trailing_zeros() as usize;
    let width = n + (q.copies + 1) * p;
    if width > MAX_WIDTH {
        return Err(Error::WidthCap(width, MAX_WIDTH));
    }
    let names = ancilla_names(q.copies);
    let mut spec: Vec<(&str, usize)> = vec![("x", n)];
    spec.extend(names.iter().map(|s| (s.as_str(), p)));
    RegisterLayout::new(&spec)
}

/// `Ĩ_{E_ω} = ⊗Rest_j · Sign_ω · ⊗Rev_j` on the main register `x` with
/// ancillas `a0 … a{v−1}`; `Rest_j = Rev_j^{-1}`.
pub fn reflect_eigenspace_circuit(oracle: &MatrixDevice, state: &StateVector, q: &EigenQuery) -> Result<StateVector> {
    let names = ancilla_names(q.copies);
    let mut s = state.clone();
    for a in &names {
        s = rev_unchecked(oracle, &s, a, "x")?;
    }
    let locs: Vec<(usize, usize)> = names.iter().map(|a| s.layout().locate(a)).collect::<Result<_>>()?;
    let v = q.copies;
    s = s.apply_phase(|i| {
        let hits = locs.iter().filter(|(off, w)| q.matches((i >> off) & ((1 << w) - 1))).count();
        if 2 * hits >= v {
            C64::from(-1.0)
        } else {
            C64::from(1.0)
        }
    });
    for a in names.iter().rev() {
        s = rev_inverse(oracle, &s, a, "x")?;
    }
    Ok(s)
}

/// Exact `I_{E_ω}` on a vector.
pub fn reflect_eigenspace_projector(v: &CVec, basis: &CMat) -> CVec {
    Reflection::Subspace(basis.clone()).apply(v)
}

/// Per-register record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegisterOutcome {
    pub t: usize,
    /// `‖P_{E_ω} χ‖²` for the concentrated state (projector backend; for the
    /// circuit backend, of the main register's reduced state).
    pub overlap: f64,
    /// Probability that the readout matches the candidate.
    pub match_probability: f64,
    pub matched: bool,
}

/// Readout distribution of one register plus its overlap and black-box cost.
#[derive(Clone, Debug)]
pub struct RegisterRun {
    pub t: usize,
    pub overlap: f64,
    pub readout: Vec<f64>,
    pub black_box: u64,
}

/// Revealing kernels of every distinct frequency at the fine size.
pub struct KernelCache {
    kernels: Vec<Vec<f64>>,
}

impl KernelCache {
    pub fn new(dec: &SpectralDecomposition, l: usize) -> Self {
        Self { kernels: dec.frequencies().iter().map(|w| rev_kernel(*w, l)).collect() }
    }
}

/// Concentrated vector `(I_ā I_E)^t ā` (exact reflection).
pub fn concentrate_projector(a: &CVec, basis: &CMat, t: usize) -> CVec {
    crate::amplify::grover_iterate(a, &Reflection::Subspace(basis.clone()), &Reflection::Vector(a.clone()), t)
}

/// Fine readout distribution of a main-register vector.
pub fn readout_projector(dec: &SpectralDecomposition, kernels: &KernelCache, chi: &CVec, l: usize) -> Vec<f64> {
    let mut out = vec![0.0; l];
    for (k, kern) in kernels.kernels.iter().enumerate() {
        let w = projection_weight(dec.basis(k), chi);
        for (o, p) in out.iter_mut().zip(kern) {
            *o += w * p;
        }
    }
    out
}

/// One register on the projector backend.
pub fn run_register_projector(dev: &Device, q: &EigenQuery, basis: &CMat, kernels: &KernelCache, a: &CVec, t: usize) -> RegisterRun {
    let chi = concentrate_projector(a, basis, t);
    RegisterRun {
        t,
        overlap: projection_weight(basis, &chi),
        readout: readout_projector(&dev.dec, kernels, &chi, q.l),
        black_box: t as u64 * q.reflection_cost() + (q.l - 1) as u64,
    }
}

/// One register on the circuit backend: coherent main register plus `v`
/// ancillas, then a revealing run on a fresh readout ancilla.
pub fn run_register_circuit(dev: &Device, q: &EigenQuery, a: &CVec, t: usize) -> Result<RunWithState> {
    let n = dev.unitary.qubits();
    let layout = circuit_layout(n, q)?;
    let oracle = dev.oracle();
    let refl_a = crate::statevec::DenseUnitary::new(Reflection::Vector(a.clone()).matrix(a.len()))?;
    let mut s = StateVector::product(layout, &[("x", a)])?;
    for _ in 0..t {
        s = reflect_eigenspace_circuit(&oracle, &s, q)?;
        s = s.apply(&refl_a, "x")?;
    }
    let p = q.l.trailing_zeros() as usize;
    let with_r = s.extend(&[("r", p)])?;
    let out = rev(&oracle, &with_r, "r", "x")?;
    let readout = out.distribution("r")?;
    Ok(RunWithState { run: RegisterRun { t, overlap: f64::NAN, readout, black_box: oracle.queries() }, state: s })
}

/// Circuit-backend register result with the pre-readout state.
pub struct RunWithState {
    pub run: RegisterRun,
    pub state: StateVector,
}

/// Weight of the main register of `state` in the span of `basis` (reduced state).
pub fn main_overlap(state: &StateVector, basis: &CMat) -> Result<f64> {
    let (off, w) = state.layout().locate("x")?;
    let n = 1usize << w;
    let mask = n - 1;
    let mut total = 0.0;
    // Group amplitudes by the other registers' value.
    let mut branches: std::collections::BTreeMap<usize, CVec> = std::collections::BTreeMap::new();
    for (i, amp) in state.amplitudes().iter().enumerate() {
        if amp.norm_sqr() == 0.0 {
            continue;
        }
        let key = i & !(mask << off);
        branches.entry(key).or_insert_with(|| CVec::zeros(n))[(i >> off) & mask] = *amp;
    }
    for v in branches.values() {
        total += projection_weight(basis, v);
    }
    Ok(total)
}

/// Mass of a fine readout distribution matching the candidate.
pub fn match_mass(q: &EigenQuery, readout: &[f64]) -> f64 {
    readout.iter().enumerate().filter(|(l, _)| q.matches(*l)).map(|(_, p)| p).sum()
}

/// Shared randomness of register `k`: start vector, stopping time, readout uniform.
pub fn register_draws(streams: &Streams, n: usize, q: &EigenQuery, k: u64) -> (CVec, usize, f64) {
    let mut rng = streams.stream("register", k);
    let a = haar_vector(n, &mut rng);
    let t = q.policy.sample(n, &mut rng);
    let u: f64 = rng.gen();
    (a, t, u)
}

/// Outcome of recognizing one candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenRecognition {
    pub accepted: bool,
    pub fraction: f64,
    pub matches: usize,
    pub registers: usize,
    pub queries: Queries,
    pub outcomes: Vec<RegisterOutcome>,
}

/// Builds the concentrating state register by register; returns the per-register
/// concentrated vectors (projector backend) and records.
pub fn state_concentrate(dev: &Device, q: &EigenQuery, streams: &Streams) -> Result<(Vec<CVec>, Vec<RegisterOutcome>)> {
    q.validate()?;
    let basis = eigenspace(dev, q);
    let n = dev.dim();
    let kernels = KernelCache::new(&dev.dec, q.l);
    let rows: Vec<(CVec, RegisterOutcome)> = (0..q.registers as u64)
        .into_par_iter()
        .map(|k| {
            let (a, t, u) = register_draws(streams, n, q, k);
            let chi = concentrate_projector(&a, &basis, t);
            let p = match_mass(q, &readout_projector(&dev.dec, &kernels, &chi, q.l));
            let overlap = projection_weight(&basis, &chi);
            (chi, RegisterOutcome { t, overlap, match_probability: p, matched: u < p })
        })
        .collect();
    Ok(rows.into_iter().unzip())
}

/// Accept/reject decision for the candidate `omega / L`.
pub fn recognize_eigenvalue(dev: &Device, q: &EigenQuery, streams: &Streams) -> Result<EigenRecognition> {
    q.validate()?;
    let n = dev.dim();
    let basis = eigenspace(dev, q);
    let kernels = KernelCache::new(&dev.dec, q.l);
    let runs: Vec<Result<(RegisterOutcome, u64)>> = (0..q.registers as u64)
        .into_par_iter()
        .map(|k| {
            let (a, t, u) = register_draws(streams, n, q, k);
            let run = match q.backend {
                Backend::Projector => run_register_projector(dev, q, &basis, &kernels, &a, t),
                Backend::Circuit => {
                    let r = run_register_circuit(dev, q, &a, t)?;
                    let mut run = r.run;
                    run.overlap = main_overlap(&r.state, &basis)?;
                    run
                }
            };
            let p = match_mass(q, &run.readout);
            Ok((RegisterOutcome { t, overlap: run.overlap, match_probability: p, matched: u < p }, run.black_box))
        })
        .collect();
    let mut outcomes = Vec::with_capacity(q.registers);
    let mut queries = Queries::new();
    for r in runs {
        let (o, bb) = r?;
        queries.add(BLACK_BOX, bb);
        queries.add(EIGEN_REFLECTIONS, o.t as u64);
        queries.add(START_REFLECTIONS, o.t as u64);
        queries.add(READOUTS, 1);
        outcomes.push(o);
    }
    let matches = outcomes.iter().filter(|o| o.matched).count();
    let fraction = matches as f64 / q.registers as f64;
    Ok(EigenRecognition { accepted: fraction >= q.rho, fraction, matches, registers: q.registers, queries, outcomes })
}

/// Total-variation distance between two distributions.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cis, haar_unitary};

    fn rotated(freqs: &[f64], seed: u64) -> DenseUnitary {
        let mut rng = Streams::new(seed).stream("rot", 0);
        let w = haar_unitary(freqs.len(), &mut rng);
        let d = CMat::from_diagonal(&CVec::from_iterator(freqs.len(), freqs.iter().map(|f| cis(*f))));
        DenseUnitary::new(&w * d * w.adjoint()).unwrap()
    }

    #[test]
    fn projector_reflection_signs() {
        let dev = Device::new(rotated(&[0.25, 0.5, 0.5, 0.0], 1)).unwrap();
        let q = EigenQuery::coarse(4, 8);
        let b = eigenspace(&dev, &q);
        assert_eq!(b.ncols(), 2);
        let inside = b.column(0).into_owned();
        assert!((reflect_eigenspace_projector(&inside, &b) + &inside).norm() < 1e-12);
        let outside = dev.decomposition().window_basis(0.25, 1e-9).column(0).into_owned();
        assert!((reflect_eigenspace_projector(&outside, &b) - &outside).norm() < 1e-12);
    }

    #[test]
    fn circuit_reflection_exact_on_grid_spectrum() {
        // Grid frequencies make the revealing channel sharp, so Ĩ equals I_E.
        let dev = Device::new(rotated(&[0.25, 0.5, 0.5, 0.0], 2)).unwrap();
        let q = EigenQuery { omega: 8, ..EigenQuery::coarse(0, 1) };
        let b = eigenspace(&dev, &q);
        let mut rng = Streams::new(3).stream("v", 0);
        let v = haar_vector(4, &mut rng);
        let s = StateVector::product(circuit_layout(2, &q).unwrap(), &[("x", &v)]).unwrap();
        let out = reflect_eigenspace_circuit(&dev.oracle(), &s, &q).unwrap();
        let want = StateVector::product(circuit_layout(2, &q).unwrap(), &[("x", &reflect_eigenspace_projector(&v, &b))]).unwrap();
        assert!(out.distance(&want).unwrap() < 1e-9);
    }

    fn backend_gap(v: usize) -> f64 {
        // Off-grid spectrum: the approximate reflection deviates from I_E on S(ā, ω).
        let l = 16;
        let dev = Device::new(rotated(&[0.0 + 0.4 / l as f64, 0.5 - 0.3 / l as f64], 4)).unwrap();
        let q = EigenQuery { omega: 0, m: 1, l, copies: v, registers: 1, rho: 0.1, policy: StoppingPolicy::default(), backend: Backend::Circuit };
        let b = eigenspace(&dev, &q);
        let mut rng = Streams::new(5).stream("a", 0);
        let mut worst: f64 = 0.0;
        for _ in 0..4 {
            let a = haar_vector(2, &mut rng);
            let s = StateVector::product(circuit_layout(1, &q).unwrap(), &[("x", &a)]).unwrap();
            let out = reflect_eigenspace_circuit(&dev.oracle(), &s, &q).unwrap();
            let want = StateVector::product(circuit_layout(1, &q).unwrap(), &[("x", &reflect_eigenspace_projector(&a, &b))]).unwrap();
            worst = worst.max(out.distance(&want).unwrap());
        }
        worst
    }

    #[test]
    fn backend_gap_shrinks_with_copies() {
        // Even v breaks ties towards a flip, so compare against the single-copy gap.
        let g: Vec<f64> = [1, 2, 3].iter().map(|v| backend_gap(*v)).collect();
        assert!(g[1] < g[0] && g[2] < g[0], "{g:?}");
    }

    #[test]
    fn whole_space_overlap_is_one() {
        let dev = Device::new(DenseUnitary::from_frequencies(&[0.25; 4]).unwrap()).unwrap();
        let q = EigenQuery { registers: 8, ..EigenQuery::coarse(1, 4) };
        let (_, out) = state_concentrate(&dev, &q, &Streams::new(6)).unwrap();
        assert!(out.iter().all(|o| (o.overlap - 1.0).abs() < 1e-9));
    }

    #[test]
    fn non_frequency_overlap_is_zero() {
        let dev = Device::new(rotated(&[0.0, 0.5, 0.5, 0.0], 7)).unwrap();
        let q = EigenQuery { registers: 8, ..EigenQuery::coarse(1, 4) };
        let (_, out) = state_concentrate(&dev, &q, &Streams::new(7)).unwrap();
        assert!(out.iter().all(|o| o.overlap == 0.0));
    }

    #[test]
    fn exact_mean_overlap_one_dimensional() {
        // N = 16, dim E = 1: average over t of sin²((2t+1)θ) for each ā, averaged over ā.
        let mut freqs = vec![0.5; 16];
        freqs[3] = 0.25;
        let dev = Device::new(rotated(&freqs, 8)).unwrap();
        let q = EigenQuery::coarse(1, 4);
        let b = eigenspace(&dev, &q);
        let pol = StoppingPolicy::default();
        let mut rng = Streams::new(8).stream("a", 0);
        let mut mean = 0.0;
        let trials = 200;
        for _ in 0..trials {
            let a = haar_vector(16, &mut rng);
            let th = projection_weight(&b, &a).sqrt().asin();
            let bnd = pol.bound(16);
            let sim: f64 = (0..=bnd).map(|t| projection_weight(&b, &concentrate_projector(&a, &b, t))).sum::<f64>() / (bnd + 1) as f64;
            let closed: f64 = (0..=bnd).map(|t| ((2 * t + 1) as f64 * th).sin().powi(2)).sum::<f64>() / (bnd + 1) as f64;
            assert!((sim - closed).abs() < 1e-9);
            mean += sim / trials as f64;
        }
        assert!(mean >= 0.25, "{mean}");
    }

    #[test]
    fn identity_accepts_zero() {
        let dev = Device::new(DenseUnitary::identity(4)).unwrap();
        let r = recognize_eigenvalue(&dev, &EigenQuery::coarse(0, 4), &Streams::new(9)).unwrap();
        assert!(r.accepted && r.fraction == 1.0);
    }

    #[test]
    fn reject_and_accept_rates() {
        let absent = Device::new(rotated(&[0.0, 0.5, 0.5, 0.0], 10)).unwrap();
        let present = Device::new(rotated(&[0.0, 0.25, 0.5, 0.5], 11)).unwrap();
        let q = EigenQuery { registers: 32, ..EigenQuery::coarse(1, 4) };
        let root = Streams::new(12);
        let rej = (0..200).filter(|i| !recognize_eigenvalue(&absent, &q, &root.child("rej", *i)).unwrap().accepted).count();
        let acc = (0..200).filter(|i| recognize_eigenvalue(&present, &q, &root.child("acc", *i)).unwrap().accepted).count();
        assert!(rej >= 198, "{rej}");
        assert!(acc >= 198, "{acc}");
    }

    #[test]
    fn per_register_gap() {
        // Exact per-register match probabilities straddle the 5/32 threshold.
        let present = Device::new(rotated(&[0.0, 0.25, 0.5, 0.5, 0.0, 0.5, 0.75, 0.75], 13)).unwrap();
        let absent = Device::new(rotated(&[0.0, 0.5, 0.5, 0.0, 0.0, 0.5, 0.75, 0.75], 14)).unwrap();
        let q = EigenQuery { registers: 400, ..EigenQuery::coarse(1, 4) };
        let (_, yes) = state_concentrate(&present, &q, &Streams::new(15)).unwrap();
        let (_, no) = state_concentrate(&absent, &q, &Streams::new(16)).unwrap();
        let mean = |o: &[RegisterOutcome]| o.iter().map(|r| r.match_probability).sum::<f64>() / o.len() as f64;
        assert!(mean(&yes) >= 7.0 / 32.0 - 0.02, "{}", mean(&yes));
        assert!(mean(&no) < 1e-2, "{}", mean(&no));
    }

    #[test]
    fn circuit_queries_match_analytic_count() {
        let dev = Device::new(rotated(&[0.0, 0.5], 17)).unwrap();
        let q = EigenQuery { omega: 8, m: 2, l: 16, copies: 2, registers: 3, rho: 0.1, policy: StoppingPolicy::default(), backend: Backend::Circuit };
        let s = Streams::new(18);
        let circ = recognize_eigenvalue(&dev, &q, &s).unwrap();
        let proj = recognize_eigenvalue(&dev, &EigenQuery { backend: Backend::Projector, ..q.clone() }, &s).unwrap();
        assert_eq!(circ.queries, proj.queries);
        assert_eq!(circ.accepted, proj.accepted);
    }

    #[test]
    fn width_cap_enforced() {
        let q = EigenQuery { copies: 4, ..EigenQuery::coarse(0, 16) };
        assert!(matches!(circuit_layout(3, &q), Err(Error::WidthCap(_, _))));
    }
}
