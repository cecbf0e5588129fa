//! Thermodynamic functions from recognized energy levels: rescaling a
//! Hamiltonian to a unitary, finding anchor frequencies, counting their
//! degeneracies and summing the Boltzmann series.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplify::{count_rotation_time, CountingConfig};
use crate::error::{Error, Result};
use crate::linalg::{cis, haar_unitary, op_norm, CMat, CVec, C64};
use crate::recognize::{eigenspace, recognize_eigenvalue, Backend, Device, EigenQuery};
use crate::report::{Queries, BLACK_BOX, EIGEN_REFLECTIONS, READOUTS};
use crate::rng::Streams;
use crate::statevec::DenseUnitary;

const HERMITIAN_TOL: f64 = 1e-8;

/// One energy level with its degeneracy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub energy: f64,
    pub degeneracy: usize,
}

/// A Hermitian matrix in energy units, plus an optional explicit top energy `E_s`.
#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianSpec {
    matrix: CMat,
    scale: Option<f64>,
}

/// On-disk form: either `matrix` (rows of `[re, im]`) or `levels`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct HamiltonianFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<Level>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Seed of the random eigenbasis used to expand a level list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_seed: Option<u64>,
}

impl HamiltonianSpec {
    pub fn from_matrix(matrix: CMat) -> Result<Self> {
        if !matrix.is_square() || !matrix.nrows().is_power_of_two() {
            return Err(Error::Dimension(format!("Hamiltonian must be square with power-of-two size, got {}x{}", matrix.nrows(), matrix.ncols())));
        }
        let dev = (&matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let matrix = (&matrix + matrix.adjoint()) * C64::from(0.5);
        Ok(Self { matrix, scale: None })
    }

    /// `W diag(E) W†` with `W` Haar-random; the total degeneracy must be a power of two.
    pub fn from_levels(levels: &[Level], basis_seed: u64) -> Result<Self> {
        check_levels(levels)?;
        let n: usize = levels.iter().map(|l| l.degeneracy).sum();
        if !n.is_power_of_two() {
            return Err(Error::Dimension(format!("total degeneracy {n} is not a power of two")));
        }
        let diag: Vec<C64> = levels.iter().flat_map(|l| std::iter::repeat(C64::from(l.energy)).take(l.degeneracy)).collect();
        let w = haar_unitary(n, &mut Streams::new(basis_seed).stream("hamiltonian-basis", 0));
        let h = &w * CMat::from_diagonal(&CVec::from_vec(diag)) * w.adjoint();
        Self::from_matrix(h)
    }

    pub fn with_scale(mut self, e_s: f64) -> Self {
        self.scale = Some(e_s);
        self
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `E_s`: the explicit scale, else the spectral norm.
    pub fn top_energy(&self) -> f64 {
        self.scale.unwrap_or_else(|| op_norm(&self.matrix))
    }

    /// All levels equal (`H = E·I`).
    pub fn scalar_level(&self) -> Option<f64> {
        let n = self.dim();
        let e = self.matrix.trace().re / n as f64;
        let off = op_norm(&(&self.matrix - CMat::identity(n, n) * C64::from(e)));
        (off < 1e-10).then_some(e)
    }

    pub fn from_file(f: &HamiltonianFile) -> Result<Self> {
        let spec = match (&f.matrix, &f.levels) {
            (Some(rows), None) => {
                let n = rows.len();
                if rows.iter().any(|r| r.len() != n) {
                    return Err(Error::Dimension("Hamiltonian rows have unequal lengths".into()));
                }
                Self::from_matrix(CMat::from_fn(n, n, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))?
            }
            (None, Some(levels)) => Self::from_levels(levels, f.basis_seed.unwrap_or(0))?,
            _ => return Err(Error::Invalid("Hamiltonian file needs exactly one of `matrix` or `levels`".into())),
        };
        Ok(match f.scale {
            Some(s) => spec.with_scale(s),
            None => spec,
        })
    }

    pub fn to_file(&self) -> HamiltonianFile {
        let rows = (0..self.dim()).map(|i| (0..self.dim()).map(|j| [self.matrix[(i, j)].re, self.matrix[(i, j)].im]).collect()).collect();
        HamiltonianFile { matrix: Some(rows), levels: None, scale: self.scale, basis_seed: None }
    }

    /// Exact levels by diagonalization, merged within `tol`.
    pub fn exact_levels(&self, tol: f64) -> Vec<Level> {
        let mut e: Vec<f64> = self.matrix.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
        e.sort_by(f64::total_cmp);
        let mut out: Vec<Level> = Vec::new();
        for x in e {
            match out.last_mut() {
                Some(l) if (x - l.energy).abs() <= tol => {
                    l.energy = (l.energy * l.degeneracy as f64 + x) / (l.degeneracy + 1) as f64;
                    l.degeneracy += 1;
                }
                _ => out.push(Level { energy: x, degeneracy: 1 }),
            }
        }
        out
    }
}

fn check_levels(levels: &[Level]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::Invalid("empty level list".into()));
    }
    for w in levels.windows(2) {
        if w[1].energy <= w[0].energy {
            return Err(Error::Invalid("levels must be strictly increasing".into()));
        }
    }
    if levels.iter().any(|l| l.degeneracy == 0 || !l.energy.is_finite()) {
        return Err(Error::Invalid("levels need finite energies and positive degeneracies".into()));
    }
    Ok(())
}

/// Affine map between energies and frequencies: `ω = (E_s − E)/(2π E_s)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyMap {
    pub e_s: f64,
    /// Single-level Hamiltonian: frequency 0 stands for energy `e_s`.
    pub single: bool,
}

impl EnergyMap {
    pub fn frequency(&self, energy: f64) -> f64 {
        if self.single {
            return 0.0;
        }
        (self.e_s - energy) / (2.0 * std::f64::consts::PI * self.e_s)
    }

    pub fn energy(&self, omega: f64) -> f64 {
        if self.single {
            return self.e_s;
        }
        self.e_s - 2.0 * std::f64::consts::PI * self.e_s * omega
    }
}

/// `U = exp(i(E_s − H)/E_s)`; every frequency lies in `[0, 1)`.
pub fn rescale_to_unitary(h: &HamiltonianSpec) -> Result<(DenseUnitary, EnergyMap)> {
    if let Some(e) = h.scalar_level() {
        return Ok((DenseUnitary::identity(h.dim()), EnergyMap { e_s: e, single: true }));
    }
    let e_s = h.top_energy();
    if e_s <= 0.0 {
        return Err(Error::Invalid(format!("top energy E_s = {e_s} must be positive")));
    }
    let map = EnergyMap { e_s, single: false };
    let eig = h.matrix.clone().symmetric_eigen();
    let mut phases = Vec::with_capacity(h.dim());
    for e in eig.eigenvalues.iter() {
        let w = map.frequency(*e);
        if !(-1e-12..1.0).contains(&w) {
            return Err(Error::Invalid(format!("energy {e} maps to frequency {w} outside [0, 1); raise E_s")));
        }
        phases.push(cis(w.max(0.0)));
    }
    let v = eig.eigenvectors;
    let u = &v * CMat::from_diagonal(&CVec::from_vec(phases)) * v.adjoint();
    Ok((DenseUnitary::new(u)?, map))
}

/// An accepted candidate `l/M` with its acceptance fraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub l: usize,
    pub fraction: f64,
}

/// Recognizes every `l/M` and keeps the accepted ones.
pub fn find_anchor_frequencies(dev: &Device, m: usize, backend: Backend, streams: &Streams) -> Result<(Vec<Anchor>, Queries)> {
    let runs: Vec<Result<_>> = (0..m)
        .into_par_iter()
        .map(|l| {
            let q = EigenQuery { backend, ..EigenQuery::coarse(l, m) };
            recognize_eigenvalue(dev, &q, &streams.child("anchor", l as u64)).map(|r| (l, r))
        })
        .collect();
    let mut anchors = Vec::new();
    let mut queries = Queries::new();
    for r in runs {
        let (l, rec) = r?;
        queries.merge(&rec.queries);
        if rec.accepted {
            anchors.push(Anchor { l, fraction: rec.fraction });
        }
    }
    Ok((anchors, queries))
}

/// Degeneracy of the eigenspace anchored at `l/M` by rotation-time counting.
pub fn degeneracy(dev: &Device, l: usize, m: usize, cfg: &CountingConfig, streams: &Streams) -> Result<crate::amplify::CountingResult> {
    let basis = eigenspace(dev, &EigenQuery::coarse(l, m));
    if basis.ncols() == 0 {
        return Err(Error::Precondition(format!("{l}/{m} is not an anchor")));
    }
    count_rotation_time(&basis, cfg, streams)
}

/// Partition function, mean energy and Gibbs entropy (units of `k_B`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoResult {
    pub kbt: f64,
    pub partition: f64,
    pub mean_energy: f64,
    pub entropy: f64,
    /// `⟨E⟩/k_BT + ln Q`, which equals the entropy when the sums are consistent.
    pub entropy_identity: f64,
    /// Kept levels.
    pub levels: Vec<Level>,
    /// First omitted term relative to `Q` (0 when nothing was cut).
    pub truncation_bound: f64,
}

/// Boltzmann sums over `levels`, dropping levels whose factor falls below
/// `cutoff` times the leading one.
pub fn thermo_functions(levels: &[Level], kbt: f64, cutoff: f64) -> Result<ThermoResult> {
    if levels.is_empty() {
        return Err(Error::Invalid("empty level list".into()));
    }
    if !(kbt > 0.0) {
        return Err(Error::Invalid(format!("k_B T = {kbt} must be positive")));
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let e0 = sorted[0].energy;
    let (kept, dropped): (Vec<Level>, Vec<Level>) = sorted.into_iter().partition(|l| (-(l.energy - e0) / kbt).exp() >= cutoff);
    // Shifted weights d_j e^{−(E_j − E_0)/kT}; Q = e^{−E_0/kT} Σ.
    let z: f64 = kept.iter().map(|l| l.degeneracy as f64 * (-(l.energy - e0) / kbt).exp()).sum();
    let ln_q = z.ln() - e0 / kbt;
    let mut mean = 0.0;
    let mut entropy = 0.0;
    for l in &kept {
        let ln_p = -l.energy / kbt - ln_q;
        let p = ln_p.exp();
        mean += l.degeneracy as f64 * p * l.energy;
        entropy -= l.degeneracy as f64 * p * ln_p;
    }
    let truncation_bound = dropped.first().map(|l| l.degeneracy as f64 * (-(l.energy - e0) / kbt).exp() / z).unwrap_or(0.0);
    Ok(ThermoResult {
        kbt,
        partition: ln_q.exp(),
        mean_energy: mean,
        entropy: entropy.max(0.0),
        entropy_identity: mean / kbt + ln_q,
        levels: kept,
        truncation_bound,
    })
}

/// Pipeline parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoConfig {
    pub m: usize,
    pub counting: CountingConfig,
    pub backend: Backend,
    pub cutoff: f64,
    /// Keep at most this many lowest-energy anchors.
    pub max_levels: Option<usize>,
}

impl Default for ThermoConfig {
    fn default() -> Self {
        Self { m: 32, counting: CountingConfig::default(), backend: Backend::Projector, cutoff: 1e-6, max_levels: None }
    }
}

/// A recognized level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimate {
    pub l: usize,
    pub frequency: f64,
    pub energy: f64,
    pub degeneracy: usize,
    pub bracket: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermoReport {
    pub map: EnergyMap,
    pub levels: Vec<LevelEstimate>,
    pub results: Vec<ThermoResult>,
    pub queries: Queries,
}

/// Rescale, recognize anchors, count degeneracies, sum at each temperature.
pub fn thermo_pipeline(h: &HamiltonianSpec, kbts: &[f64], cfg: &ThermoConfig, streams: &Streams) -> Result<ThermoReport> {
    let (u, map) = rescale_to_unitary(h)?;
    let mut queries = Queries::new();
    let levels = if map.single {
        vec![LevelEstimate { l: 0, frequency: 0.0, energy: map.e_s, degeneracy: h.dim(), bracket: (h.dim(), h.dim()) }]
    } else {
        let dev = Device::new(u)?;
        let (mut anchors, q) = find_anchor_frequencies(&dev, cfg.m, cfg.backend, &streams.child("anchors", 0))?;
        queries.merge(&q);
        // Larger l means lower energy.
        anchors.sort_by(|a, b| b.l.cmp(&a.l));
        if let Some(k) = cfg.max_levels {
            anchors.truncate(k);
        }
        let counted: Vec<Result<(LevelEstimate, u64, u64)>> = anchors
            .par_iter()
            .map(|a| {
                let r = degeneracy(&dev, a.l, cfg.m, &cfg.counting, &streams.child("degeneracy", a.l as u64))?;
                let w = a.l as f64 / cfg.m as f64;
                let e = LevelEstimate { l: a.l, frequency: w, energy: map.energy(w), degeneracy: r.estimate, bracket: r.bracket };
                Ok((e, r.reflections, r.readouts))
            })
            .collect();
        // Each counting reflection is one approximate eigenspace reflection
        // (single copy at L = 16M); each readout one revealing run.
        let l_fine = (16 * cfg.m - 1) as u64;
        let mut out = Vec::new();
        for c in counted {
            let (e, refl, reads) = c?;
            queries.add(EIGEN_REFLECTIONS, refl);
            queries.add(READOUTS, reads);
            queries.add(BLACK_BOX, refl * 2 * l_fine + reads * l_fine);
            out.push(e);
        }
        out
    };
    let table: Vec<Level> = {
        let mut v: Vec<Level> = levels.iter().filter(|l| l.degeneracy > 0).map(|l| Level { energy: l.energy, degeneracy: l.degeneracy }).collect();
        v.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        v
    };
    if table.is_empty() {
        return Err(Error::Invalid("no energy level was recognized".into()));
    }
    let results = kbts.iter().map(|t| thermo_functions(&table, *t, cfg.cutoff)).collect::<Result<Vec<_>>>()?;
    Ok(ThermoReport { map, levels, results, queries })
}

/// Exact thermodynamics by diagonalization.
pub fn exact_thermo(h: &HamiltonianSpec, kbt: f64, cutoff: f64) -> Result<ThermoResult> {
    thermo_functions(&h.exact_levels(1e-9), kbt, cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(e: f64, d: usize) -> Level {
        Level { energy: e, degeneracy: d }
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h = HamiltonianSpec::from_matrix(CMat::zeros(4, 4)).unwrap();
        let (u, map) = rescale_to_unitary(&h).unwrap();
        assert!(map.single);
        assert_eq!(u, DenseUnitary::identity(4));
    }

    #[test]
    fn two_level_frequencies_match_scalar_exponential() {
        let h = HamiltonianSpec::from_levels(&[lv(0.0, 1), lv(1.0, 1)], 3).unwrap().with_scale(1.0);
        let (u, map) = rescale_to_unitary(&h).unwrap();
        // Independent route: exp(i(E_s − E)/E_s) as a scalar.
        let want = [C64::new(0.0, 1.0).exp(), C64::from(1.0)];
        let dec = crate::spectral::decompose(&u).unwrap();
        let got: Vec<C64> = dec.frequencies().iter().map(|w| cis(*w)).collect();
        for w in want {
            assert!(got.iter().any(|g| (g - w).norm() < 1e-9), "{got:?}");
        }
        assert!((map.frequency(0.0) - map.frequency(1.0) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn energy_round_trip() {
        let map = EnergyMap { e_s: 2.5, single: false };
        for e in [-1.0, 0.0, 0.7, 2.5] {
            assert!((map.energy(map.frequency(e)) - e).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = C64::from(1.0);
        assert!(matches!(HamiltonianSpec::from_matrix(m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn single_level_sums() {
        let r = thermo_functions(&[lv(0.0, 1)], 1.0, 1e-6).unwrap();
        assert_eq!((r.partition, r.mean_energy, r.entropy), (1.0, 0.0, 0.0));
    }

    #[test]
    fn two_level_partition_function() {
        let r = thermo_functions(&[lv(0.0, 2), lv(1.0, 1)], 1.0, 1e-6).unwrap();
        let e = (-1.0f64).exp();
        assert!((r.partition - (2.0 + e)).abs() < 1e-12);
        assert!((r.mean_energy - e / (2.0 + e)).abs() < 1e-12);
        assert!((r.entropy - r.entropy_identity).abs() < 1e-12);
    }

    #[test]
    fn high_temperature_entropy_limit() {
        let levels = [lv(0.0, 3), lv(0.4, 5), lv(1.0, 8)];
        let r = thermo_functions(&levels, 1e3, 1e-6).unwrap();
        assert!((r.entropy / 16f64.ln() - 1.0).abs() < 0.01);
    }

    #[test]
    fn truncation_reports_first_omitted() {
        let r = thermo_functions(&[lv(0.0, 1), lv(100.0, 1)], 1.0, 1e-6).unwrap();
        assert_eq!(r.levels.len(), 1);
        assert!(r.truncation_bound > 0.0 && r.truncation_bound < 1e-40);
        assert!(thermo_functions(&[], 1.0, 1e-6).is_err());
        assert!(thermo_functions(&[lv(0.0, 1)], 0.0, 1e-6).is_err());
    }

    #[test]
    fn identity_accepts_only_zero() {
        let dev = Device::new(DenseUnitary::identity(4)).unwrap();
        let (a, _) = find_anchor_frequencies(&dev, 4, Backend::Projector, &Streams::new(1)).unwrap();
        assert_eq!(a.iter().map(|x| x.l).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn two_group_anchors() {
        let mut rng = Streams::new(4).stream("w", 0);
        let w = haar_unitary(8, &mut rng);
        let f = [0.0, 0.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.5];
        let d = CMat::from_diagonal(&CVec::from_iterator(8, f.iter().map(|x| cis(*x))));
        let dev = Device::new(DenseUnitary::new(&w * d * w.adjoint()).unwrap()).unwrap();
        let (a, _) = find_anchor_frequencies(&dev, 4, Backend::Projector, &Streams::new(5)).unwrap();
        assert_eq!(a.iter().map(|x| x.l).collect::<Vec<_>>(), vec![0, 2]);
    }

    #[test]
    fn degeneracy_of_full_space_and_pair() {
        let dev = Device::new(DenseUnitary::identity(16)).unwrap();
        let r = degeneracy(&dev, 0, 4, &CountingConfig::default(), &Streams::new(6)).unwrap();
        assert_eq!(r.estimate, 16);
        let mut f = vec![0.5; 32];
        f[3] = 0.0;
        f[17] = 0.0;
        let h = DenseUnitary::from_frequencies(&f).unwrap();
        let dev = Device::new(h).unwrap();
        let r = degeneracy(&dev, 0, 4, &CountingConfig::default(), &Streams::new(7)).unwrap();
        assert!(r.bracket.0 <= 2 && 2 <= r.bracket.1, "{:?}", r.bracket);
        assert_eq!(r.estimate, 2);
    }

    #[test]
    fn monotone_in_inverse_temperature() {
        let levels = [lv(0.0, 2), lv(0.5, 3), lv(1.3, 1)];
        let qs: Vec<f64> = [4.0, 2.0, 1.0, 0.5, 0.25].iter().map(|t| thermo_functions(&levels, *t, 1e-6).unwrap().partition).collect();
        assert!(qs.windows(2).all(|w| w[1] < w[0]), "{qs:?}");
    }

    #[test]
    fn pipeline_matches_exact_on_small_fixture() {
        let m = 16;
        let tau = 2.0 * std::f64::consts::PI;
        let levels: Vec<Level> = [(5usize, 3usize), (2, 4), (0, 1)].iter().map(|(l, d)| lv(1.0 - tau * *l as f64 / m as f64, *d)).collect();
        let h = HamiltonianSpec::from_levels(&levels, 9).unwrap().with_scale(1.0);
        let cfg = ThermoConfig { m, ..ThermoConfig::default() };
        let rep = thermo_pipeline(&h, &[1.0], &cfg, &Streams::new(10)).unwrap();
        let exact = exact_thermo(&h, 1.0, 1e-6).unwrap();
        let got = &rep.results[0];
        assert!((got.partition / exact.partition - 1.0).abs() < 0.05);
        assert!((got.entropy / exact.entropy - 1.0).abs() < 0.05);
        assert_eq!(rep.levels.len(), 3);
    }
}
