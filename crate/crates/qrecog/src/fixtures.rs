//! Reusable, oracle-checked test cases: sparse-spectrum unitaries, thermo
//! Hamiltonians, distinguishing pairs for each promise class, the involutive
//! device family and the structure-search family.

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, CircuitFile, CodeSpace, GateOp, GateSet};
use crate::distinguish::{rotated_pair, unitary_with_eigenspace, DistinguishCase, DistinguishConfig};
use crate::error::{Error, Result};
use crate::linalg::{haar_unitary, CMat, C64};
use crate::rng::Streams;
use crate::spectral::{decompose, distances_from_bases, SpectrumEntry, SubspaceDistances};
use crate::statevec::DenseUnitary;
use crate::structure::{spectrum_matches_oracle, Family, MatchMode, SpectrumSpec};
use crate::thermo::{HamiltonianSpec, Level};

/// Dense matrix on disk: rows of `[re, im]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub matrix: Vec<Vec<[f64; 2]>>,
}

impl MatrixFile {
    pub fn from_matrix(m: &CMat) -> Self {
        Self { matrix: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect() }
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let n = self.matrix.len();
        if self.matrix.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("matrix rows have unequal lengths".into()));
        }
        Ok(CMat::from_fn(n, n, |i, j| C64::new(self.matrix[i][j][0], self.matrix[i][j][1])))
    }
}

fn columns(q: &CMat, idx: impl IntoIterator<Item = usize>) -> CMat {
    let cols: Vec<_> = idx.into_iter().map(|i| q.column(i).into_owned()).collect();
    if cols.is_empty() {
        CMat::zeros(q.nrows(), 0)
    } else {
        CMat::from_columns(&cols)
    }
}

/// Unitary with the given `(l, degeneracy)` levels on the `M` grid in a Haar basis.
pub fn grid_unitary(levels: &[(usize, usize)], m: usize, seed: u64) -> Result<DenseUnitary> {
    let n: usize = levels.iter().map(|x| x.1).sum();
    if !n.is_power_of_two() {
        return Err(Error::Dimension(format!("total degeneracy {n} is not a power of two")));
    }
    let q = haar_unitary(n, &mut Streams::new(seed).stream("fixture-basis", 0));
    let diag: Vec<C64> = levels.iter().flat_map(|(l, d)| std::iter::repeat(crate::linalg::cis(*l as f64 / m as f64)).take(*d)).collect();
    DenseUnitary::new(&q * CMat::from_diagonal(&crate::linalg::CVec::from_vec(diag)) * q.adjoint())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseSpectrumFixture {
    pub m: usize,
    pub unitary: MatrixFile,
    /// Spectrum read back from the decomposition.
    pub spectrum: Vec<SpectrumEntry>,
}

/// `N`-dimensional unitary with two well-separated grid levels at `0` and `M/2`.
pub fn sparse_spectrum(n: usize, m: usize, seed: u64) -> Result<SparseSpectrumFixture> {
    if n < 2 || m < 4 {
        return Err(Error::Invalid("need N ≥ 2 and M ≥ 4".into()));
    }
    let u = grid_unitary(&[(0, n / 2 + n / 8), (m / 2, n / 2 - n / 8)], m, seed)?;
    let spectrum = decompose(&u)?.spectrum();
    Ok(SparseSpectrumFixture { m, unitary: MatrixFile::from_matrix(u.matrix()), spectrum })
}

/// A thermo test Hamiltonian with its grid levels.
#[derive(Clone, Debug)]
pub struct ThermoFixture {
    pub name: String,
    pub m: usize,
    pub grid: Vec<(usize, usize)>,
    pub hamiltonian: HamiltonianSpec,
}

/// `E = E_s(1 − 2πl/M)` with `E_s = 1`, levels on non-adjacent anchors.
pub fn thermo_fixtures() -> Result<Vec<ThermoFixture>> {
    let m = 32;
    let sets: [(&str, Vec<(usize, usize)>); 3] = [
        ("n16", vec![(0, 5), (3, 8), (6, 3)]),
        ("n32", vec![(0, 4), (2, 9), (4, 12), (7, 7)]),
        ("n64", vec![(0, 3), (2, 8), (4, 13), (6, 20), (9, 20)]),
    ];
    let tau = 2.0 * std::f64::consts::PI;
    sets.into_iter()
        .enumerate()
        .map(|(i, (name, grid))| {
            let levels: Vec<Level> = grid.iter().rev().map(|(l, d)| Level { energy: 1.0 - tau * *l as f64 / m as f64, degeneracy: *d }).collect();
            Ok(ThermoFixture { name: name.into(), m, hamiltonian: HamiltonianSpec::from_levels(&levels, 100 + i as u64)?.with_scale(1.0), grid })
        })
        .collect()
}

/// Promise classes of a device pair at one frequency.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairClass {
    Equal,
    EqualDim,
    /// Larger space nests the smaller (`μ_V = 0`).
    Nested,
    /// Smaller space tilted out of the larger (`μ_V > √(1/3)`).
    Tilted,
    /// Frequency missing from the second device.
    Empty,
}

impl PairClass {
    pub const ALL: [PairClass; 5] = [PairClass::Equal, PairClass::EqualDim, PairClass::Nested, PairClass::Tilted, PairClass::Empty];

    pub fn name(self) -> &'static str {
        match self {
            PairClass::Equal => "equal",
            PairClass::EqualDim => "equal-dim",
            PairClass::Nested => "nested",
            PairClass::Tilted => "tilted",
            PairClass::Empty => "empty",
        }
    }

    pub fn by_name(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| Error::Invalid(format!("unknown pair class `{s}`")))
    }
}

/// A device pair sharing the candidate frequency `ω = 0`; every other
/// direction sits at `½`.
#[derive(Clone, Debug)]
pub struct PairFixture {
    pub class: PairClass,
    pub omega: f64,
    pub u: DenseUnitary,
    pub v: DenseUnitary,
    pub distances: SubspaceDistances,
}

impl PairFixture {
    pub fn case(&self, cfg: &DistinguishConfig) -> Result<DistinguishCase> {
        DistinguishCase::new(&self.u, &self.v, self.omega, cfg)
    }
}

/// Pair of class `class` on `n` dimensions with separation `d` for the equal-dim class.
pub fn pair_fixture(class: PairClass, n: usize, d: f64, seed: u64) -> Result<PairFixture> {
    if n < 4 {
        return Err(Error::Invalid("pair fixtures need N ≥ 4".into()));
    }
    let q = haar_unitary(n, &mut Streams::new(seed).stream("pair-basis", 0));
    let (bu, bv) = match class {
        PairClass::Equal => (columns(&q, [0, 1]), columns(&q, [0, 1])),
        PairClass::EqualDim => {
            let bu = columns(&q, [0, 1]);
            let bv = rotated_pair(&bu, &q.column(2).into_owned(), d);
            (bu, bv)
        }
        PairClass::Nested => (columns(&q, [0, 1]), columns(&q, [0])),
        PairClass::Tilted => {
            let s: f64 = 0.9;
            let v = q.column(0) * C64::from((1.0 - s * s).sqrt()) + q.column(2) * C64::from(s);
            (columns(&q, [0, 1]), CMat::from_columns(&[v]))
        }
        PairClass::Empty => (columns(&q, [0, 1]), CMat::zeros(n, 0)),
    };
    let distances = distances_from_bases(&bu, &bv);
    Ok(PairFixture { class, omega: 0.0, u: unitary_with_eigenspace(&bu, 0.0, 0.5)?, v: unitary_with_eigenspace(&bv, 0.0, 0.5)?, distances })
}

fn op(space: &CodeSpace, gate: &str, targets: &[usize]) -> GateOp {
    GateOp { gate: space.gate_set().index_of(gate).expect("gate in set"), targets: targets.to_vec() }
}

/// Eight three-qubit involutive circuits with spectrum `{0, ½}`, as codes of
/// the involutive gate set with `c = 2`. Each `−1` eigenspace is two-dimensional,
/// so no pair has complementary eigenspaces.
pub fn involutive_family() -> Result<(Family, Vec<String>)> {
    let space = CodeSpace::new(GateSet::involutive(), 3, 2)?;
    let named: [(&str, Vec<GateOp>); 8] = [
        ("CZ01", vec![op(&space, "CZ", &[0, 1])]),
        ("CZ02", vec![op(&space, "CZ", &[0, 2])]),
        ("CZ12", vec![op(&space, "CZ", &[1, 2])]),
        ("SWAP01", vec![op(&space, "SWAP", &[0, 1])]),
        ("SWAP02", vec![op(&space, "SWAP", &[0, 2])]),
        ("SWAP12", vec![op(&space, "SWAP", &[1, 2])]),
        ("CZ01.CZ02", vec![op(&space, "CZ", &[0, 1]), op(&space, "CZ", &[0, 2])]),
        ("CZ01.CZ12", vec![op(&space, "CZ", &[0, 1]), op(&space, "CZ", &[1, 2])]),
    ];
    let mut codes = Vec::new();
    let mut names = Vec::new();
    for (name, gates) in named {
        codes.push(space.encode(&Circuit { n: 3, gates })?);
        names.push(name.to_string());
    }
    Ok((Family { space, codes }, names))
}

/// Pairwise promise matrix over the grid frequencies of the family's
/// spectrum: entry `(i, j)` holds when every shared frequency is coincident
/// or `d`-distinguishable.
pub fn promise_matrix(family: &Family, cfg: &DistinguishConfig) -> Result<Vec<Vec<bool>>> {
    let us: Vec<DenseUnitary> = family.codes.iter().map(|c| family.space.build_unitary(*c)).collect::<Result<_>>()?;
    let mut out = vec![vec![true; us.len()]; us.len()];
    for i in 0..us.len() {
        for j in 0..us.len() {
            for l in 0..cfg.m {
                match DistinguishCase::new(&us[i], &us[j], l as f64 / cfg.m as f64, cfg) {
                    Ok(_) => {}
                    Err(Error::Promise(_)) => out[i][j] = false,
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(out)
}

/// Structure-search family: the first `t` codes of the standard gate set
/// on two qubits with `c = 2`.
pub fn structure_family(t: u64) -> Result<Family> {
    Ok(Family::prefix(CodeSpace::new(GateSet::standard(), 2, 2)?, Some(t)))
}

/// Target spectrum `{0, 1/8, ½, 5/8}` of `H0 T1` at `M = 8`.
pub fn structure_target() -> Result<SpectrumSpec> {
    SpectrumSpec::new(8, &[0, 1, 4, 5], MatchMode::Determined)
}

/// A spectrum no member of [`structure_family`] has.
pub fn structure_no_match() -> Result<SpectrumSpec> {
    SpectrumSpec::new(8, &[0, 3], MatchMode::Determined)
}

/// Family indices matching `spec` by the exact spectrum.
pub fn oracle_matches(family: &Family, spec: &SpectrumSpec) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for i in 0..family.size() {
        if spectrum_matches_oracle(family.device(i)?.decomposition(), spec) {
            out.push(i);
        }
    }
    Ok(out)
}

/// Circuit files for every member of a family.
pub fn family_files(family: &Family) -> Result<Vec<CircuitFile>> {
    family.codes.iter().map(|c| Ok(CircuitFile::from_circuit(family.space.gate_set(), &family.space.decode(*c)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::is_d_distinguishable;

    #[test]
    fn matrix_file_roundtrip() {
        let u = grid_unitary(&[(0, 2), (2, 2)], 4, 1).unwrap();
        let f = MatrixFile::from_matrix(u.matrix());
        let back: MatrixFile = serde_json::from_str(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back.to_matrix().unwrap(), *u.matrix());
    }

    #[test]
    fn sparse_spectrum_dump_matches_construction() {
        let f = sparse_spectrum(64, 4, 2).unwrap();
        assert_eq!(f.spectrum.len(), 2);
        assert_eq!(f.spectrum.iter().map(|e| e.dim).sum::<usize>(), 64);
        let dims: Vec<(i64, usize)> = f.spectrum.iter().map(|e| ((e.omega * 4.0).round() as i64, e.dim)).collect();
        assert!(dims.contains(&(0, 40)) && dims.contains(&(2, 24)), "{dims:?}");
    }

    #[test]
    fn thermo_fixtures_have_expected_levels() {
        for f in thermo_fixtures().unwrap() {
            let n: usize = f.grid.iter().map(|x| x.1).sum();
            assert!(n <= 64 && n.is_power_of_two());
            assert_eq!(f.hamiltonian.exact_levels(1e-8).len(), f.grid.len());
            // Anchors are pairwise non-adjacent on the grid.
            for w in f.grid.windows(2) {
                assert!(w[1].0 >= w[0].0 + 2);
            }
        }
    }

    #[test]
    fn pair_classes_have_expected_distances() {
        let cfg = DistinguishConfig::default();
        for class in PairClass::ALL {
            let f = pair_fixture(class, 16, 0.5, 3).unwrap();
            let d = f.distances;
            match class {
                PairClass::Equal => assert!(d.mu_u.unwrap() < 1e-9 && d.mu_v.unwrap() < 1e-9),
                PairClass::EqualDim => assert!((d.mu_u.unwrap() - 0.5).abs() < 1e-9),
                PairClass::Nested => assert!(d.mu_v.unwrap() < 1e-9 && d.dim_u == 2),
                PairClass::Tilted => assert!(d.mu_v.unwrap() > (1.0f64 / 3.0).sqrt()),
                PairClass::Empty => assert!(d.mu_v.is_none()),
            }
            if class != PairClass::Equal {
                assert!(is_d_distinguishable(&d, 0.5));
            }
            let case = f.case(&cfg).unwrap();
            assert_eq!(case.geometry.dist.dim_u, d.dim_u);
            assert_eq!(case.geometry.dist.dim_v, d.dim_v);
        }
    }

    #[test]
    fn involutive_family_shares_spectrum_and_keeps_promise() {
        let (fam, names) = involutive_family().unwrap();
        assert_eq!(fam.size(), 8);
        assert_eq!(names.len(), 8);
        for i in 0..fam.size() {
            let u = fam.space.build_unitary(fam.codes[i]).unwrap();
            assert!((u.matrix() * u.matrix() - CMat::identity(8, 8)).norm() < 1e-12);
            let mut ws: Vec<i64> = decompose(&u).unwrap().frequencies().iter().map(|w| (w * 2.0).round() as i64).collect();
            ws.sort();
            assert_eq!(ws, vec![0, 1], "{}", names[i]);
        }
        let cfg = DistinguishConfig::default();
        let pm = promise_matrix(&fam, &cfg).unwrap();
        assert!(pm.iter().all(|r| r.iter().all(|x| *x)));
        // Difference subspaces stay proper, so the reflection about them is never a global phase.
        for i in 0..8 {
            for j in 0..8 {
                let (u, v) = (fam.space.build_unitary(fam.codes[i]).unwrap(), fam.space.build_unitary(fam.codes[j]).unwrap());
                for l in [0usize, 2] {
                    let g = DistinguishCase::new(&u, &v, l as f64 / 4.0, &cfg).unwrap().geometry;
                    assert!(g.lp.ncols() < 8, "{} vs {} at {l}", names[i], names[j]);
                }
            }
        }
    }

    #[test]
    fn structure_target_is_unique() {
        let fam = structure_family(16).unwrap();
        let hits = oracle_matches(&fam, &structure_target().unwrap()).unwrap();
        assert_eq!(hits.len(), 1);
        let c = fam.space.decode(fam.codes[hits[0]]).unwrap();
        let f = CircuitFile::from_circuit(fam.space.gate_set(), &c);
        let names: Vec<&str> = f.gates.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["H", "T"]);
        assert!(oracle_matches(&fam, &structure_no_match().unwrap()).unwrap().is_empty());
        assert_eq!(family_files(&fam).unwrap().len(), 16);
    }
}
