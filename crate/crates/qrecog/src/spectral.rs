//! Exact classical spectral machinery: eigendecomposition of unitaries,
//! frequency groups, eigenspace projectors, principal-angle subspace distances
//! and the frequency-revealing channel contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{circ_dist, op_norm, orthonormal_columns, projector_from_basis, wrap, CMat, C64};
use crate::statevec::DenseUnitary;

/// Eigenvalues closer than this (in frequency) are merged into one level.
pub const MERGE_TOL: f64 = 1e-9;
/// Required accuracy of `Σ e^{2πiω_k} P_k` against the input.
pub const RECONSTRUCTION_TOL: f64 = 1e-7;

/// Distinct frequencies of a unitary with orthonormal eigenspace bases.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    dim: usize,
    frequencies: Vec<f64>,
    bases: Vec<CMat>,
}

/// Full eigensystem of a unitary via complex Schur form.
pub fn decompose(u: &DenseUnitary) -> Result<SpectralDecomposition> {
    let n = u.dim();
    // The default convergence test (machine epsilon, unbounded sweeps) can
    // spin forever on highly degenerate spectra.
    let (q, diag) = match [1e-14, 1e-12, 1e-10].iter().find_map(|eps| u.matrix().clone().try_schur(*eps, 100_000)) {
        Some(schur) => {
            let (q, t) = schur.unpack();
            let d: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
            (q, d)
        }
        None => pencil_eigen(u.matrix()),
    };
    let mut eig: Vec<(f64, usize)> = (0..n).map(|k| (wrap(diag[k].arg() / (2.0 * std::f64::consts::PI)), k)).collect();
    eig.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut groups: Vec<Vec<(f64, usize)>> = Vec::new();
    for e in eig {
        match groups.last_mut() {
            Some(g) if e.0 - g.last().unwrap().0 <= MERGE_TOL => g.push(e),
            _ => groups.push(vec![e]),
        }
    }
    if groups.len() > 1 {
        let first = groups[0][0].0;
        let last = groups.last().unwrap().last().unwrap().0;
        if circ_dist(first, last) <= MERGE_TOL {
            let tail = groups.pop().unwrap();
            groups[0].splice(0..0, tail);
        }
    }

    let mut frequencies = Vec::with_capacity(groups.len());
    let mut bases = Vec::with_capacity(groups.len());
    for g in groups {
        let anchor = g[0].0;
        let mean_offset: f64 = g
            .iter()
            .map(|(w, _)| {
                let d = (w - anchor).rem_euclid(1.0);
                if d > 0.5 {
                    d - 1.0
                } else {
                    d
                }
            })
            .sum::<f64>()
            / g.len() as f64;
        frequencies.push(wrap(anchor + mean_offset));
        let cols: Vec<_> = g.iter().map(|(_, k)| q.column(*k).into_owned()).collect();
        let b = orthonormal_columns(&CMat::from_columns(&cols), 1e-6);
        if b.ncols() != g.len() {
            return Err(Error::Invalid("eigenvectors lost rank during orthonormalization".into()));
        }
        bases.push(b);
    }
    let dec = SpectralDecomposition { dim: n, frequencies, bases };
    let res = op_norm(&(dec.reconstruct() - u.matrix()));
    if res > RECONSTRUCTION_TOL {
        return Err(Error::Invalid(format!("eigendecomposition residual {res:.3e} exceeds tolerance")));
    }
    Ok(dec)
}

/// Eigenvectors of a normal matrix from the Hermitian combination
/// `Re U + α Im U` with a generic `α`, used when Schur iteration stalls.
fn pencil_eigen(u: &CMat) -> (CMat, Vec<C64>) {
    const ALPHA: f64 = 0.754_877_666_246_692_8;
    let re = (u + u.adjoint()) * C64::from(0.5);
    let im = (u - u.adjoint()) * C64::new(0.0, -0.5);
    let eig = (re + im * C64::from(ALPHA)).symmetric_eigen();
    let q = eig.eigenvectors;
    let d = (0..q.ncols()).map(|k| q.column(k).dotc(&(u * q.column(k)))).collect();
    (q, d)
}

impl SpectralDecomposition {
    /// Builds a decomposition from explicit frequencies and bases.
    pub fn from_parts(frequencies: Vec<f64>, bases: Vec<CMat>) -> Result<Self> {
        if frequencies.len() != bases.len() || bases.is_empty() {
            return Err(Error::Invalid("frequencies and bases must pair up".into()));
        }
        let dim = bases[0].nrows();
        let total: usize = bases.iter().map(|b| b.ncols()).sum();
        if total != dim {
            return Err(Error::Invalid(format!("eigenspace dimensions sum to {total}, expected {dim}")));
        }
        Ok(Self { dim, frequencies: frequencies.into_iter().map(wrap).collect(), bases })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Distinct frequencies ω_k ∈ [0, 1).
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    /// Degeneracy d_k of each frequency.
    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }

    pub fn basis(&self, k: usize) -> &CMat {
        &self.bases[k]
    }

    /// `Σ e^{2πiω_k} P_k`.
    pub fn reconstruct(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for (w, b) in self.frequencies.iter().zip(&self.bases) {
            m += projector_from_basis(b) * crate::linalg::cis(*w);
        }
        m
    }

    /// Frequency of each eigenvector, expanded with multiplicity, paired with the vector.
    pub fn eigenpairs(&self) -> Vec<(f64, crate::linalg::CVec)> {
        let mut out = Vec::with_capacity(self.dim);
        for (w, b) in self.frequencies.iter().zip(&self.bases) {
            for j in 0..b.ncols() {
                out.push((*w, b.column(j).into_owned()));
            }
        }
        out
    }

    /// Orthonormal basis of all eigenvectors whose frequency lies within `window` of `omega`.
    pub fn window_basis(&self, omega: f64, window: f64) -> CMat {
        let cols: Vec<_> = self
            .frequencies
            .iter()
            .zip(&self.bases)
            .filter(|(w, _)| circ_dist(**w, omega) <= window + 1e-12)
            .flat_map(|(_, b)| b.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
            .collect();
        if cols.is_empty() {
            CMat::zeros(self.dim, 0)
        } else {
            CMat::from_columns(&cols)
        }
    }

    pub fn spectrum(&self) -> Vec<SpectrumEntry> {
        self.frequencies.iter().zip(self.dims()).map(|(w, d)| SpectrumEntry { omega: *w, dim: d }).collect()
    }
}

/// One line of a spectrum dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub omega: f64,
    pub dim: usize,
}

/// A group of close frequencies anchored at `anchor / M`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyGroup {
    pub anchor: usize,
    /// Indices into [`SpectralDecomposition::frequencies`].
    pub members: Vec<usize>,
}

/// Coarse (M) and fine (L) resolutions together with the grouping of a spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityProfile {
    pub m: usize,
    pub l: usize,
    pub groups: Vec<FrequencyGroup>,
}

fn check_pow2(x: usize, what: &str) -> Result<()> {
    if x == 0 || !x.is_power_of_two() {
        return Err(Error::Profile(format!("{what} = {x} is not a power of two")));
    }
    Ok(())
}

impl SparsityProfile {
    /// Groups the spectrum and checks the sparsity invariants: groups more than
    /// 1/M apart, spread below 1/L, one grid anchor within 1/L of each group.
    pub fn new(dec: &SpectralDecomposition, m: usize, l: usize) -> Result<Self> {
        check_pow2(m, "M")?;
        check_pow2(l, "L")?;
        if l < m {
            return Err(Error::Profile(format!("L = {l} is below M = {m}")));
        }
        let gap = 1.0 / m as f64;
        let fine = 1.0 / l as f64;
        let freqs = dec.frequencies();
        let mut order: Vec<usize> = (0..freqs.len()).collect();
        order.sort_by(|a, b| freqs[*a].partial_cmp(&freqs[*b]).unwrap());

        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for &k in &order {
            match clusters.last_mut() {
                Some(c) if freqs[k] - freqs[*c.last().unwrap()] <= gap => c.push(k),
                _ => clusters.push(vec![k]),
            }
        }
        if clusters.len() > 1 {
            let first = freqs[clusters[0][0]];
            let last = freqs[*clusters.last().unwrap().last().unwrap()];
            if 1.0 - last + first <= gap {
                let tail = clusters.pop().unwrap();
                clusters[0].splice(0..0, tail);
            }
        }

        let mut groups = Vec::with_capacity(clusters.len());
        for members in clusters {
            let spread = members
                .iter()
                .flat_map(|a| members.iter().map(move |b| circ_dist(freqs[*a], freqs[*b])))
                .fold(0.0, f64::max);
            if spread >= fine {
                return Err(Error::Profile(format!("group spread {spread:.4} is not below 1/L")));
            }
            let anchors: Vec<usize> = (0..m)
                .filter(|lm| members.iter().any(|k| circ_dist(freqs[*k], *lm as f64 / m as f64) <= fine + 1e-12))
                .collect();
            match anchors.as_slice() {
                [a] => groups.push(FrequencyGroup { anchor: *a, members }),
                [] => return Err(Error::Profile(format!("no grid point within 1/L of group at {:.5}", freqs[members[0]]))),
                _ => return Err(Error::Profile("group has two grid anchors".into())),
            }
        }
        for (i, g) in groups.iter().enumerate() {
            if groups[..i].iter().any(|h| h.anchor == g.anchor) {
                return Err(Error::Profile(format!("two groups share anchor {}", g.anchor)));
            }
        }
        Ok(Self { m, l, groups })
    }

    pub fn anchors(&self) -> Vec<usize> {
        let mut a: Vec<usize> = self.groups.iter().map(|g| g.anchor).collect();
        a.sort_unstable();
        a
    }

    pub fn group_at(&self, anchor: usize) -> Option<&FrequencyGroup> {
        self.groups.iter().find(|g| g.anchor == anchor)
    }

    /// Groups having a member within 1/L of `omega`.
    pub fn groups_near<'a>(&'a self, dec: &'a SpectralDecomposition, omega: f64) -> impl Iterator<Item = &'a FrequencyGroup> {
        let fine = 1.0 / self.l as f64;
        self.groups
            .iter()
            .filter(move |g| g.members.iter().any(|k| circ_dist(dec.frequencies()[*k], omega) <= fine + 1e-12))
    }
}

/// Orthonormal basis of `E_ω`: every group with a member within 1/L of `omega`.
pub fn eigenspace_basis(dec: &SpectralDecomposition, profile: &SparsityProfile, omega: f64) -> CMat {
    let cols: Vec<_> = profile
        .groups_near(dec, omega)
        .flat_map(|g| g.members.iter())
        .flat_map(|k| dec.basis(*k).column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
        .collect();
    if cols.is_empty() {
        CMat::zeros(dec.dim(), 0)
    } else {
        CMat::from_columns(&cols)
    }
}

/// Projector onto `E_ω`.
pub fn projector(dec: &SpectralDecomposition, omega: f64, profile: &SparsityProfile) -> CMat {
    projector_from_basis(&eigenspace_basis(dec, profile, omega))
}

/// `(μ_U, μ_V)`: largest sine between a unit vector of one space and the other
/// space. `None` marks an empty own space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubspaceDistances {
    pub mu_u: Option<f64>,
    pub mu_v: Option<f64>,
    pub dim_u: usize,
    pub dim_v: usize,
}

fn check_projector(p: &CMat) -> Result<()> {
    let herm = op_norm(&(p - p.adjoint()));
    let idem = op_norm(&(p * p - p));
    let dev = herm.max(idem);
    if dev > 1e-8 {
        return Err(Error::NotProjector(dev));
    }
    Ok(())
}

/// Orthonormal basis of the range of a projector.
pub fn projector_range(p: &CMat) -> Result<CMat> {
    check_projector(p)?;
    let h = (p + p.adjoint()) * C64::from(0.5);
    let eig = h.symmetric_eigen();
    let cols: Vec<_> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.5)
        .map(|(j, _)| eig.eigenvectors.column(j).into_owned())
        .collect();
    if cols.is_empty() {
        Ok(CMat::zeros(p.nrows(), 0))
    } else {
        Ok(orthonormal_columns(&CMat::from_columns(&cols), 1e-6))
    }
}

/// Subspace distances between the ranges of two projectors.
pub fn subspace_distances(p_u: &CMat, p_v: &CMat) -> Result<SubspaceDistances> {
    if p_u.shape() != p_v.shape() {
        return Err(Error::Dimension("projectors of different sizes".into()));
    }
    let bu = projector_range(p_u)?;
    let bv = projector_range(p_v)?;
    Ok(distances_from_bases(&bu, &bv))
}

fn one_sided(bu: &CMat, bv: &CMat) -> Option<f64> {
    let (du, dv) = (bu.ncols(), bv.ncols());
    if du == 0 {
        return None;
    }
    if dv == 0 || du > dv {
        return Some(1.0);
    }
    let cosines = (bu.adjoint() * bv).singular_values();
    let cmin = cosines.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    Some((1.0 - cmin * cmin).max(0.0).sqrt())
}

/// Principal-angle distances between the spans of two orthonormal bases.
pub fn distances_from_bases(bu: &CMat, bv: &CMat) -> SubspaceDistances {
    SubspaceDistances { mu_u: one_sided(bu, bv), mu_v: one_sided(bv, bu), dim_u: bu.ncols(), dim_v: bv.ncols() }
}

/// True iff `max(μ_U, μ_V) ≥ d`, or exactly one space is empty.
pub fn is_d_distinguishable(dist: &SubspaceDistances, d: f64) -> bool {
    match (dist.mu_u, dist.mu_v) {
        (None, None) => false,
        (None, Some(_)) | (Some(_), None) => true,
        (Some(a), Some(b)) => a.max(b) >= d - 1e-9,
    }
}

/// Ancilla mass within circular distance `K/L` of each input frequency.
pub fn w_type_masses(channel: &[Vec<f64>], freqs: &[f64], k: usize) -> Result<Vec<f64>> {
    if channel.len() != freqs.len() {
        return Err(Error::Dimension("one ancilla distribution per eigenvector is required".into()));
    }
    let mut out = Vec::with_capacity(channel.len());
    for (p, w) in channel.iter().zip(freqs) {
        let l = p.len();
        let eps = k as f64 / l as f64;
        let mass = p
            .iter()
            .enumerate()
            .filter(|(i, _)| circ_dist(*i as f64 / l as f64, *w) <= eps + 1e-12)
            .map(|(_, v)| v)
            .sum();
        out.push(mass);
    }
    Ok(out)
}

/// Checks the `W_{1/K, K/L}` contract: every eigenvector keeps at least
/// `1 − 2/K` of its ancilla mass within `K/L` of its frequency.
pub fn verify_w_type(channel: &[Vec<f64>], freqs: &[f64], k: usize) -> Result<bool> {
    let need = 1.0 - 2.0 / k as f64;
    Ok(w_type_masses(channel, freqs, k)?.iter().all(|m| *m >= need - 1e-9))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cis, haar_unitary, CVec, ONE, ZERO};
    use crate::rng::Streams;
    use proptest::prelude::*;

    #[test]
    fn pencil_fallback_diagonalizes() {
        let u = diag_with_basis(&[0.0, 0.0, 0.25, 0.5, 0.5, 0.5, 0.75, 0.9], 11);
        let (q, d) = pencil_eigen(u.matrix());
        let rebuilt = &q * CMat::from_diagonal(&CVec::from_vec(d)) * q.adjoint();
        assert!(op_norm(&(rebuilt - u.matrix())) < 1e-9);
    }

    fn diag_with_basis(freqs: &[f64], seed: u64) -> DenseUnitary {
        let mut rng = Streams::new(seed).stream("basis", 0);
        let w = haar_unitary(freqs.len(), &mut rng);
        let d = CMat::from_diagonal(&CVec::from_iterator(freqs.len(), freqs.iter().map(|f| cis(*f))));
        DenseUnitary::new(&w * d * w.adjoint()).unwrap()
    }

    #[test]
    fn identity_has_single_frequency() {
        let dec = decompose(&DenseUnitary::identity(8)).unwrap();
        assert_eq!(dec.frequencies().len(), 1);
        assert!(dec.frequencies()[0].abs() < 1e-12);
        assert_eq!(dec.dims(), vec![8]);
    }

    #[test]
    fn diagonal_frequencies() {
        let dec = decompose(&DenseUnitary::from_frequencies(&[0.0, 0.25]).unwrap()).unwrap();
        let mut f: Vec<_> = dec.frequencies().iter().cloned().zip(dec.dims()).collect();
        f.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!((f[0].0).abs() < 1e-12 && (f[1].0 - 0.25).abs() < 1e-12);
        assert_eq!((f[0].1, f[1].1), (1, 1));
    }

    #[test]
    fn random_unitary_reconstructs() {
        let mut rng = Streams::new(21).stream("u", 0);
        let u = DenseUnitary::new(haar_unitary(8, &mut rng)).unwrap();
        let dec = decompose(&u).unwrap();
        assert!(op_norm(&(dec.reconstruct() - u.matrix())) <= 1e-7);
        for (w, v) in dec.eigenpairs() {
            assert!((u.matrix() * &v - &v * cis(w)).norm() < 1e-8);
        }
    }

    #[test]
    fn frequencies_near_one_wrap_and_merge() {
        let u = diag_with_basis(&[0.0, 1.0 - 1e-12, 0.5, 0.5], 3);
        let dec = decompose(&u).unwrap();
        assert_eq!(dec.frequencies().len(), 2);
        assert!(dec.dims().iter().all(|d| *d == 2));
    }

    #[test]
    fn projector_trivial_cases() {
        let dec = decompose(&DenseUnitary::identity(4)).unwrap();
        let prof = SparsityProfile::new(&dec, 4, 64).unwrap();
        assert!(op_norm(&(projector(&dec, 0.0, &prof) - CMat::identity(4, 4))) < 1e-12);
        assert!(op_norm(&projector(&dec, 0.5, &prof)) < 1e-12);
    }

    #[test]
    fn projector_rank_equals_degeneracy() {
        let u = diag_with_basis(&[0.25, 0.25, 0.25, 0.0, 0.5, 0.5, 0.75, 0.0], 5);
        let dec = decompose(&u).unwrap();
        let prof = SparsityProfile::new(&dec, 8, 64).unwrap();
        let p = projector(&dec, 0.25, &prof);
        assert!(op_norm(&(&p * &p - &p)) < 1e-8);
        let trace: f64 = (0..8).map(|i| p[(i, i)].re).sum();
        assert!((trace - 3.0).abs() < 1e-8);
        let q = projector(&dec, 0.5, &prof);
        assert!(op_norm(&(&p * &q)) < 1e-8);
    }

    #[test]
    fn profile_groups_and_anchors() {
        let l = 64.0;
        let u = diag_with_basis(&[0.0, 0.3 / l, 0.5 + 0.5 / l, 0.5, 0.25 - 0.9 / l, 0.0, 0.5, 0.25], 7);
        let dec = decompose(&u).unwrap();
        let prof = SparsityProfile::new(&dec, 8, 64).unwrap();
        assert_eq!(prof.anchors(), vec![0, 2, 4]);
        // Grid points exactly 1/M apart are not separated groups.
        assert!(SparsityProfile::new(&dec, 4, 64).is_err());
        // Off-grid singleton far from every anchor is rejected.
        let bad = decompose(&diag_with_basis(&[0.0, 0.0, 0.5, 0.5 + 0.125], 8)).unwrap();
        assert!(SparsityProfile::new(&bad, 4, 64).is_err());
        // Two frequencies closer than 1/M but further than 1/L apart violate the spread bound.
        let wide = decompose(&diag_with_basis(&[0.0, 3.0 / l, 0.5, 0.5], 9)).unwrap();
        assert!(SparsityProfile::new(&wide, 4, 64).is_err());
    }

    #[test]
    fn coincident_and_orthogonal_distances() {
        let e0 = CMat::from_column_slice(4, 1, &[ONE, ZERO, ZERO, ZERO]);
        let e1 = CMat::from_column_slice(4, 1, &[ZERO, ONE, ZERO, ZERO]);
        let p0 = projector_from_basis(&e0);
        let p1 = projector_from_basis(&e1);
        let same = subspace_distances(&p0, &p0).unwrap();
        assert!(same.mu_u.unwrap() < 1e-8 && same.mu_v.unwrap() < 1e-8);
        let orth = subspace_distances(&p0, &p1).unwrap();
        assert!((orth.mu_u.unwrap() - 1.0).abs() < 1e-12 && (orth.mu_v.unwrap() - 1.0).abs() < 1e-12);
        assert!(!is_d_distinguishable(&same, 0.5));
        assert!(is_d_distinguishable(&orth, 0.5));
    }

    #[test]
    fn larger_space_has_unit_distance() {
        let mut rng = Streams::new(31).stream("sub", 0);
        let w = haar_unitary(6, &mut rng);
        let bu = w.columns(0, 3).into_owned();
        let bv = w.columns(1, 1).into_owned();
        let d = subspace_distances(&projector_from_basis(&bu), &projector_from_basis(&bv)).unwrap();
        assert_eq!(d.mu_u, Some(1.0));
        assert!(d.mu_v.unwrap() < 1e-8);
    }

    #[test]
    fn empty_space_conventions() {
        let e0 = CMat::from_column_slice(2, 1, &[ONE, ZERO]);
        let d = subspace_distances(&projector_from_basis(&e0), &CMat::zeros(2, 2)).unwrap();
        assert_eq!(d.mu_u, Some(1.0));
        assert_eq!(d.mu_v, None);
        assert!(is_d_distinguishable(&d, 0.9));
        let both = subspace_distances(&CMat::zeros(2, 2), &CMat::zeros(2, 2)).unwrap();
        assert!(!is_d_distinguishable(&both, 0.1));
    }

    #[test]
    fn non_projector_rejected() {
        let m = CMat::identity(2, 2) * C64::from(0.5);
        assert!(matches!(subspace_distances(&m, &m), Err(Error::NotProjector(_))));
    }

    #[test]
    fn exact_phase_channel_is_w_type() {
        let l = 16;
        let freqs = [3.0 / l as f64, 0.0];
        let chan: Vec<Vec<f64>> = freqs
            .iter()
            .map(|w| {
                let mut p = vec![0.0; l];
                p[(w * l as f64).round() as usize] = 1.0;
                p
            })
            .collect();
        for k in [1, 4, 16] {
            assert!(verify_w_type(&chan, &freqs, k).unwrap());
        }
    }

    #[test]
    fn uniform_channel_fails_w_type() {
        for l in [64usize, 128] {
            let chan = vec![vec![1.0 / l as f64; l]];
            assert!(!verify_w_type(&chan, &[0.3], 16).unwrap());
        }
    }

    proptest! {
        #[test]
        fn equal_dimension_distances_are_symmetric(seed in 0u64..500, d in 1usize..4) {
            let mut rng = Streams::new(seed).stream("sym", 0);
            let a = haar_unitary(8, &mut rng);
            let b = haar_unitary(8, &mut rng);
            let dist = distances_from_bases(&a.columns(0, d).into_owned(), &b.columns(0, d).into_owned());
            prop_assert!((dist.mu_u.unwrap() - dist.mu_v.unwrap()).abs() <= 1e-8);
        }
    }
}
