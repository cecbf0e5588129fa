//! Black-box device distinguishing: whether two devices' eigenspaces at a
//! shared frequency coincide or are d-distinguishable, and recognition of a
//! black-box device inside a circuit family.
//!
//! Runs on the projector backend. The composite sign operators (`Inv`, the
//! `Dif` variants) act inside amplitude amplification as exact reflections on
//! the subspace their vote rules select; the vote machinery itself is
//! simulated per input vector by [`check`], [`dist_ort`], [`dist_closed`] and
//! [`inv_votes`]. Black-box cost is accounted per application of each part.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplify::{grover_iterate, Reflection, SearchSampler, Start, StoppingPolicy};
use crate::circuit::Oracle;
use crate::error::{Error, Result};
use crate::linalg::{haar_vector, orthonormal_columns, projection_weight, CMat, CVec, C64};
use crate::report::{Queries, BLACK_BOX, TOMOGRAPHY};
use crate::rng::{Rng, Streams};
use crate::spectral::{decompose, distances_from_bases, eigenspace_basis, is_d_distinguishable, SparsityProfile, SubspaceDistances};
use crate::statevec::{DenseUnitary, RegisterLayout, StateVector};
use crate::structure::{amplified_search, plurality, Family, SearchRun};

/// Queries made to the second (reference) device.
pub const REFERENCE: &str = "reference";

/// Opaque device: only applications, each counted.
pub struct BlackBox {
    inner: Box<dyn Oracle>,
}

impl BlackBox {
    pub fn new(oracle: impl Oracle + 'static) -> Self {
        Self { inner: Box::new(oracle) }
    }

    pub fn qubits(&self) -> usize {
        self.inner.qubits()
    }

    pub fn apply(&self, state: &StateVector, target: &str) -> Result<StateVector> {
        self.inner.apply_where(state, target, &|_| true)
    }

    pub fn apply_controlled(&self, state: &StateVector, control: &str, target: &str) -> Result<StateVector> {
        crate::circuit::u_cond(self.inner.as_ref(), state, control, target)
    }

    pub fn queries(&self) -> u64 {
        self.inner.queries()
    }

    /// Matrix of the device read off column by column through [`BlackBox::apply`].
    pub fn tomograph(&self) -> Result<DenseUnitary> {
        let n = self.qubits();
        let layout = RegisterLayout::new(&[("x", n)])?;
        let dim = 1usize << n;
        let mut m = CMat::zeros(dim, dim);
        for c in 0..dim {
            let out = self.apply(&StateVector::basis(layout.clone(), &[("x", c)])?, "x")?;
            m.set_column(c, &out.register_vector("x")?);
        }
        DenseUnitary::new(m)
    }
}

/// Thresholds and sizes; defaults are the reference values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistinguishConfig {
    pub m: usize,
    /// Fine grid; at least `64·M` by default.
    pub l: usize,
    pub d: f64,
    /// Revealing copies per membership check.
    pub check_copies: usize,
    /// Squared projection length that sets a membership flag.
    pub check_weight: f64,
    /// Projection length below which `Dist_ort` fires.
    pub ort_length: f64,
    pub ort_copies: usize,
    /// Registers `j` of `Dist_closed`, each with `closed_copies` readouts.
    pub closed_registers: usize,
    pub closed_copies: usize,
    /// `S′` fires when at least this fraction of vote bits is set.
    pub closed_rho: f64,
    /// Registers of each `Dif` operator.
    pub registers: usize,
    /// `Change` fires when at least this fraction of readouts is far from 0; admissible (1/8, 7/32).
    pub change_rho: f64,
    pub policy: StoppingPolicy,
    /// Copies of `Difference` inside the device-recognition sign.
    pub sign_copies: usize,
    pub sign_rho: f64,
    /// Re-evaluations when a `Dif` fraction lands in the forbidden gap.
    pub gap_retries: usize,
    pub attempts: usize,
    pub runs: usize,
}

impl Default for DistinguishConfig {
    fn default() -> Self {
        Self {
            m: 4,
            l: 256,
            d: 0.5,
            check_copies: 10,
            check_weight: 1.0 / 9.0,
            ort_length: 1.0 / 30.0,
            ort_copies: 10,
            closed_registers: 20,
            closed_copies: 8,
            closed_rho: 1.0 / 20.0,
            registers: 32,
            change_rho: 5.0 / 32.0,
            policy: StoppingPolicy::default(),
            sign_copies: 20,
            sign_rho: 0.2,
            gap_retries: 2,
            attempts: 3,
            runs: 9,
        }
    }
}

impl DistinguishConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.m.is_power_of_two() || !self.l.is_power_of_two() || self.l < self.m {
            return Err(Error::Invalid(format!("M = {}, L = {} must be powers of two with L ≥ M", self.m, self.l)));
        }
        if !(self.d > 0.0 && self.d <= 1.0) {
            return Err(Error::Invalid(format!("d = {} outside (0, 1]", self.d)));
        }
        if !(self.change_rho > 0.125 && self.change_rho < 7.0 / 32.0) {
            return Err(Error::Invalid(format!("change threshold {} outside (1/8, 7/32)", self.change_rho)));
        }
        for (name, x) in [("check_weight", self.check_weight), ("closed_rho", self.closed_rho), ("sign_rho", self.sign_rho), ("ort_length", self.ort_length)] {
            if !(x > 0.0 && x < 1.0) {
                return Err(Error::Invalid(format!("{name} = {x} outside (0, 1)")));
            }
        }
        if self.registers == 0 || self.sign_copies == 0 || self.closed_registers == 0 || self.closed_copies == 0 {
            return Err(Error::Invalid("register counts must be positive".into()));
        }
        Ok(())
    }

    fn rev_rest(&self) -> u64 {
        // Rev on the fine ancilla plus the turning-based Rest on the coarse one.
        (self.l - 1 + self.m - 1) as u64
    }

    /// Upper end of the `Turn` time segment `[0, ⌈2/d⌉]`.
    pub fn turn_bound(&self) -> usize {
        (2.0 / self.d).ceil() as usize
    }
}

/// Principal decomposition of one space against the other.
#[derive(Clone, Debug)]
struct Principal {
    /// `(cos², unit vector in own space)`.
    pairs: Vec<(f64, CVec)>,
}

impl Principal {
    fn new(own: &CMat, other: &CMat) -> Self {
        if own.ncols() == 0 {
            return Self { pairs: Vec::new() };
        }
        let g = if other.ncols() == 0 {
            CMat::zeros(own.ncols(), own.ncols())
        } else {
            let c = own.adjoint() * other;
            &c * c.adjoint()
        };
        let eig = g.symmetric_eigen();
        let pairs = (0..own.ncols())
            .map(|j| (eig.eigenvalues[j].clamp(0.0, 1.0), own * eig.eigenvectors.column(j)))
            .collect();
        Self { pairs }
    }

    fn span(&self, n: usize, keep: impl Fn(f64) -> bool) -> CMat {
        let cols: Vec<CVec> = self.pairs.iter().filter(|(c2, _)| keep(*c2)).map(|(_, v)| v.clone()).collect();
        if cols.is_empty() {
            CMat::zeros(n, 0)
        } else {
            orthonormal_columns(&CMat::from_columns(&cols), 1e-9)
        }
    }
}

const INTERSECT_TOL: f64 = 1e-8;

/// Subspaces of one case: `L^U`, `L^V`, their intersection `L_0`, the
/// differences `L′_U`, `L′_V`, their span `L′`, and the parts `L″` orthogonal
/// to the other space.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub bu: CMat,
    pub bv: CMat,
    pub l0: CMat,
    pub lp_u: CMat,
    pub lp_v: CMat,
    pub lp: CMat,
    pub lpp_u: CMat,
    pub lpp_v: CMat,
    pub dist: SubspaceDistances,
    pu: Principal,
    pv: Principal,
}

impl Geometry {
    pub fn new(bu: CMat, bv: CMat) -> Self {
        let n = bu.nrows();
        let pu = Principal::new(&bu, &bv);
        let pv = Principal::new(&bv, &bu);
        let l0 = pu.span(n, |c| c > 1.0 - INTERSECT_TOL);
        let lp_u = pu.span(n, |c| c <= 1.0 - INTERSECT_TOL);
        let lp_v = pv.span(n, |c| c <= 1.0 - INTERSECT_TOL);
        let lp = if lp_u.ncols() + lp_v.ncols() == 0 {
            CMat::zeros(n, 0)
        } else {
            let mut cols: Vec<CVec> = lp_u.column_iter().map(|c| c.into_owned()).collect();
            cols.extend(lp_v.column_iter().map(|c| c.into_owned()));
            orthonormal_columns(&CMat::from_columns(&cols), 1e-7)
        };
        let lpp_u = pu.span(n, |c| c < 1e-10);
        let lpp_v = pv.span(n, |c| c < 1e-10);
        let dist = distances_from_bases(&bu, &bv);
        Self { bu, bv, l0, lp_u, lp_v, lp, lpp_u, lpp_v, dist, pu, pv }
    }

    pub fn dim(&self) -> usize {
        self.bu.nrows()
    }

    pub fn coincident(&self) -> bool {
        self.lp.ncols() == 0
    }

    /// Some `μ` with `√(1 − μ²) ≤ 1/30`.
    pub fn almost_orthogonal(&self, ort_length: f64) -> bool {
        [self.dist.mu_u, self.dist.mu_v].iter().flatten().any(|m| (1.0 - m * m).max(0.0).sqrt() <= ort_length)
    }

    /// Vectors of the larger space whose readouts against the smaller one
    /// are far with probability above `far`.
    fn far_part(&self, u_side: bool, far: f64, strict: bool) -> CMat {
        let p = if u_side { &self.pu } else { &self.pv };
        let lim = 1.0 - far;
        p.span(self.dim(), |c2| if strict { c2 < lim } else { c2 <= lim })
    }
}

/// Basis of the `ω`-eigenspace of `u` at resolution `(M, L)`.
pub fn eigenspace_at(u: &DenseUnitary, omega: f64, m: usize, l: usize) -> Result<CMat> {
    let dec = decompose(u)?;
    Ok(match SparsityProfile::new(&dec, m, l) {
        Ok(p) => eigenspace_basis(&dec, &p, omega),
        Err(_) => dec.window_basis(omega, 1.0 / l as f64),
    })
}

/// Two devices at a shared candidate frequency, with the promise checked.
#[derive(Clone, Debug)]
pub struct DistinguishCase {
    pub omega: f64,
    pub d: f64,
    pub geometry: Geometry,
}

impl DistinguishCase {
    pub fn new(u: &DenseUnitary, v: &DenseUnitary, omega: f64, cfg: &DistinguishConfig) -> Result<Self> {
        cfg.validate()?;
        if u.dim() != v.dim() {
            return Err(Error::Dimension("devices act on different dimensions".into()));
        }
        let g = Geometry::new(eigenspace_at(u, omega, cfg.m, cfg.l)?, eigenspace_at(v, omega, cfg.m, cfg.l)?);
        Self::from_geometry(g, omega, cfg.d)
    }

    pub fn from_geometry(geometry: Geometry, omega: f64, d: f64) -> Result<Self> {
        if !geometry.coincident() && !is_d_distinguishable(&geometry.dist, d) {
            return Err(Error::Promise(format!(
                "eigenspaces at {omega} are neither coincident nor {d}-distinguishable (μ_U = {:?}, μ_V = {:?})",
                geometry.dist.mu_u, geometry.dist.mu_v
            )));
        }
        Ok(Self { omega, d, geometry })
    }
}

/// `Turn_t = (I_{L^U} I_{L^V})^t`.
pub fn turn(state: &CVec, g: &Geometry, t: usize) -> CVec {
    let (ru, rv) = (Reflection::Subspace(g.bu.clone()), Reflection::Subspace(g.bv.clone()));
    let mut x = state.clone();
    for _ in 0..t {
        x = ru.apply(&rv.apply(&x));
    }
    x
}

/// Membership flags `(α_U, α_V)`: squared projection at least the check weight.
pub fn check(a: &CVec, g: &Geometry, cfg: &DistinguishConfig) -> (bool, bool) {
    (projection_weight(&g.bu, a) >= cfg.check_weight, projection_weight(&g.bv, a) >= cfg.check_weight)
}

/// `Dist_ort` on one input: `(sign, α_ort)`. Identity when the flags agree.
pub fn dist_ort(a: &CVec, flags: (bool, bool), g: &Geometry, cfg: &DistinguishConfig) -> (f64, bool) {
    let (au, av) = flags;
    if au == av {
        return (1.0, false);
    }
    let other = if au { &g.bv } else { &g.bu };
    if projection_weight(other, a).sqrt() < cfg.ort_length {
        (-1.0, true)
    } else {
        (1.0, false)
    }
}

/// `Dist⁻_ort`: toggles `α_ort` like [`dist_ort`] without the sign.
pub fn dist_ort_minus(a: &CVec, flags: (bool, bool), g: &Geometry, cfg: &DistinguishConfig) -> bool {
    dist_ort(a, flags, g, cfg).1
}

/// Vote statistics of `Dist_closed` on one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedVotes {
    pub sign: f64,
    pub beta_fraction: f64,
}

/// `Dist_closed` on one input: per register a random turn, then revealing
/// readouts against `L^U`; the vote bit follows the two-case rule, and the
/// sign flips when enough bits are set.
pub fn dist_closed(a: &CVec, flags: (bool, bool), alpha_ort: bool, g: &Geometry, cfg: &DistinguishConfig, rng: &mut Rng) -> ClosedVotes {
    let (au, av) = flags;
    if !(au || av) || alpha_ort {
        return ClosedVotes { sign: 1.0, beta_fraction: 0.0 };
    }
    let bound = cfg.turn_bound();
    let k = cfg.closed_copies;
    let mut set = 0usize;
    for _ in 0..cfg.closed_registers {
        let t = rng.gen_range(0..=bound);
        let w = projection_weight(&g.bu, &turn(a, g, t)).clamp(0.0, 1.0);
        let close = (0..k).filter(|_| rng.gen::<f64>() < w).count();
        let beta = if au { 2 * (k - close) >= k } else { 2 * close >= k };
        if beta {
            set += 1;
        }
    }
    let frac = set as f64 / cfg.closed_registers as f64;
    ClosedVotes { sign: if frac >= cfg.closed_rho { -1.0 } else { 1.0 }, beta_fraction: frac }
}

/// `Inv = Check Dist⁻_ort Dist_closed Dist_ort Check` on one input; returns the sign.
pub fn inv_votes(a: &CVec, g: &Geometry, cfg: &DistinguishConfig, rng: &mut Rng) -> f64 {
    let flags = check(a, g, cfg);
    let (s1, alpha_ort) = dist_ort(a, flags, g, cfg);
    let s2 = dist_closed(a, flags, alpha_ort, g, cfg, rng).sign;
    s1 * s2
}

/// `Inv` as an operator: `I_{L′}`, identity when the spaces coincide.
pub fn inv(v: &CVec, g: &Geometry) -> CVec {
    Reflection::Subspace(g.lp.clone()).apply(v)
}

/// `(U, V)` applications of one `Inv`.
fn inv_cost(cfg: &DistinguishConfig, rng: &mut Rng) -> (u64, u64) {
    let rr = cfg.rev_rest();
    let check = cfg.check_copies as u64 * rr;
    let mut u = 2 * check;
    let mut v = 2 * check + 2 * cfg.ort_copies as u64 * rr;
    for _ in 0..cfg.closed_registers {
        let t = rng.gen_range(0..=cfg.turn_bound()) as u64;
        // D_j and D_j^{-1}: turn, readouts, unturn.
        u += 2 * (2 * t * rr + cfg.closed_copies as u64 * rr);
        v += 2 * (2 * t * rr);
    }
    (u, v)
}

/// `(U, V)` applications of one `Inv″`.
fn inv_pp_cost(cfg: &DistinguishConfig, u_side: bool) -> (u64, u64) {
    let rr = cfg.rev_rest();
    let check = 2 * cfg.check_copies as u64 * rr;
    let reads = cfg.closed_copies as u64 * rr;
    if u_side {
        (check, check + reads)
    } else {
        (check + reads, check)
    }
}

/// The named ancillas `ᾱ` plus `α_dif`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AncillaFlags {
    pub same_dim: bool,
    pub u_gt_v: bool,
    pub u_lt_v: bool,
    pub ort_u_gt_v: bool,
    pub ort_u_lt_v: bool,
    pub dif: bool,
}

impl AncillaFlags {
    pub fn any_dif_flag(&self) -> bool {
        self.same_dim || self.u_gt_v || self.u_lt_v || self.ort_u_gt_v || self.ort_u_lt_v
    }

    fn xor(&mut self, other: &AncillaFlags) {
        self.same_dim ^= other.same_dim;
        self.u_gt_v ^= other.u_gt_v;
        self.u_lt_v ^= other.u_lt_v;
        self.ort_u_gt_v ^= other.ort_u_gt_v;
        self.ort_u_lt_v ^= other.ort_u_lt_v;
    }

    pub fn all_clear(&self) -> bool {
        !self.any_dif_flag() && !self.dif
    }
}

/// One `Dif` operator's outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifOutcome {
    pub fired: bool,
    /// Fraction of readouts far from 0.
    pub fraction: f64,
    /// All evaluations landed in the forbidden gap.
    pub indeterminate: bool,
    pub u_queries: u64,
    pub v_queries: u64,
}

fn in_gap(f: f64) -> bool {
    f > 0.125 && f < 7.0 / 32.0
}

/// Generic `Dif`: per register a random `y`, `(I_y I_S)^t y`, a frequency
/// readout of `Z = 2|y⟩⟨y| − I`, and `Change` on the far fraction.
fn dif(subspace: &CMat, cost: &(dyn Fn(&mut Rng) -> (u64, u64) + Sync), cfg: &DistinguishConfig, streams: &Streams) -> DifOutcome {
    let n = subspace.nrows();
    let refl = Reflection::Subspace(subspace.clone());
    let mut total_u = 0;
    let mut total_v = 0;
    let mut last = 0.0;
    for attempt in 0..=cfg.gap_retries {
        let s = streams.child("dif-attempt", attempt as u64);
        let rows: Vec<(bool, u64, u64)> = (0..cfg.registers as u64)
            .into_par_iter()
            .map(|j| {
                let mut rng = s.stream("register", j);
                let y = haar_vector(n, &mut rng);
                let t = cfg.policy.sample(n, &mut rng);
                let chi = grover_iterate(&y, &refl, &Reflection::Vector(y.clone()), t);
                let stay = y.dotc(&chi).norm_sqr();
                let far = rng.gen::<f64>() >= stay;
                let (mut cu, mut cv) = (0, 0);
                // Each step applies the sign operator once forward and once to uncompute.
                for _ in 0..2 * t {
                    let (a, b) = cost(&mut rng);
                    cu += a;
                    cv += b;
                }
                (far, cu, cv)
            })
            .collect();
        let far = rows.iter().filter(|r| r.0).count();
        total_u += rows.iter().map(|r| r.1).sum::<u64>();
        total_v += rows.iter().map(|r| r.2).sum::<u64>();
        last = far as f64 / cfg.registers as f64;
        if !in_gap(last) {
            return DifOutcome { fired: last >= cfg.change_rho, fraction: last, indeterminate: false, u_queries: total_u, v_queries: total_v };
        }
    }
    DifOutcome { fired: last >= cfg.change_rho, fraction: last, indeterminate: true, u_queries: total_u, v_queries: total_v }
}

/// `Dif_same_dim`: amplification with `Inv`.
pub fn dif_same_dim(case: &DistinguishCase, cfg: &DistinguishConfig, streams: &Streams) -> DifOutcome {
    let cost = |rng: &mut Rng| inv_cost(cfg, rng);
    dif(&case.geometry.lp, &cost, cfg, streams)
}

/// `(Dif_{>}, Dif^{ort}_{>})` for the larger space on the `u_side`.
pub fn dif_dim_mismatch(case: &DistinguishCase, u_side: bool, cfg: &DistinguishConfig, streams: &Streams) -> (DifOutcome, DifOutcome) {
    let g = &case.geometry;
    let cost_pp = |_: &mut Rng| inv_pp_cost(cfg, u_side);
    // Inv″ flips when at least 3/4 of readouts are far; the ort variant when more than half are.
    let plain = dif(&g.far_part(u_side, 0.75, false), &cost_pp, cfg, &streams.child("plain", 0));
    let ort = dif(&g.far_part(u_side, 0.5, true), &cost_pp, cfg, &streams.child("ort", 0));
    (plain, ort)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Same,
    Different,
    Indeterminate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    SameDim,
    UGreater,
    VGreater,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceReport {
    pub verdict: Verdict,
    pub branch: Branch,
    /// Flags after the forward pass, with `α_dif`.
    pub flags: AncillaFlags,
    /// Flags after the inverse pass (`α_dif` kept).
    pub residual: AncillaFlags,
    pub fractions: BTreeMap<String, f64>,
    pub queries: Queries,
}

/// `Difference = Differ⁻¹ SignDif Differ` with the dimension dispatcher.
pub fn difference(case: &DistinguishCase, cfg: &DistinguishConfig, streams: &Streams) -> Result<DifferenceReport> {
    cfg.validate()?;
    let g = &case.geometry;
    let (du, dv) = (g.bu.ncols(), g.bv.ncols());
    let branch = match du.cmp(&dv) {
        std::cmp::Ordering::Equal => Branch::SameDim,
        std::cmp::Ordering::Greater => Branch::UGreater,
        std::cmp::Ordering::Less => Branch::VGreater,
    };
    let mut flags = AncillaFlags::default();
    let mut fractions = BTreeMap::new();
    let mut indeterminate = false;
    let (mut qu, mut qv) = (0u64, 0u64);
    let mut record = |name: &str, o: &DifOutcome, slot: &mut bool| {
        *slot = o.fired;
        fractions.insert(name.to_string(), o.fraction);
        indeterminate |= o.indeterminate;
        qu += o.u_queries;
        qv += o.v_queries;
    };
    match branch {
        Branch::SameDim => {
            let o = dif_same_dim(case, cfg, &streams.child("same", 0));
            record("same_dim", &o, &mut flags.same_dim);
        }
        Branch::UGreater => {
            let (p, o) = dif_dim_mismatch(case, true, cfg, &streams.child("u_gt_v", 0));
            record("u_gt_v", &p, &mut flags.u_gt_v);
            record("ort_u_gt_v", &o, &mut flags.ort_u_gt_v);
        }
        Branch::VGreater => {
            let (p, o) = dif_dim_mismatch(case, false, cfg, &streams.child("u_lt_v", 0));
            record("u_lt_v", &p, &mut flags.u_lt_v);
            record("ort_u_lt_v", &o, &mut flags.ort_u_lt_v);
        }
    }
    flags.dif = flags.any_dif_flag();
    // Differ⁻¹ replays the same generated data and clears ᾱ.
    let mut residual = flags;
    residual.xor(&flags);
    residual.dif = flags.dif;
    let mut queries = Queries::new();
    queries.add(BLACK_BOX, 2 * qu);
    queries.add(REFERENCE, 2 * qv);
    let verdict = if flags.dif {
        Verdict::Different
    } else if indeterminate {
        Verdict::Indeterminate
    } else {
        Verdict::Same
    };
    Ok(DifferenceReport { verdict, branch, flags, residual, fractions, queries })
}

/// `Difference_sign`: `−1` when the spaces differ, `+1` otherwise.
pub fn difference_sign(case: &DistinguishCase, cfg: &DistinguishConfig, streams: &Streams) -> Result<(f64, Queries)> {
    let r = difference(case, cfg, streams)?;
    Ok((if r.flags.dif { -1.0 } else { 1.0 }, r.queries))
}

/// Outcome of the device-equality sign for one candidate circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqualityCheck {
    pub same: bool,
    /// Fraction of copies whose `α_dif` is set.
    pub fraction: f64,
    pub queries: Queries,
}

/// `I_U` on one code: per copy, concentrate a uniform frequency register on
/// distinguishing frequencies, run `Difference` there, then vote.
pub fn devices_equal(u: &DenseUnitary, v: &DenseUnitary, cfg: &DistinguishConfig, streams: &Streams) -> Result<EqualityCheck> {
    let cases: Vec<DistinguishCase> =
        (0..cfg.m).map(|l| DistinguishCase::new(u, v, l as f64 / cfg.m as f64, cfg)).collect::<Result<_>>()?;
    let mut queries = Queries::new();
    let mut set = 0usize;
    for j in 0..cfg.sign_copies {
        let s = streams.child("copy", j as u64);
        let mut differs = Vec::with_capacity(cfg.m);
        let mut per_call = Queries::new();
        for (l, c) in cases.iter().enumerate() {
            let r = difference(c, cfg, &s.child("scan", l as u64))?;
            differs.push(r.flags.dif);
            per_call.merge(&r.queries);
        }
        let marked: Vec<usize> = differs.iter().enumerate().filter(|(_, d)| **d).map(|(l, _)| l).collect();
        let sampler = SearchSampler::new(Reflection::set(&marked), cfg.m, cfg.policy, Start::Uniform);
        let (t, w) = sampler.run(&mut s.stream("conc", 0));
        let r = difference(&cases[w], cfg, &s.child("final", 0))?;
        if r.flags.dif {
            set += 1;
        }
        // Conc and its inverse: t sign applications each, at the mean per-frequency cost.
        let m = cfg.m as u64;
        for (k, v) in per_call.iter() {
            queries.add(k, 2 * t as u64 * v / m);
        }
        queries.merge(&r.queries);
        queries.merge(&r.queries);
    }
    let fraction = set as f64 / cfg.sign_copies as f64;
    Ok(EqualityCheck { same: fraction < cfg.sign_rho, fraction, queries })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceReport {
    pub code: Option<u64>,
    pub runs: Vec<SearchRun>,
    /// Family indices judged equal to the device.
    pub marked: Vec<usize>,
    pub family_size: usize,
    pub queries: Queries,
}

/// Finds the family member equal to a black-box device.
pub fn recognize_device(device: &BlackBox, family: &Family, cfg: &DistinguishConfig, streams: &Streams) -> Result<DeviceReport> {
    cfg.validate()?;
    if family.size() == 0 {
        return Err(Error::Invalid("empty family".into()));
    }
    let before = device.queries();
    let u = device.tomograph()?;
    let mut queries = Queries::new();
    queries.add(TOMOGRAPHY, device.queries() - before);
    let checks: Vec<Result<EqualityCheck>> = (0..family.size())
        .into_par_iter()
        .map(|i| {
            let v = family.space.build_unitary(family.codes[i])?;
            devices_equal(&u, &v, cfg, &streams.child("mark", i as u64))
        })
        .collect();
    let mut marked = Vec::with_capacity(family.size());
    let mut per_check = Queries::new();
    for c in checks {
        let c = c?;
        marked.push(c.same);
        per_check.merge(&c.queries);
    }
    let mut runs = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs {
        let verify = |x: usize, a: usize| -> Result<bool> {
            let v = family.space.build_unitary(family.codes[x])?;
            Ok(devices_equal(&u, &v, cfg, &streams.child("verify", (r * cfg.attempts + a) as u64))?.same)
        };
        runs.push(amplified_search(&marked, cfg.policy, cfg.attempts, verify, &mut streams.stream("run", r as u64))?);
    }
    let evaluations: u64 = runs.iter().map(|r| r.evaluations).sum();
    queries.add("marked_evaluations", evaluations);
    let t = family.size() as u64;
    for (k, v) in per_check.iter() {
        queries.add(k, evaluations * v / t);
    }
    let found: Vec<Option<usize>> = runs.iter().map(|r| r.found).collect();
    Ok(DeviceReport {
        code: plurality(&found).map(|i| family.codes[i]),
        runs,
        marked: marked.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect(),
        family_size: family.size(),
        queries,
    })
}

/// Unitary with eigenspace `basis` at `omega` and every other direction at `other`.
pub fn unitary_with_eigenspace(basis: &CMat, omega: f64, other: f64) -> Result<DenseUnitary> {
    let n = basis.nrows();
    let p = crate::linalg::projector_from_basis(basis);
    let id = CMat::identity(n, n);
    DenseUnitary::new(&p * crate::linalg::cis(omega) + (id - &p) * crate::linalg::cis(other))
}

/// `V = W U W†` with `W` rotating the first eigenvector of `L^U` towards a
/// direction outside it by an angle of sine `d`.
pub fn rotated_pair(basis: &CMat, outside: &CVec, d: f64) -> CMat {
    let n = basis.nrows();
    let a = basis.column(0).into_owned();
    let s = d.clamp(0.0, 1.0);
    let c = (1.0 - s * s).sqrt();
    // Rotation in span(a, outside): a → c·a + s·outside, outside → −s·a + c·outside.
    let id = CMat::identity(n, n);
    let pa = &a * a.adjoint();
    let po = outside * outside.adjoint();
    let mix = outside * a.adjoint() - &a * outside.adjoint();
    let w = id - &pa - &po + (&pa + &po) * C64::from(c) + mix * C64::from(s);
    &w * basis
}
