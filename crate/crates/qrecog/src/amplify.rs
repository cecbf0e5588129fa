//! Amplitude amplification: reflections, the Grover iterate, the random
//! stopping-time search, k-register majority voting and rotation-time
//! counting of a subspace dimension.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{haar_vector, projection_weight, CMat, CVec, C64};
use crate::rng::{Rng, Streams};

type Pred = Arc<dyn Fn(usize) -> bool + Send + Sync>;

/// A reflection `I − 2P` flipping the sign of a marked subspace.
#[derive(Clone)]
pub enum Reflection {
    /// Marks one basis state.
    Basis(usize),
    /// Marks the basis states where the predicate holds.
    Predicate(Pred),
    /// Marks a unit vector.
    Vector(CVec),
    /// Marks the span of orthonormal columns.
    Subspace(CMat),
}

impl std::fmt::Debug for Reflection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reflection::Basis(a) => write!(f, "Basis({a})"),
            Reflection::Predicate(_) => write!(f, "Predicate(..)"),
            Reflection::Vector(v) => write!(f, "Vector(dim {})", v.len()),
            Reflection::Subspace(b) => write!(f, "Subspace({}x{})", b.nrows(), b.ncols()),
        }
    }
}

impl Reflection {
    pub fn predicate(f: impl Fn(usize) -> bool + Send + Sync + 'static) -> Self {
        Reflection::Predicate(Arc::new(f))
    }

    /// Marks the set of listed basis states.
    pub fn set(items: &[usize]) -> Self {
        let s: std::collections::BTreeSet<usize> = items.iter().cloned().collect();
        Reflection::predicate(move |i| s.contains(&i))
    }

    /// Reflection about the uniform superposition of `n` basis states.
    pub fn uniform(n: usize) -> Self {
        Reflection::Vector(CVec::from_element(n, C64::from(1.0 / (n as f64).sqrt())))
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        let mut out = v.clone();
        match self {
            Reflection::Basis(a) => {
                if *a < out.len() {
                    out[*a] = -out[*a];
                }
            }
            Reflection::Predicate(f) => {
                for (i, x) in out.iter_mut().enumerate() {
                    if f(i) {
                        *x = -*x;
                    }
                }
            }
            Reflection::Vector(u) => {
                let c = u.dotc(v) * C64::from(2.0);
                out -= u * c;
            }
            Reflection::Subspace(b) => {
                if b.ncols() > 0 {
                    out -= b * (b.adjoint() * v) * C64::from(2.0);
                }
            }
        }
        out
    }

    /// Whether a basis state lies in the marked set; `None` for non-basis reflections.
    pub fn contains(&self, index: usize) -> Option<bool> {
        match self {
            Reflection::Basis(a) => Some(*a == index),
            Reflection::Predicate(f) => Some(f(index)),
            _ => None,
        }
    }

    /// Weight of `v` in the marked subspace.
    pub fn marked_weight(&self, v: &CVec) -> f64 {
        match self {
            Reflection::Basis(_) | Reflection::Predicate(_) => v
                .iter()
                .enumerate()
                .filter(|(i, _)| self.contains(*i).unwrap())
                .map(|(_, a)| a.norm_sqr())
                .sum(),
            Reflection::Vector(u) => u.dotc(v).norm_sqr(),
            Reflection::Subspace(b) => projection_weight(b, v),
        }
    }

    /// Dense matrix of the reflection on `n` basis states.
    pub fn matrix(&self, n: usize) -> CMat {
        let mut m = CMat::zeros(n, n);
        for j in 0..n {
            let mut e = CVec::zeros(n);
            e[j] = C64::from(1.0);
            m.set_column(j, &self.apply(&e));
        }
        m
    }
}

/// `(I_start · I_marked)^t v`.
pub fn grover_iterate(v: &CVec, marked: &Reflection, start: &Reflection, t: usize) -> CVec {
    let mut x = v.clone();
    for _ in 0..t {
        x = start.apply(&marked.apply(&x));
    }
    x
}

/// `B = ceil(β√N)`, times drawn uniformly from `{0, …, B}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingPolicy {
    pub beta: f64,
}

impl Default for StoppingPolicy {
    fn default() -> Self {
        Self { beta: 2.0 }
    }
}

impl StoppingPolicy {
    pub fn bound(&self, n: usize) -> usize {
        (self.beta * (n as f64).sqrt()).ceil() as usize
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> usize {
        rng.gen_range(0..=self.bound(n))
    }
}

/// Start vector of a search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Start {
    /// Uniform superposition of all basis states.
    Uniform,
    /// Fresh Haar-random vector per run.
    Haar,
}

fn inverse_cdf(p: &[f64], u: f64) -> usize {
    let total: f64 = p.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, pi) in p.iter().enumerate() {
        if *pi <= 0.0 {
            continue;
        }
        last = i;
        acc += pi;
        if target < acc {
            return i;
        }
    }
    last
}

/// Random stopping-time search with the outcome distribution for each `t` cached.
pub struct SearchSampler {
    marked: Reflection,
    n: usize,
    policy: StoppingPolicy,
    start: Start,
    dists: Vec<Vec<f64>>,
}

impl SearchSampler {
    pub fn new(marked: Reflection, n: usize, policy: StoppingPolicy, start: Start) -> Self {
        let mut dists = Vec::new();
        if start == Start::Uniform {
            let s = Reflection::uniform(n);
            let mut x = CVec::from_element(n, C64::from(1.0 / (n as f64).sqrt()));
            for _ in 0..=policy.bound(n) {
                dists.push(x.iter().map(|a| a.norm_sqr()).collect());
                x = s.apply(&marked.apply(&x));
            }
        }
        Self { marked, n, policy, start, dists }
    }

    pub fn marked(&self) -> &Reflection {
        &self.marked
    }

    /// Outcome distribution after `t` iterations from the uniform start.
    pub fn distribution(&self, t: usize) -> Option<&[f64]> {
        self.dists.get(t).map(|d| d.as_slice())
    }

    /// One run: draw `t`, iterate, measure. Returns `(t, outcome)`.
    pub fn run(&self, rng: &mut Rng) -> (usize, usize) {
        let t = self.policy.sample(self.n, rng);
        match self.start {
            Start::Uniform => (t, inverse_cdf(&self.dists[t], rng.gen())),
            Start::Haar => {
                let s0 = haar_vector(self.n, rng);
                let x = grover_iterate(&s0, &self.marked, &Reflection::Vector(s0.clone()), t);
                let p: Vec<f64> = x.iter().map(|a| a.norm_sqr()).collect();
                (t, inverse_cdf(&p, rng.gen()))
            }
        }
    }

    /// Exact success probability averaged over `t ∈ {0, …, B}`, uniform start.
    pub fn mean_success(&self) -> f64 {
        let m = |d: &Vec<f64>| -> f64 {
            d.iter().enumerate().filter(|(i, _)| self.marked.contains(*i).unwrap_or(false)).map(|(_, p)| p).sum()
        };
        self.dists.iter().map(m).sum::<f64>() / self.dists.len() as f64
    }
}

/// One random stopping-time search; returns the measured basis state.
pub fn random_time_search(marked: &Reflection, n: usize, policy: StoppingPolicy, start: Start, rng: &mut Rng) -> usize {
    SearchSampler::new(marked.clone(), n, policy, start).run(rng).1
}

/// Exact mean success of the random stopping-time search from the uniform start.
pub fn exact_mean_success(marked: &Reflection, n: usize, policy: StoppingPolicy) -> f64 {
    SearchSampler::new(marked.clone(), n, policy, Start::Uniform).mean_success()
}

/// Outcome of a k-register vote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorityDecision {
    pub k: usize,
    pub rho: f64,
    pub votes: Vec<usize>,
    pub verdict: Option<usize>,
}

/// Verdict is the value with at least `ρ·k` votes; among several, the most
/// frequent; an exact tie at the top gives no verdict.
pub fn majority_verdict(votes: &[usize], rho: f64) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(*v).or_default() += 1;
    }
    let need = rho * votes.len() as f64;
    let best = counts.values().cloned().max()?;
    if (best as f64) < need - 1e-12 {
        return None;
    }
    let top: Vec<usize> = counts.iter().filter(|(_, c)| **c == best).map(|(v, _)| *v).collect();
    if top.len() == 1 {
        Some(top[0])
    } else {
        None
    }
}

impl MajorityDecision {
    pub fn from_votes(votes: Vec<usize>, rho: f64) -> Self {
        let verdict = majority_verdict(&votes, rho);
        Self { k: votes.len(), rho, votes, verdict }
    }
}

/// `k` independent searches on the streams `(name, 0..k)` followed by the vote.
/// With `verify`, a verdict outside the marked set is dropped (one extra query).
pub fn majority_search(sampler: &SearchSampler, k: usize, rho: f64, verify: bool, streams: &Streams, name: &str) -> Result<MajorityDecision> {
    if k == 0 || !(0.0..1.0).contains(&rho) || rho <= 0.0 {
        return Err(Error::Invalid(format!("majority search needs k ≥ 1 and 0 < ρ < 1 (k = {k}, ρ = {rho})")));
    }
    let votes: Vec<usize> = (0..k as u64).into_par_iter().map(|j| sampler.run(&mut streams.stream(name, j)).1).collect();
    let mut d = MajorityDecision::from_votes(votes, rho);
    if verify {
        if let Some(v) = d.verdict {
            if sampler.marked().contains(v) == Some(false) {
                d.verdict = None;
            }
        }
    }
    Ok(d)
}

/// `P(Bin(k, p) ≥ m)`.
pub fn binomial_tail(k: usize, p: f64, m: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    if m > k {
        return 0.0;
    }
    let p = p.clamp(0.0, 1.0);
    let mut pmf = (1.0 - p).powi(k as i32);
    let mut tail = 0.0;
    if p >= 1.0 {
        return 1.0;
    }
    for i in 0..=k {
        if i >= m {
            tail += pmf;
        }
        if i < k {
            pmf *= (k - i) as f64 / (i + 1) as f64 * p / (1.0 - p);
        }
    }
    tail.min(1.0)
}

/// Frequency readout of one counting register: `copies` revealing runs each
/// land in the window with probability `p_in` (state inside the subspace) or
/// `p_out` (outside); the register passes if at least `(7/8 − ε)·copies` land.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub copies: usize,
    pub p_in: f64,
    pub p_out: f64,
}

impl Readout {
    /// Perfect readout: one copy that lands iff the state is inside.
    pub fn exact() -> Self {
        Self { copies: 1, p_in: 1.0, p_out: 0.0 }
    }

    fn needed(&self, eps: f64) -> usize {
        (((7.0 / 8.0) - eps) * self.copies as f64).ceil().max(1.0) as usize
    }

    /// Pass probabilities `(q_in, q_out)`.
    pub fn pass_probabilities(&self, eps: f64) -> (f64, f64) {
        let m = self.needed(eps);
        (binomial_tail(self.copies, self.p_in, m), binomial_tail(self.copies, self.p_out, m))
    }
}

/// Parameters of [`count_rotation_time`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingConfig {
    pub eps: f64,
    /// Registers measured per probe.
    pub registers: usize,
    pub readout: Readout,
    /// Sweep stops once `a` exceeds `cap·√N`.
    pub cap: f64,
    /// A dimension enters the bracket if the modelled sweep stops where the
    /// observed one did with at least this probability.
    pub bracket_level: f64,
}

impl Default for CountingConfig {
    fn default() -> Self {
        Self { eps: 0.05, registers: 2000, readout: Readout::exact(), cap: 2.0, bracket_level: 0.01 }
    }
}

/// One fidelity measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub a: f64,
    pub time_bound: usize,
    pub fidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingResult {
    pub estimate: usize,
    /// Degeneracies whose modelled sweep stops where this one stopped.
    pub bracket: (usize, usize),
    pub a_stop: f64,
    pub sweep: Vec<Probe>,
    pub refinement: Vec<Probe>,
    /// Applications of the subspace reflection.
    pub reflections: u64,
    /// Revealing runs used for readout.
    pub readouts: u64,
}

/// `(A+1)^{-1} Σ_{t=0}^{A} sin²((2t+1)φ)`.
pub fn mean_rotation_success(phi: f64, a: usize) -> f64 {
    let s2 = (2.0 * phi).sin();
    if s2.abs() < 1e-6 {
        return (0..=a).map(|t| ((2 * t + 1) as f64 * phi).sin().powi(2)).sum::<f64>() / (a + 1) as f64;
    }
    let n = (a + 1) as f64;
    0.5 - (4.0 * n * phi).sin() / (4.0 * n * s2)
}

const NODES: usize = 2048;

/// Expected counting fidelity for every candidate dimension, by quadrature
/// over the angle `φ = arcsin‖Pā‖` of a Haar vector.
pub struct FidelityModel {
    n: usize,
    phis: Vec<f64>,
    /// Quadrature weights of the angle density, one row per `d = 0..=N`.
    weights: Vec<Vec<f64>>,
    q_in: f64,
    q_out: f64,
}

impl FidelityModel {
    pub fn new(n: usize, q_in: f64, q_out: f64) -> Self {
        let h = std::f64::consts::FRAC_PI_2 / NODES as f64;
        let phis: Vec<f64> = (0..=NODES).map(|i| i as f64 * h).collect();
        let simpson = |i: usize| if i == 0 || i == NODES { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        let mut weights = Vec::with_capacity(n + 1);
        for d in 0..=n {
            let mut w = vec![0.0; NODES + 1];
            if d == 0 {
                w[0] = 1.0;
            } else if d == n {
                w[NODES] = 1.0;
            } else {
                // density ∝ sin^{2d−1}φ cos^{2(N−d)−1}φ
                let (a, b) = ((2 * d - 1) as f64, (2 * (n - d) - 1) as f64);
                let logs: Vec<f64> = phis
                    .iter()
                    .map(|p| {
                        let (s, c) = (p.sin(), p.cos());
                        if s <= 0.0 || c <= 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            a * s.ln() + b * c.ln()
                        }
                    })
                    .collect();
                let mx = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for i in 0..=NODES {
                    w[i] = simpson(i) * (logs[i] - mx).exp();
                }
                let total: f64 = w.iter().sum();
                for x in w.iter_mut() {
                    *x /= total;
                }
            }
            weights.push(w);
        }
        Self { n, phis, weights, q_in, q_out }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Fidelity curve `F(A; d)`.
    pub fn fidelity(&self, d: usize, time_bound: usize) -> f64 {
        let s: f64 = self.weights[d]
            .iter()
            .zip(&self.phis)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, p)| w * mean_rotation_success(*p, time_bound))
            .sum();
        s * self.q_in + (1.0 - s) * self.q_out
    }

    /// Index at which the noise-free sweep over `bounds` stops.
    pub fn stop_index(&self, d: usize, bounds: &[usize]) -> usize {
        let mut prev = f64::NEG_INFINITY;
        for (i, b) in bounds.iter().enumerate() {
            let f = self.fidelity(d, *b);
            if f <= prev + 1e-12 {
                return i;
            }
            prev = f;
        }
        bounds.len() - 1
    }

    /// Distribution of the stop index of a sweep over `bounds` whose probes
    /// average `registers` Bernoulli outcomes (normal approximation, `sims` draws).
    pub fn stop_distribution(&self, d: usize, bounds: &[usize], registers: usize, sims: usize, rng: &mut Rng) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        let means: Vec<f64> = bounds.iter().map(|b| self.fidelity(d, *b)).collect();
        let sd: Vec<f64> = means.iter().map(|f| (f * (1.0 - f) / registers as f64).sqrt()).collect();
        let mut hist = vec![0.0; bounds.len()];
        for _ in 0..sims {
            let mut prev = f64::NEG_INFINITY;
            let mut stop = bounds.len() - 1;
            for i in 0..bounds.len() {
                let z: f64 = StandardNormal.sample(rng);
                let f = means[i] + sd[i] * z;
                if f <= prev {
                    stop = i;
                    break;
                }
                prev = f;
            }
            hist[stop] += 1.0 / sims as f64;
        }
        hist
    }

    /// Weighted least-squares fit of the dimension to measured probes.
    pub fn fit(&self, probes: &[Probe], registers: usize) -> usize {
        let mut best = (f64::INFINITY, 0);
        for d in 0..=self.n {
            let sse: f64 = probes
                .iter()
                .map(|p| {
                    let f = self.fidelity(d, p.time_bound);
                    let var = (f * (1.0 - f)).max(0.25 / registers as f64) / registers as f64;
                    (p.fidelity - f).powi(2) / var
                })
                .sum();
            if sse < best.0 {
                best = (sse, d);
            }
        }
        best.1
    }
}

/// Geometric sweep `a ← 4a/3` from 1 to `cap·√N`, keeping distinct time bounds.
pub fn sweep_schedule(n: usize, cap: f64) -> Vec<(f64, usize)> {
    let top = cap * (n as f64).sqrt();
    let mut out: Vec<(f64, usize)> = Vec::new();
    let mut a: f64 = 1.0;
    while a <= top + 1e-12 {
        let b = a.floor() as usize;
        if out.last().map(|(_, p)| *p != b).unwrap_or(true) {
            out.push((a, b));
        }
        a *= 4.0 / 3.0;
    }
    out
}

/// Measures the counting fidelity at time bound `A` with `registers` registers.
/// Each register draws a Haar vector `ā`, a time `t ∈ {0, …, A}`, rotates
/// `(I_ā I_E)^t` exactly in the plane of `ā` and `E(ā)`, and reads out.
pub fn measure_fidelity(basis: &CMat, time_bound: usize, cfg: &CountingConfig, streams: &Streams, probe: u64) -> (f64, u64) {
    let n = basis.nrows();
    let (q_in, q_out) = cfg.readout.pass_probabilities(cfg.eps);
    let s = streams.child("probe", probe);
    let results: Vec<(bool, u64)> = (0..cfg.registers as u64)
        .into_par_iter()
        .map(|j| {
            let mut rng = s.stream("register", j);
            let a = haar_vector(n, &mut rng);
            let x = projection_weight(basis, &a).clamp(0.0, 1.0);
            let t = rng.gen_range(0..=time_bound);
            let inside = ((2 * t + 1) as f64 * x.sqrt().asin()).sin().powi(2);
            let p = inside * q_in + (1.0 - inside) * q_out;
            (rng.gen::<f64>() < p, t as u64)
        })
        .collect();
    let pass = results.iter().filter(|r| r.0).count();
    let refl = results.iter().map(|r| r.1).sum();
    (pass as f64 / cfg.registers as f64, refl)
}

/// Estimates `dim E` from the rotation time of random vectors into `E`.
pub fn count_rotation_time(basis: &CMat, cfg: &CountingConfig, streams: &Streams) -> Result<CountingResult> {
    if !(cfg.eps > 0.0 && cfg.eps < 0.125) {
        return Err(Error::Invalid(format!("ε = {} must lie in (0, 1/8)", cfg.eps)));
    }
    let n = basis.nrows();
    let (q_in, q_out) = cfg.readout.pass_probabilities(cfg.eps);
    let model = FidelityModel::new(n, q_in, q_out);
    let schedule = sweep_schedule(n, cfg.cap);
    let mut reflections = 0u64;
    let mut readouts = 0u64;
    let mut sweep: Vec<Probe> = Vec::new();
    let mut stop = schedule.len() - 1;
    for (i, (a, b)) in schedule.iter().enumerate() {
        let (f, r) = measure_fidelity(basis, *b, cfg, streams, i as u64);
        reflections += r;
        readouts += (cfg.registers * cfg.readout.copies) as u64;
        let stop_here = sweep.last().map(|p| f <= p.fidelity).unwrap_or(false);
        sweep.push(Probe { a: *a, time_bound: *b, fidelity: f });
        if stop_here {
            stop = i;
            break;
        }
    }
    let a_stop = sweep.last().unwrap().a;

    let parts = (1.0 / cfg.eps).ceil() as usize;
    let lo = 0.75 * a_stop;
    let mut refinement = Vec::with_capacity(parts + 1);
    for i in 0..=parts {
        let a = lo + (a_stop - lo) * i as f64 / parts as f64;
        let b = a.floor() as usize;
        let (f, r) = measure_fidelity(basis, b, cfg, streams, 1000 + i as u64);
        reflections += r;
        readouts += (cfg.registers * cfg.readout.copies) as u64;
        refinement.push(Probe { a, time_bound: b, fidelity: f });
    }

    let all: Vec<Probe> = sweep.iter().chain(&refinement).cloned().collect();
    let estimate = model.fit(&all, cfg.registers);
    let bounds: Vec<usize> = schedule.iter().map(|(_, b)| *b).collect();
    let mut rng = streams.stream("bracket", 0);
    let admitted: Vec<usize> = (0..=n)
        .filter(|d| model.stop_distribution(*d, &bounds, cfg.registers, 400, &mut rng)[stop] >= cfg.bracket_level)
        .collect();
    let bracket = match (admitted.first(), admitted.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => (estimate, estimate),
    };
    Ok(CountingResult { estimate, bracket, a_stop, sweep, refinement, reflections, readouts })
}
