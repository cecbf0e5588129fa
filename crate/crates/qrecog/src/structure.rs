//! Spectrum-driven circuit search: does a circuit's spectrum match a target
//! grid set, and amplitude-amplified search over a code family for one that does.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::amplify::{Reflection, SearchSampler, Start, StoppingPolicy};
use crate::circuit::CodeSpace;
use crate::error::{Error, Result};
use crate::linalg::circ_dist;
use crate::recognize::{recognize_eigenvalue, Backend, Device, EigenQuery};
use crate::report::{Queries, BLACK_BOX};
use crate::rng::Streams;
use crate::spectral::SpectralDecomposition;

/// Which of the two matching conditions are enforced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Every frequency is near some target and every target is near some frequency.
    Determined,
    /// Every target is near some frequency.
    Contains,
    /// No frequency away from the targets.
    Excludes,
}

/// Target set `{l_i / M}` resolved at `1/L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSpec {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub frequencies: Vec<usize>,
    pub mode: MatchMode,
}

impl SpectrumSpec {
    pub fn new(m: usize, frequencies: &[usize], mode: MatchMode) -> Result<Self> {
        let s = Self { m, l: 16 * m, frequencies: frequencies.to_vec(), mode };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_power_of_two() || !self.l.is_power_of_two() || self.l < self.m {
            return Err(Error::Invalid(format!("M = {}, L = {} must be powers of two with L ≥ M", self.m, self.l)));
        }
        if self.frequencies.is_empty() {
            return Err(Error::Invalid("target set is empty".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in &self.frequencies {
            if *l >= self.m || !seen.insert(*l) {
                return Err(Error::Invalid(format!("target {l} repeated or outside 0..{}", self.m)));
            }
        }
        Ok(())
    }

    pub fn contains(&self, l: usize) -> bool {
        self.frequencies.contains(&l)
    }

    fn needs_present(&self) -> bool {
        self.mode != MatchMode::Excludes
    }

    fn needs_absent(&self) -> bool {
        self.mode != MatchMode::Contains
    }

    /// Whether `l` is bad given whether a device frequency sits within `1/L` of it.
    pub fn is_bad(&self, l: usize, present: bool) -> bool {
        let want = self.contains(l);
        (want && !present && self.needs_present()) || (!want && present && self.needs_absent())
    }
}

/// Parameters of the spectrum check and the code search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureConfig {
    /// Groups `j` per candidate.
    pub groups: usize,
    /// Registers `k` per group.
    pub registers: usize,
    /// A candidate is present if at least this fraction of groups is good.
    pub rho_groups: f64,
    /// A group is good if at least this fraction of its registers match.
    pub rho_registers: f64,
    pub copies: usize,
    pub backend: Backend,
    pub policy: StoppingPolicy,
    /// Amplified samples per run before giving up.
    pub attempts: usize,
    /// Runs combined by majority.
    pub runs: usize,
    /// Largest family searched.
    pub max_family: u64,
}

impl Default for StructureConfig {
    fn default() -> Self {
        Self {
            groups: 5,
            registers: 32,
            rho_groups: 0.2,
            rho_registers: 0.1,
            copies: 1,
            backend: Backend::Projector,
            policy: StoppingPolicy::default(),
            attempts: 3,
            runs: 9,
            max_family: 1 << 16,
        }
    }
}

/// Statistics behind one candidate's classification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEvidence {
    pub l: usize,
    pub in_spec: bool,
    /// Match fraction of each group.
    pub group_fractions: Vec<f64>,
    pub present: bool,
    pub bad: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub matches: bool,
    pub bad: Vec<usize>,
    pub evidence: Vec<FrequencyEvidence>,
    pub queries: Queries,
}

/// Classifies candidate `l/M` from recognition statistics.
pub fn is_bad_frequency(dev: &Device, l: usize, spec: &SpectrumSpec, cfg: &StructureConfig, streams: &Streams) -> Result<(FrequencyEvidence, Queries)> {
    let q = EigenQuery {
        omega: l * (spec.l / spec.m),
        m: spec.m,
        l: spec.l,
        copies: cfg.copies,
        registers: cfg.registers,
        rho: cfg.rho_registers,
        policy: cfg.policy,
        backend: cfg.backend,
    };
    let mut queries = Queries::new();
    let mut fractions = Vec::with_capacity(cfg.groups);
    for j in 0..cfg.groups {
        let r = recognize_eigenvalue(dev, &q, &streams.child("group", j as u64))?;
        queries.merge(&r.queries);
        fractions.push(r.fraction);
    }
    let good = fractions.iter().filter(|f| **f >= cfg.rho_registers).count();
    let present = good as f64 >= cfg.rho_groups * cfg.groups as f64;
    let bad = spec.is_bad(l, present);
    Ok((FrequencyEvidence { l, in_spec: spec.contains(l), group_fractions: fractions, present, bad }, queries))
}

/// Checks every grid candidate; matches iff none is bad.
pub fn spectrum_matches(dev: &Device, spec: &SpectrumSpec, cfg: &StructureConfig, streams: &Streams) -> Result<MatchVerdict> {
    spec.validate()?;
    let rows: Vec<Result<(FrequencyEvidence, Queries)>> =
        (0..spec.m).into_par_iter().map(|l| is_bad_frequency(dev, l, spec, cfg, &streams.child("candidate", l as u64))).collect();
    let mut evidence = Vec::with_capacity(spec.m);
    let mut queries = Queries::new();
    for r in rows {
        let (e, q) = r?;
        queries.merge(&q);
        evidence.push(e);
    }
    let bad: Vec<usize> = evidence.iter().filter(|e| e.bad).map(|e| e.l).collect();
    Ok(MatchVerdict { matches: bad.is_empty(), bad, evidence, queries })
}

/// Exact grid classification from the spectrum (verification path).
pub fn grid_matches_oracle(dec: &SpectralDecomposition, spec: &SpectrumSpec) -> bool {
    (0..spec.m).all(|l| {
        let w = l as f64 / spec.m as f64;
        let present = dec.frequencies().iter().any(|f| circ_dist(*f, w) <= 1.0 / spec.l as f64 + 1e-12);
        !spec.is_bad(l, present)
    })
}

/// Exact matching conditions on the whole spectrum, off-grid frequencies included.
pub fn spectrum_matches_oracle(dec: &SpectralDecomposition, spec: &SpectrumSpec) -> bool {
    let near = |a: f64, b: f64| circ_dist(a, b) <= 1.0 / spec.l as f64 + 1e-12;
    let targets: Vec<f64> = spec.frequencies.iter().map(|l| *l as f64 / spec.m as f64).collect();
    let a = dec.frequencies().iter().all(|f| targets.iter().any(|w| near(*f, *w)));
    let b = targets.iter().all(|w| dec.frequencies().iter().any(|f| near(*f, *w)));
    match spec.mode {
        MatchMode::Determined => a && b,
        MatchMode::Contains => b,
        MatchMode::Excludes => a,
    }
}

/// How the marked set over codes is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marking {
    /// Recognition statistics per code.
    Recognition,
    /// Exact spectrum conditions.
    Oracle,
}

/// An enumerated set of codes.
#[derive(Clone, Debug)]
pub struct Family {
    pub space: CodeSpace,
    pub codes: Vec<u64>,
}

impl Family {
    /// Codes `0 … T−1` of the space (all of it when `limit` is `None`).
    pub fn prefix(space: CodeSpace, limit: Option<u64>) -> Self {
        let t = limit.map(|l| l.min(space.size())).unwrap_or(space.size());
        Self { codes: (0..t).collect(), space }
    }

    pub fn size(&self) -> usize {
        self.codes.len()
    }

    pub fn device(&self, index: usize) -> Result<Device> {
        Device::new(self.space.build_unitary(self.codes[index])?)
    }
}

/// Result of one amplified run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRun {
    /// Index into the family of the verified result.
    pub found: Option<usize>,
    /// Marked-set evaluations: amplification steps plus verifications.
    pub evaluations: u64,
    pub attempts: usize,
}

/// Random-time amplification over `marked.len()` items with post-verification,
/// up to `attempts` samples. `verify` is re-run on each measured item.
pub fn amplified_search(
    marked: &[bool],
    policy: StoppingPolicy,
    attempts: usize,
    mut verify: impl FnMut(usize, usize) -> Result<bool>,
    rng: &mut crate::rng::Rng,
) -> Result<SearchRun> {
    let set: Vec<usize> = marked.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect();
    let sampler = SearchSampler::new(Reflection::set(&set), marked.len(), policy, Start::Uniform);
    let mut evaluations = 0u64;
    for a in 0..attempts {
        let (t, x) = sampler.run(rng);
        evaluations += t as u64 + 1;
        if verify(x, a)? {
            return Ok(SearchRun { found: Some(x), evaluations, attempts: a + 1 });
        }
    }
    Ok(SearchRun { found: None, evaluations, attempts })
}

/// Most frequent value; an exact tie or no value gives `None`.
pub fn plurality(values: &[Option<usize>]) -> Option<usize> {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for v in values.iter().flatten() {
        *counts.entry(*v).or_default() += 1;
    }
    let best = counts.values().max()?;
    let top: Vec<usize> = counts.iter().filter(|(_, c)| *c == best).map(|(k, _)| *k).collect();
    (top.len() == 1).then(|| top[0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    /// Verified code, or `None` for not-found.
    pub code: Option<u64>,
    pub runs: Vec<SearchRun>,
    /// Family indices marked by the evaluated predicate.
    pub marked: Vec<usize>,
    pub family_size: usize,
    pub queries: Queries,
}

/// Marked flags of every family member, with the mean black-box cost of one check.
pub fn mark_family(family: &Family, spec: &SpectrumSpec, cfg: &StructureConfig, marking: Marking, streams: &Streams) -> Result<(Vec<bool>, f64)> {
    let rows: Vec<Result<(bool, u64)>> = (0..family.size())
        .into_par_iter()
        .map(|i| {
            let dev = family.device(i)?;
            match marking {
                Marking::Oracle => Ok((spectrum_matches_oracle(dev.decomposition(), spec), 0)),
                Marking::Recognition => {
                    let v = spectrum_matches(&dev, spec, cfg, &streams.child("mark", i as u64))?;
                    Ok((v.matches, v.queries.get(BLACK_BOX)))
                }
            }
        })
        .collect();
    let mut flags = Vec::with_capacity(family.size());
    let mut cost = 0u64;
    for r in rows {
        let (m, c) = r?;
        flags.push(m);
        cost += c;
    }
    Ok((flags, cost as f64 / family.size().max(1) as f64))
}

/// Searches the family for a code whose spectrum matches `spec`.
pub fn find_structure(family: &Family, spec: &SpectrumSpec, cfg: &StructureConfig, marking: Marking, streams: &Streams) -> Result<StructureReport> {
    spec.validate()?;
    if family.size() as u64 > cfg.max_family {
        return Err(Error::Invalid(format!("family of {} codes exceeds the cap {}", family.size(), cfg.max_family)));
    }
    if family.size() == 0 {
        return Err(Error::Invalid("empty family".into()));
    }
    let (marked, check_cost) = mark_family(family, spec, cfg, marking, &streams.child("marking", 0))?;
    let mut runs = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs {
        let mut rng = streams.stream("run", r as u64);
        let verify = |x: usize, a: usize| -> Result<bool> {
            let dev = family.device(x)?;
            match marking {
                Marking::Oracle => Ok(spectrum_matches_oracle(dev.decomposition(), spec)),
                Marking::Recognition => Ok(spectrum_matches(&dev, spec, cfg, &streams.child("verify", (r * cfg.attempts + a) as u64))?.matches),
            }
        };
        runs.push(amplified_search(&marked, cfg.policy, cfg.attempts, verify, &mut rng)?);
    }
    let evaluations: u64 = runs.iter().map(|r| r.evaluations).sum();
    let mut queries = Queries::new();
    queries.add("marked_evaluations", evaluations);
    queries.add(BLACK_BOX, (evaluations as f64 * check_cost).round() as u64);
    let found: Vec<Option<usize>> = runs.iter().map(|r| r.found).collect();
    let code = plurality(&found).map(|i| family.codes[i]);
    Ok(StructureReport {
        code,
        runs,
        marked: marked.iter().enumerate().filter(|(_, m)| **m).map(|(i, _)| i).collect(),
        family_size: family.size(),
        queries,
    })
}
