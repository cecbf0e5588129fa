//! Seeded experiment runner: config files, reports, scaling sweeps and the
//! `Rev` window check.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::amplify::StoppingPolicy;
use crate::circuit::{CircuitFile, CodeSpace, GateSet, MatrixDevice};
use crate::distinguish::{difference, recognize_device, BlackBox, DistinguishCase, DistinguishConfig, Verdict};
use crate::error::{Error, Result};
use crate::fixtures::{pair_fixture, structure_target, MatrixFile, PairClass};
use crate::linalg::haar_unitary;
use crate::phase::rev;
use crate::recognize::{recognize_eigenvalue, Device, EigenQuery};
use crate::report::{Queries, BLACK_BOX};
use crate::rng::Streams;
use crate::spectral::{decompose, w_type_masses};
use crate::statevec::{DenseUnitary, RegisterLayout, StateVector};
use crate::structure::{find_structure, spectrum_matches_oracle, Family, Marking, SpectrumSpec, StructureConfig};
use crate::thermo::{thermo_pipeline, HamiltonianFile, HamiltonianSpec, ThermoConfig};

/// A device given as a circuit file, a dense matrix, or a code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeviceSource {
    Circuit(CircuitFile),
    Matrix(MatrixFile),
    Code { gate_set: String, n: usize, c: usize, code: u64 },
}

impl DeviceSource {
    pub fn unitary(&self) -> Result<DenseUnitary> {
        match self {
            DeviceSource::Circuit(f) => {
                let (gs, c) = f.to_circuit()?;
                crate::circuit::circuit_unitary(&gs, &c)
            }
            DeviceSource::Matrix(m) => DenseUnitary::new(m.to_matrix()?),
            DeviceSource::Code { gate_set, n, c, code } => CodeSpace::new(GateSet::by_name(gate_set)?, *n, *c)?.build_unitary(*code),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Codes of a gate-set space: an explicit list or the first `limit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySource {
    pub gate_set: String,
    pub n: usize,
    pub c: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub codes: Option<Vec<u64>>,
}

impl FamilySource {
    pub fn family(&self) -> Result<Family> {
        let space = CodeSpace::new(GateSet::by_name(&self.gate_set)?, self.n, self.c)?;
        match &self.codes {
            Some(codes) => {
                if let Some(bad) = codes.iter().find(|c| **c >= space.size()) {
                    return Err(Error::InvalidCode { code: *bad, size: space.size() });
                }
                Ok(Family { space, codes: codes.clone() })
            }
            None => Ok(Family::prefix(space, self.limit)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "pipeline", rename_all = "kebab-case")]
pub enum Pipeline {
    RecognizeEigenvalue {
        device: DeviceSource,
        query: EigenQuery,
    },
    Thermo {
        hamiltonian: HamiltonianFile,
        kbts: Vec<f64>,
        #[serde(default)]
        config: ThermoConfig,
    },
    FindStructure {
        spec: SpectrumSpec,
        family: FamilySource,
        #[serde(default)]
        config: StructureConfig,
        marking: Marking,
    },
    Distinguish {
        u: DeviceSource,
        v: DeviceSource,
        omega: f64,
        #[serde(default)]
        config: DistinguishConfig,
    },
    RecognizeDevice {
        device: DeviceSource,
        family: FamilySource,
        #[serde(default)]
        config: DistinguishConfig,
    },
    VerifyRev(RevCheckConfig),
}

impl Pipeline {
    pub fn name(&self) -> &'static str {
        match self {
            Pipeline::RecognizeEigenvalue { .. } => "recognize-eigenvalue",
            Pipeline::Thermo { .. } => "thermo",
            Pipeline::FindStructure { .. } => "find-structure",
            Pipeline::Distinguish { .. } => "distinguish",
            Pipeline::RecognizeDevice { .. } => "recognize-device",
            Pipeline::VerifyRev(_) => "verify-rev",
        }
    }
}

/// One threshold with its admissible open range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub name: String,
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

fn th(name: &str, value: f64, min: f64, max: f64) -> Threshold {
    Threshold { name: name.into(), value, min, max }
}

fn policy_th(p: &StoppingPolicy) -> Threshold {
    th("beta", p.beta, 0.0, f64::INFINITY)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub pipeline: Pipeline,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<std::path::PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Decision thresholds of the pipeline with their admissible ranges.
    pub fn thresholds(&self) -> Vec<Threshold> {
        match &self.pipeline {
            Pipeline::RecognizeEigenvalue { query, .. } => vec![th("rho", query.rho, 0.0, 7.0 / 32.0), policy_th(&query.policy)],
            Pipeline::Thermo { config, .. } => vec![
                th("eps", config.counting.eps, 0.0, 1.0),
                th("cutoff", config.cutoff, 0.0, 1.0),
                th("bracket_level", config.counting.bracket_level, 0.0, 1.0),
            ],
            Pipeline::FindStructure { config, .. } => vec![
                th("rho_groups", config.rho_groups, 0.0, 1.0),
                th("rho_registers", config.rho_registers, 0.0, 1.0),
                policy_th(&config.policy),
            ],
            Pipeline::Distinguish { config, .. } | Pipeline::RecognizeDevice { config, .. } => vec![
                th("d", config.d, 0.0, 1.0 + 1e-12),
                th("check_weight", config.check_weight, 0.0, 1.0),
                th("ort_length", config.ort_length, 0.0, 1.0),
                th("closed_rho", config.closed_rho, 0.0, 1.0),
                th("change_rho", config.change_rho, 0.125, 7.0 / 32.0),
                th("sign_rho", config.sign_rho, 0.0, 1.0),
                policy_th(&config.policy),
            ],
            Pipeline::VerifyRev(c) => vec![th("min_mass", 1.0 - 2.0 / c.k as f64, 0.0, 1.0)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for t in self.thresholds() {
            if !(t.value > t.min && t.value < t.max) {
                return Err(Error::Invalid(format!("{} = {} outside ({}, {})", t.name, t.value, t.min, t.max)));
            }
        }
        Ok(())
    }
}

/// Pipeline outcome with counters and the config echo.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub pipeline: String,
    pub verdict: String,
    pub stats: serde_json::Value,
    pub queries: Queries,
    pub seed: u64,
    pub wall_ms: u64,
    pub config: ExperimentConfig,
}

impl RecognitionReport {
    /// 0 for a verdict, 2 for an indeterminate one.
    pub fn exit_code(&self) -> i32 {
        if self.verdict == "indeterminate" {
            2
        } else {
            0
        }
    }

    /// JSON with the wall time zeroed, for reproducibility comparisons.
    pub fn body(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_ms = 0;
        Ok(serde_json::to_string(&r)?)
    }
}

/// Exit status for a pipeline error: promise violations are indeterminate.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Promise(_) => 2,
        _ => 1,
    }
}

pub fn run(config: &ExperimentConfig) -> Result<RecognitionReport> {
    config.validate()?;
    let start = Instant::now();
    let streams = Streams::new(config.seed);
    let (verdict, stats, queries): (String, serde_json::Value, Queries) = match &config.pipeline {
        Pipeline::RecognizeEigenvalue { device, query } => {
            let dev = Device::new(device.unitary()?)?;
            let r = recognize_eigenvalue(&dev, query, &streams)?;
            let v = if r.accepted { "accept" } else { "reject" };
            let stats = serde_json::json!({ "fraction": r.fraction, "matches": r.matches, "registers": r.registers });
            (v.into(), stats, r.queries)
        }
        Pipeline::Thermo { hamiltonian, kbts, config } => {
            let h = HamiltonianSpec::from_file(hamiltonian)?;
            let r = thermo_pipeline(&h, kbts, config, &streams)?;
            let q = r.queries.clone();
            ("estimated".into(), serde_json::to_value(&r)?, q)
        }
        Pipeline::FindStructure { spec, family, config, marking } => {
            let fam = family.family()?;
            let r = find_structure(&fam, spec, config, *marking, &streams)?;
            let v = if r.code.is_some() { "found" } else { "not-found" };
            let q = r.queries.clone();
            (v.into(), serde_json::to_value(&r)?, q)
        }
        Pipeline::Distinguish { u, v, omega, config } => {
            let case = DistinguishCase::new(&u.unitary()?, &v.unitary()?, *omega, config)?;
            let r = difference(&case, config, &streams)?;
            let verdict = match r.verdict {
                Verdict::Same => "same",
                Verdict::Different => "different",
                Verdict::Indeterminate => "indeterminate",
            };
            let mut stats = serde_json::to_value(&r)?;
            stats["distances"] = serde_json::to_value(case.geometry.dist)?;
            (verdict.into(), stats, r.queries)
        }
        Pipeline::RecognizeDevice { device, family, config } => {
            let fam = family.family()?;
            let bb = BlackBox::new(MatrixDevice::new(device.unitary()?));
            let r = recognize_device(&bb, &fam, config, &streams)?;
            let v = if r.code.is_some() { "found" } else { "not-found" };
            let q = r.queries.clone();
            (v.into(), serde_json::to_value(&r)?, q)
        }
        Pipeline::VerifyRev(c) => {
            let r = verify_rev(c, &streams)?;
            let v = if r.passed { "pass" } else { "fail" };
            let mut q = Queries::new();
            q.add(BLACK_BOX, r.queries);
            (v.into(), serde_json::to_value(&r)?, q)
        }
    };
    Ok(RecognitionReport {
        pipeline: config.pipeline.name().into(),
        verdict,
        stats,
        queries,
        seed: config.seed,
        wall_ms: start.elapsed().as_millis() as u64,
        config: config.clone(),
    })
}

/// Random unitaries run through `Rev` on each eigenvector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevCheckConfig {
    pub qubits: usize,
    pub l: usize,
    pub k: usize,
    pub unitaries: usize,
}

impl Default for RevCheckConfig {
    fn default() -> Self {
        Self { qubits: 2, l: 32, k: 16, unitaries: 50 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevCheck {
    pub cases: usize,
    pub min_mass: f64,
    pub required: f64,
    pub passed: bool,
    pub queries: u64,
}

/// Ancilla mass of `Rev` within `K/L` of each eigenvector's frequency,
/// from the simulated amplitudes.
pub fn verify_rev(cfg: &RevCheckConfig, streams: &Streams) -> Result<RevCheck> {
    if !cfg.l.is_power_of_two() || cfg.k == 0 || cfg.unitaries == 0 {
        return Err(Error::Invalid("L must be a power of two; K and the unitary count positive".into()));
    }
    let n = 1usize << cfg.qubits;
    let layout = RegisterLayout::new(&[("a", cfg.l.trailing_zeros() as usize), ("x", cfg.qubits)])?;
    let mut min_mass = f64::INFINITY;
    let mut cases = 0;
    let mut queries = 0;
    for i in 0..cfg.unitaries {
        let u = DenseUnitary::new(haar_unitary(n, &mut streams.stream("rev-unitary", i as u64)))?;
        let oracle = MatrixDevice::new(u.clone());
        let pairs = decompose(&u)?.eigenpairs();
        let mut channel = Vec::with_capacity(pairs.len());
        let mut freqs = Vec::with_capacity(pairs.len());
        for (w, v) in pairs {
            let s = rev(&oracle, &StateVector::product(layout.clone(), &[("x", &v)])?, "a", "x")?;
            channel.push(s.distribution("a")?);
            freqs.push(w);
            queries += (cfg.l - 1) as u64;
        }
        for m in w_type_masses(&channel, &freqs, cfg.k)? {
            min_mass = min_mass.min(m);
            cases += 1;
        }
    }
    let required = 1.0 - 2.0 / cfg.k as f64;
    Ok(RevCheck { cases, min_mass, required, passed: min_mass >= required - 1e-9, queries })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// Eigenvalue recognition against the dimension `N`.
    Eigenvalue,
    /// Structure search against the family size `T`.
    Structure,
    /// `Difference` against `1/d`.
    Difference,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: SweepKind,
    /// Grid values: `N`, `T` or `d`.
    pub points: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl SweepConfig {
    pub fn default_for(kind: SweepKind) -> Self {
        let points = match kind {
            SweepKind::Eigenvalue => vec![8.0, 16.0, 32.0, 64.0, 128.0, 256.0],
            SweepKind::Structure => vec![4.0, 16.0, 64.0, 256.0],
            SweepKind::Difference => vec![0.5, 0.25, 0.125],
        };
        Self { kind, points, trials: 20, seed: crate::rng::DEFAULT_SEED }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// Abscissa of the fit: `N`, `T` or `1/d`.
    pub x: f64,
    pub mean_queries: f64,
    pub min_queries: u64,
    pub max_queries: u64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub points: Vec<SweepPoint>,
    pub slope: f64,
    pub intercept: f64,
}

/// Least-squares line through `(ln x, ln y)`: `(slope, intercept)`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|v| *v <= 0.0) {
        return Err(Error::Invalid("log-log fit needs at least two positive points".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Family of size `t` in which only `H0 T1` has spectrum `{0, 1/8, ½, 5/8}`.
pub fn structure_sweep_family(t: usize) -> Result<(Family, SpectrumSpec)> {
    let space = CodeSpace::new(GateSet::standard(), 2, 3)?;
    let spec = structure_target()?;
    let target = 12u64;
    let mut codes = vec![target];
    let mut code = 0u64;
    while codes.len() < t {
        if code >= space.size() {
            return Err(Error::Invalid(format!("family of {t} non-matching codes is not available")));
        }
        if code != target && !spectrum_matches_oracle(&decompose(&space.build_unitary(code)?)?, &spec) {
            codes.push(code);
        }
        code += 1;
    }
    codes.sort_unstable();
    Ok((Family { space, codes }, spec))
}

fn eigen_point(n: usize, trial: u64, streams: &Streams) -> Result<u64> {
    let m = 4;
    let freqs: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.0 } else { 0.5 }).collect();
    let dev = Device::new(DenseUnitary::from_frequencies(&freqs)?)?;
    Ok(recognize_eigenvalue(&dev, &EigenQuery::coarse(0, m), &streams.child("eigen", trial))?.queries.get(BLACK_BOX))
}

/// Runs every grid point and fits the log-log slope of the mean black-box count.
pub fn sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    if cfg.trials == 0 || cfg.points.len() < 2 {
        return Err(Error::Invalid("a sweep needs trials and at least two points".into()));
    }
    let streams = Streams::new(cfg.seed);
    let mut points = Vec::with_capacity(cfg.points.len());
    for (pi, &value) in cfg.points.iter().enumerate() {
        let s = streams.child("point", pi as u64);
        let mut counts = Vec::with_capacity(cfg.trials);
        let x = match cfg.kind {
            SweepKind::Eigenvalue => {
                let n = value as usize;
                if !n.is_power_of_two() || n < 2 {
                    return Err(Error::Invalid(format!("N = {value} is not a power of two")));
                }
                for t in 0..cfg.trials {
                    counts.push(eigen_point(n, t as u64, &s)?);
                }
                value
            }
            SweepKind::Structure => {
                let (fam, spec) = structure_sweep_family(value as usize)?;
                let sc = StructureConfig::default();
                for t in 0..cfg.trials {
                    let r = find_structure(&fam, &spec, &sc, Marking::Recognition, &s.child("trial", t as u64))?;
                    counts.push(r.queries.get(BLACK_BOX));
                }
                value
            }
            SweepKind::Difference => {
                let d = value;
                let dc = DistinguishConfig { d, ..DistinguishConfig::default() };
                let case = pair_fixture(PairClass::EqualDim, 16, d, 7)?.case(&dc)?;
                for t in 0..cfg.trials {
                    counts.push(difference(&case, &dc, &s.child("trial", t as u64))?.queries.get(BLACK_BOX));
                }
                1.0 / d
            }
        };
        points.push(SweepPoint {
            value,
            x,
            mean_queries: counts.iter().sum::<u64>() as f64 / counts.len() as f64,
            min_queries: *counts.iter().min().expect("trials > 0"),
            max_queries: *counts.iter().max().expect("trials > 0"),
            trials: cfg.trials,
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_queries).collect();
    let (slope, intercept) = fit_loglog(&xs, &ys)?;
    Ok(SweepReport { config: cfg.clone(), points, slope, intercept })
}

pub fn write_csv<W: std::io::Write>(report: &SweepReport, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for p in &report.points {
        out.serialize(p).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Thermo convenience: `C = d⟨E⟩/dT` by central differences over a sorted sweep.
pub fn heat_capacity(kbts: &[f64], mean_energy: &[f64]) -> Vec<Option<f64>> {
    (0..kbts.len())
        .map(|i| {
            (i > 0 && i + 1 < kbts.len()).then(|| (mean_energy[i + 1] - mean_energy[i - 1]) / (kbts[i + 1] - kbts[i - 1]))
        })
        .collect()
}
