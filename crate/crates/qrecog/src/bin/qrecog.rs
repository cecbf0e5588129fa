use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qrecog::circuit::CircuitFile;
use qrecog::distinguish::DistinguishConfig;
use qrecog::fixtures::{self, MatrixFile, PairClass};
use qrecog::recognize::{Backend, EigenQuery};
use qrecog::runner::{self, DeviceSource, ExperimentConfig, FamilySource, Pipeline, RevCheckConfig, SweepConfig, SweepKind};
use qrecog::structure::{Marking, MatchMode, SpectrumSpec, StructureConfig};
use qrecog::thermo::{HamiltonianFile, ThermoConfig};
use qrecog::{Error, Result};

#[derive(Parser)]
#[command(name = "qrecog", version, about = "Spectral recognition of black-box unitaries")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Run this experiment config instead of building one from flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = qrecog::rng::SEED_ENV, default_value_t = qrecog::rng::DEFAULT_SEED)]
    seed: u64,
    /// Write the JSON report here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DeviceArgs {
    /// Circuit or matrix JSON file.
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Integer code instead of a file, with --gate-set, --n and --c.
    #[arg(long)]
    code: Option<u64>,
    #[arg(long, default_value = "standard")]
    gate_set: String,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    c: usize,
}

impl DeviceArgs {
    fn source(&self) -> Result<DeviceSource> {
        match (&self.circuit, self.code) {
            (Some(p), None) => DeviceSource::load(p),
            (None, Some(code)) => Ok(DeviceSource::Code { gate_set: self.gate_set.clone(), n: self.n, c: self.c, code }),
            _ => Err(Error::Invalid("give exactly one of --circuit or --code".into())),
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Decide whether a device has an eigenvalue near a candidate frequency.
    RecognizeEigenvalue {
        #[command(flatten)]
        device: DeviceArgs,
        /// Candidate as `q/L` on the fine grid.
        #[arg(long, default_value = "0/64")]
        omega: String,
        #[arg(long = "M", default_value_t = 4)]
        m: usize,
        #[arg(long = "L")]
        l: Option<usize>,
        #[arg(long, default_value_t = 1)]
        copies: usize,
        #[arg(long, default_value_t = 32)]
        registers: usize,
        #[arg(long, default_value = "projector")]
        backend: String,
        #[command(flatten)]
        common: Common,
    },
    /// Partition function, mean energy and entropy from recognized levels.
    Thermo {
        #[arg(long)]
        hamiltonian: Option<PathBuf>,
        /// Temperatures in units of the energy scale, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        kbt: Vec<f64>,
        #[arg(long = "M", default_value_t = 32)]
        m: usize,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        /// Temperature table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Search a circuit family for a spectrum.
    FindStructure {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "standard")]
        gate_set: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        c: usize,
        #[arg(long)]
        limit: Option<u64>,
        /// Overrides the mode in the spec file.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, default_value = "recognition")]
        marking: String,
        #[command(flatten)]
        common: Common,
    },
    /// Same or different eigenspaces of two devices at one frequency.
    Distinguish {
        #[arg(long)]
        u: Option<PathBuf>,
        #[arg(long)]
        v: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        omega: f64,
        #[arg(long, default_value_t = 0.5)]
        d: f64,
        #[arg(long = "M", default_value_t = 4)]
        m: usize,
        #[arg(long = "L", default_value_t = 256)]
        l: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Find the family member equal to a black-box device.
    RecognizeDevice {
        #[arg(long)]
        device: Option<PathBuf>,
        #[arg(long, default_value = "involutive")]
        gate_set: String,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        c: usize,
        #[arg(long, value_delimiter = ',')]
        codes: Option<Vec<u64>>,
        #[arg(long)]
        limit: Option<u64>,
        #[arg(long, default_value_t = 0.5)]
        d: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Ancilla mass of Rev near each eigenfrequency of random unitaries.
    VerifyRev {
        #[arg(long, default_value_t = 2)]
        qubits: usize,
        #[arg(long = "L", default_value_t = 32)]
        l: usize,
        #[arg(long = "K", default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        unitaries: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Query-count scaling sweep with a log-log fit.
    Sweep {
        #[arg(long)]
        kind: String,
        #[arg(long, value_delimiter = ',')]
        points: Option<Vec<f64>>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, env = qrecog::rng::SEED_ENV, default_value_t = qrecog::rng::DEFAULT_SEED)]
        seed: u64,
    },
    /// Write fixture files: sparse-spectrum, thermo, pairs, involutive-family, structure-family.
    Fixtures {
        name: String,
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long = "M", default_value_t = 4)]
        m: usize,
        #[arg(long, default_value_t = 0.5)]
        d: f64,
        #[arg(long, env = qrecog::rng::SEED_ENV, default_value_t = qrecog::rng::DEFAULT_SEED)]
        seed: u64,
    },
}

/// Stdout write that tolerates a closed pipe.
fn print_out(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn parse_fraction(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Invalid(format!("expected `q/L`, got `{s}`"));
    let (a, b) = s.split_once('/').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn parse_backend(s: &str) -> Result<Backend> {
    Ok(serde_json::from_value(serde_json::Value::String(s.to_lowercase()))?)
}

fn read_json<T: serde::de::DeserializeOwned>(p: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?)
}

fn write_json<T: serde::Serialize>(p: &Path, v: &T) -> Result<()> {
    if let Some(dir) = p.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(p, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Invalid(format!("--{flag} is required without --config")))
}

fn experiment(common: &Common, expected: &str, build: impl FnOnce() -> Result<Pipeline>) -> Result<ExperimentConfig> {
    if let Some(p) = &common.config {
        let c = ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?;
        if c.pipeline.name() != expected {
            return Err(Error::Invalid(format!("config is for `{}`, not `{expected}`", c.pipeline.name())));
        }
        return Ok(c);
    }
    Ok(ExperimentConfig { pipeline: build()?, seed: common.seed, output: common.out.clone() })
}

fn emit(config: ExperimentConfig) -> Result<i32> {
    let report = runner::run(&config)?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(p) = &config.output {
        std::fs::write(p, &text)?;
    }
    print_out(&text);
    Ok(report.exit_code())
}

fn fixtures_cmd(name: &str, out: &Path, n: usize, m: usize, d: f64, seed: u64) -> Result<i32> {
    std::fs::create_dir_all(out)?;
    let mut written: Vec<String> = Vec::new();
    let mut put = |file: String, v: serde_json::Value| -> Result<()> {
        write_json(&out.join(&file), &v)?;
        written.push(file);
        Ok(())
    };
    match name {
        "sparse-spectrum" => {
            let f = fixtures::sparse_spectrum(n, m, seed)?;
            put(format!("sparse-n{n}-m{m}.json"), serde_json::to_value(&f.unitary)?)?;
            put(format!("sparse-n{n}-m{m}.spectrum.json"), serde_json::to_value(&f.spectrum)?)?;
        }
        "thermo" => {
            for f in fixtures::thermo_fixtures()? {
                let exact = f.hamiltonian.exact_levels(1e-8);
                put(format!("thermo-{}.json", f.name), serde_json::to_value(f.hamiltonian.to_file())?)?;
                put(format!("thermo-{}.levels.json", f.name), serde_json::json!({ "M": f.m, "grid": f.grid, "levels": exact }))?;
            }
        }
        "pairs" => {
            for class in PairClass::ALL {
                let f = fixtures::pair_fixture(class, 16, d, seed)?;
                let stem = format!("pair-{}", class.name());
                put(format!("{stem}.u.json"), serde_json::to_value(MatrixFile::from_matrix(f.u.matrix()))?)?;
                put(format!("{stem}.v.json"), serde_json::to_value(MatrixFile::from_matrix(f.v.matrix()))?)?;
                put(format!("{stem}.meta.json"), serde_json::json!({ "class": class, "omega": f.omega, "d": d, "distances": f.distances }))?;
            }
        }
        "involutive-family" => {
            let (fam, names) = fixtures::involutive_family()?;
            let promise = fixtures::promise_matrix(&fam, &DistinguishConfig { d, ..DistinguishConfig::default() })?;
            let files: Vec<CircuitFile> = fixtures::family_files(&fam)?;
            for (name, f) in names.iter().zip(&files) {
                put(format!("involutive-{name}.json"), serde_json::to_value(f)?)?;
            }
            put("involutive-family.json".into(), serde_json::json!({ "gate_set": "involutive", "n": 3, "c": 2, "codes": fam.codes, "names": names, "promise": promise }))?;
        }
        "structure-family" => {
            let fam = fixtures::structure_family(16)?;
            let spec = fixtures::structure_target()?;
            let hits = fixtures::oracle_matches(&fam, &spec)?;
            put("structure-spec.json".into(), serde_json::to_value(&spec)?)?;
            put("structure-no-match-spec.json".into(), serde_json::to_value(fixtures::structure_no_match()?)?)?;
            put("structure-family.json".into(), serde_json::json!({ "gate_set": "standard", "n": 2, "c": 2, "limit": 16, "matches": hits.iter().map(|i| fam.codes[*i]).collect::<Vec<_>>() }))?;
        }
        other => return Err(Error::Invalid(format!("unknown fixture `{other}`"))),
    }
    print_out(&serde_json::to_string_pretty(&serde_json::json!({ "fixture": name, "dir": out, "files": written }))?);
    Ok(0)
}

fn dispatch(cmd: Cmd) -> Result<i32> {
    match cmd {
        Cmd::RecognizeEigenvalue { device, omega, m, l, copies, registers, backend, common } => emit(experiment(&common, "recognize-eigenvalue", || {
            let (q, denom) = parse_fraction(&omega)?;
            let l = l.unwrap_or(denom);
            if denom != l {
                return Err(Error::Invalid(format!("candidate denominator {denom} differs from L = {l}")));
            }
            let query = EigenQuery { omega: q, m, l, copies, registers, backend: parse_backend(&backend)?, ..EigenQuery::coarse(0, m) };
            Ok(Pipeline::RecognizeEigenvalue { device: device.source()?, query })
        })?),
        Cmd::Thermo { hamiltonian, kbt, m, eps, csv, common } => {
            let config = experiment(&common, "thermo", || {
                let hamiltonian: HamiltonianFile = read_json(required(&hamiltonian, "hamiltonian")?)?;
                let mut config = ThermoConfig { m, ..ThermoConfig::default() };
                config.counting.eps = eps;
                Ok(Pipeline::Thermo { hamiltonian, kbts: kbt, config })
            })?;
            let report = runner::run(&config)?;
            if let Some(p) = csv {
                let results: Vec<qrecog::thermo::ThermoResult> = serde_json::from_value(report.stats["results"].clone())?;
                let kbts: Vec<f64> = results.iter().map(|r| r.kbt).collect();
                let es: Vec<f64> = results.iter().map(|r| r.mean_energy).collect();
                let cap = runner::heat_capacity(&kbts, &es);
                let mut w = csv::Writer::from_path(p).map_err(|e| Error::Invalid(e.to_string()))?;
                w.write_record(["kbt", "partition", "mean_energy", "entropy", "heat_capacity_fd"]).map_err(|e| Error::Invalid(e.to_string()))?;
                for (r, c) in results.iter().zip(cap) {
                    let c = c.map(|x| x.to_string()).unwrap_or_default();
                    w.write_record([r.kbt.to_string(), r.partition.to_string(), r.mean_energy.to_string(), r.entropy.to_string(), c])
                        .map_err(|e| Error::Invalid(e.to_string()))?;
                }
                w.flush()?;
            }
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(p) = &config.output {
                std::fs::write(p, &text)?;
            }
            print_out(&text);
            Ok(report.exit_code())
        }
        Cmd::FindStructure { spec, gate_set, n, c, limit, mode, marking, common } => emit(experiment(&common, "find-structure", || {
            let mut spec: SpectrumSpec = read_json(required(&spec, "spec")?)?;
            if let Some(m) = mode {
                spec.mode = serde_json::from_value::<MatchMode>(serde_json::Value::String(m.to_lowercase()))?;
            }
            spec.validate()?;
            let marking: Marking = serde_json::from_value(serde_json::Value::String(marking.to_lowercase()))?;
            Ok(Pipeline::FindStructure { spec, family: FamilySource { gate_set, n, c, limit, codes: None }, config: StructureConfig::default(), marking })
        })?),
        Cmd::Distinguish { u, v, omega, d, m, l, common } => emit(experiment(&common, "distinguish", || {
            Ok(Pipeline::Distinguish {
                u: DeviceSource::load(required(&u, "u")?)?,
                v: DeviceSource::load(required(&v, "v")?)?,
                omega,
                config: DistinguishConfig { d, m, l, ..DistinguishConfig::default() },
            })
        })?),
        Cmd::RecognizeDevice { device, gate_set, n, c, codes, limit, d, common } => emit(experiment(&common, "recognize-device", || {
            Ok(Pipeline::RecognizeDevice {
                device: DeviceSource::load(required(&device, "device")?)?,
                family: FamilySource { gate_set, n, c, limit, codes },
                config: DistinguishConfig { d, ..DistinguishConfig::default() },
            })
        })?),
        Cmd::VerifyRev { qubits, l, k, unitaries, common } => {
            emit(experiment(&common, "verify-rev", || Ok(Pipeline::VerifyRev(RevCheckConfig { qubits, l, k, unitaries })))?)
        }
        Cmd::Sweep { kind, points, trials, csv, seed } => {
            let kind: SweepKind = serde_json::from_value(serde_json::Value::String(kind.to_lowercase()))?;
            let mut cfg = SweepConfig { trials, seed, ..SweepConfig::default_for(kind) };
            if let Some(p) = points {
                cfg.points = p;
            }
            let report = runner::sweep(&cfg)?;
            if let Some(p) = csv {
                runner::write_csv(&report, std::fs::File::create(p)?)?;
            }
            print_out(&serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Cmd::Fixtures { name, out, n, m, d, seed } => fixtures_cmd(&name, &out, n, m, d, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(runner::error_exit_code(&e) as u8)
        }
    }
}
