//! Experiment configuration, figure presets and the run driver behind the CLI.
//!
//! Configuration files are flat `key = value` lines with `#` comments. The
//! run manifest written next to every output uses the same format, so a
//! manifest can be fed back in as a config.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;

use crate::circuit::{self, env_init_report, evaporation_program, serialize, trotter_step_circuit, ETA_INIT};
use crate::dmrg::{convergence_scan, write_scan_csv, DmrgConfig};
use crate::error::{Error, Result};
use crate::evolve::{sweep_runner, EnvGroundSource, EntropyTrace, Regime, RunConfig, SweepAxis};
use crate::model::{environment_terms, EvaporationSchedule, InitialSystem, TfimParams};
use crate::mpo::build_env_mpo;
use crate::oracle::{exact_ground, PROPAGATION_GUARD};
use crate::tensor::TruncationPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scale {
    /// `N_I = 8`, `M_I = 24`.
    Desk,
    /// `N_I = 15`, `M_I = 150`.
    Paper,
}

impl Scale {
    pub fn sizes(self) -> (usize, usize) {
        match self {
            Scale::Desk => (8, 24),
            Scale::Paper => (15, 150),
        }
    }
}

impl FromStr for Scale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Parameter(format!("unknown scale `{other}` (expected desk or paper)"))),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Paper => "paper",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Fig3PageCurve,
    Fig4HSweep,
    Fig5Criticality,
    Fig7XiState,
    Fig8XiCriticality,
    Fig9DmrgConvergence,
    Fig10TauSweep,
    CircuitL6,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Fig3PageCurve,
        Preset::Fig4HSweep,
        Preset::Fig5Criticality,
        Preset::Fig7XiState,
        Preset::Fig8XiCriticality,
        Preset::Fig9DmrgConvergence,
        Preset::Fig10TauSweep,
        Preset::CircuitL6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig3PageCurve => "fig3-page-curve",
            Preset::Fig4HSweep => "fig4-h-sweep",
            Preset::Fig5Criticality => "fig5-criticality",
            Preset::Fig7XiState => "fig7-xi-state",
            Preset::Fig8XiCriticality => "fig8-xi-criticality",
            Preset::Fig9DmrgConvergence => "fig9-dmrg-convergence",
            Preset::Fig10TauSweep => "fig10-tau-sweep",
            Preset::CircuitL6 => "circuit-l6",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
            Error::Parameter(format!("unknown preset `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a run produces.
#[derive(Clone, Debug, PartialEq)]
pub enum Task {
    Trace,
    Sweep(SweepAxis),
    DmrgScan(Vec<usize>),
    Circuit,
}

/// System (J, g) and environment (J, g) pairs for the three regimes
/// J/g = 1, J/g > 1 and J/g < 1 of each block.
pub fn criticality_regimes() -> Vec<Regime> {
    let sys = [(3.0, 3.0), (10.0, 3.0), (3.0, 10.0)];
    let env = [(1.0, 1.0), (3.0, 1.0), (1.0, 3.0)];
    sys.iter()
        .flat_map(|&(j_sys, g_sys)| env.iter().map(move |&(j_env, g_env)| Regime { j_sys, g_sys, j_env, g_env }))
        .collect()
}

pub const DEFAULT_SCAN_CHIS: [usize; 9] = [10, 20, 30, 40, 45, 50, 60, 80, 100];
pub const DEFAULT_MEMORY_LIMIT_MB: f64 = 4096.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Option<Preset>,
    pub task: Task,
    pub params: TfimParams,
    pub period: f64,
    pub tau: f64,
    pub policy: TruncationPolicy,
    pub dmrg: DmrgConfig,
    pub env_source: EnvGroundSource,
    pub initial: InitialSystem,
    pub out: PathBuf,
    pub workers: usize,
    pub memory_limit_mb: f64,
}

impl Default for ExperimentConfig {
    /// Standard couplings at `N_I = 15`, `M_I = 150`, `T = 5`, `τ = 0.1`, cutoff `1e-5`.
    fn default() -> Self {
        let (n, m) = Scale::Paper.sizes();
        Self {
            preset: None,
            task: Task::Trace,
            params: TfimParams::standard(n, m),
            period: 5.0,
            tau: 0.1,
            policy: TruncationPolicy::default(),
            dmrg: DmrgConfig::default(),
            env_source: EnvGroundSource::Dmrg(DmrgConfig::default()),
            initial: InitialSystem::Zeta,
            out: PathBuf::from("out"),
            workers: 1,
            memory_limit_mb: DEFAULT_MEMORY_LIMIT_MB,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parameter(format!("invalid value `{value}` for `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// `(line number, key, value)` triples of a config text.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected `key = value`, got `{line}`") })?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl ExperimentConfig {
    pub fn for_preset(preset: Preset, scale: Scale) -> Self {
        let mut c = Self::default();
        c.apply_preset(preset, scale);
        c
    }

    pub fn apply_scale(&mut self, scale: Scale) {
        let (n, m) = scale.sizes();
        self.params.n_init = n;
        self.params.m_init = m;
    }

    /// Resets the task and the preset-specific fields; sizes follow `scale`.
    pub fn apply_preset(&mut self, preset: Preset, scale: Scale) {
        self.preset = Some(preset);
        self.apply_scale(scale);
        self.initial = InitialSystem::Zeta;
        self.task = match preset {
            Preset::Fig3PageCurve => Task::Trace,
            Preset::Fig4HSweep => Task::Sweep(SweepAxis::BoundaryCoupling(vec![0.0, 1.0, 3.0])),
            Preset::Fig5Criticality => Task::Sweep(SweepAxis::Regimes(criticality_regimes())),
            Preset::Fig7XiState => {
                self.initial = InitialSystem::Xi;
                Task::Trace
            }
            Preset::Fig8XiCriticality => {
                self.initial = InitialSystem::Xi;
                Task::Sweep(SweepAxis::Regimes(criticality_regimes()))
            }
            Preset::Fig9DmrgConvergence => Task::DmrgScan(DEFAULT_SCAN_CHIS.to_vec()),
            Preset::Fig10TauSweep => Task::Sweep(SweepAxis::TrotterStep(vec![0.1, 0.5, 1.0])),
            Preset::CircuitL6 => {
                self.params.n_init = 4;
                self.params.m_init = 2;
                Task::Circuit
            }
        };
    }

    /// Applies `key = value` pairs. A `preset` and `scale` in the text are
    /// applied first, wherever they appear.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let pairs = parse_pairs(text)?;
        let find = |key: &str| pairs.iter().find(|(_, k, _)| k == key).map(|(_, _, v)| v.clone());
        let scale = find("scale").map(|s| s.parse::<Scale>()).transpose()?;
        if let Some(p) = find("preset") {
            self.apply_preset(p.parse()?, scale.unwrap_or(Scale::Paper));
        } else if let Some(s) = scale {
            self.apply_scale(s);
        }
        for (line, k, v) in &pairs {
            if k == "preset" || k == "scale" {
                continue;
            }
            self.set(k, v).map_err(|e| match e {
                Error::UnknownKey(_) => e,
                other => Error::Parse { line: *line, message: other.to_string() },
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.params;
        match key {
            "j_sys" => p.j_sys = parse_value(key, value)?,
            "g_sys" => p.g_sys = parse_value(key, value)?,
            "j_env" => p.j_env = parse_value(key, value)?,
            "g_env" => p.g_env = parse_value(key, value)?,
            "h" => p.h = parse_value(key, value)?,
            "n_init" => p.n_init = parse_value(key, value)?,
            "m_init" => p.m_init = parse_value(key, value)?,
            "period" => self.period = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "max_bond" => self.policy.max_bond = parse_value(key, value)?,
            "cutoff" => self.policy.cutoff = parse_value(key, value)?,
            "dmrg_sweeps" => self.dmrg.max_sweeps = parse_value(key, value)?,
            "dmrg_max_bond" => self.dmrg.max_bond = parse_value(key, value)?,
            "dmrg_cutoff" => self.dmrg.cutoff = parse_value(key, value)?,
            "dmrg_energy_tol" => self.dmrg.energy_tol = parse_value(key, value)?,
            "dmrg_lanczos_tol" => self.dmrg.lanczos_tol = parse_value(key, value)?,
            "dmrg_krylov_dim" => self.dmrg.krylov_dim = parse_value(key, value)?,
            "seed" => self.dmrg.seed = parse_value(key, value)?,
            "env_source" => {
                self.env_source = match value {
                    "dmrg" => EnvGroundSource::Dmrg(self.dmrg),
                    "exact" => EnvGroundSource::Exact,
                    _ => return Err(Error::Parameter(format!("env_source must be dmrg or exact, got `{value}`"))),
                }
            }
            "initial" => {
                self.initial = match value {
                    "zeta" => InitialSystem::Zeta,
                    "xi" => InitialSystem::Xi,
                    bits if !bits.is_empty() && bits.bytes().all(|b| b == b'0' || b == b'1') => {
                        InitialSystem::Bits(bits.bytes().map(|b| b - b'0').collect())
                    }
                    _ => return Err(Error::Parameter(format!("initial must be zeta, xi or a bit string, got `{value}`"))),
                }
            }
            "out" => self.out = PathBuf::from(value),
            "workers" => self.workers = parse_value(key, value)?,
            "memory_limit_mb" => self.memory_limit_mb = parse_value(key, value)?,
            "task" => {
                self.task = match value {
                    "trace" => Task::Trace,
                    "circuit" => Task::Circuit,
                    _ => return Err(Error::Parameter(format!("task must be trace or circuit, got `{value}`"))),
                }
            }
            "h_values" => self.task = Task::Sweep(SweepAxis::BoundaryCoupling(parse_list(key, value)?)),
            "tau_values" => self.task = Task::Sweep(SweepAxis::TrotterStep(parse_list(key, value)?)),
            "n_values" => self.task = Task::Sweep(SweepAxis::SystemSize(parse_list(key, value)?)),
            "chi_values" => self.task = Task::DmrgScan(parse_list(key, value)?),
            "regimes" => {
                let v: Vec<f64> = parse_list(key, value)?;
                if v.is_empty() || v.len() % 4 != 0 {
                    return Err(Error::Parameter("regimes takes groups of j_sys,g_sys,j_env,g_env".into()));
                }
                let regimes =
                    v.chunks(4).map(|c| Regime { j_sys: c[0], g_sys: c[1], j_env: c[2], g_env: c[3] }).collect();
                self.task = Task::Sweep(SweepAxis::Regimes(regimes));
            }
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut rc = RunConfig::new(EvaporationSchedule::new(self.params, self.period, self.tau)?);
        rc.policy = self.policy;
        rc.initial = self.initial.clone();
        rc.env_source = match self.env_source {
            EnvGroundSource::Dmrg(_) => EnvGroundSource::Dmrg(self.dmrg),
            EnvGroundSource::Exact => EnvGroundSource::Exact,
        };
        rc.validate()?;
        Ok(rc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Parameter("workers must be at least 1".into()));
        }
        match &self.task {
            Task::Circuit => {
                EvaporationSchedule::new(self.params, self.period, self.tau)?;
            }
            Task::DmrgScan(chis) if chis.is_empty() || chis.contains(&0) => {
                return Err(Error::Parameter("chi_values must be non-empty and positive".into()));
            }
            _ => {
                self.run_config()?;
            }
        }
        Ok(())
    }

    /// Rough peak memory of one simulation in MiB, times the workers that
    /// run concurrently.
    pub fn memory_estimate_mb(&self) -> f64 {
        let mib = (1u64 << 20) as f64;
        let complex = 16.0;
        let per_run = match &self.task {
            // gate programs are a few bytes per gate
            Task::Circuit => self.params.len() as f64 * 4096.0,
            Task::DmrgScan(chis) => {
                let chi = chis.iter().copied().max().unwrap_or(1) as f64;
                let m = self.params.m_init as f64;
                m * 3.0 * chi * chi * complex * 4.0 + (2.0 * chi).powi(2) * complex * 8.0
            }
            _ => {
                let chi = self.policy.max_bond.min(1 << 20) as f64;
                let len = self.params.len() as f64;
                let dmrg_chi = self.dmrg.max_bond as f64;
                // site tensors, the two-site SVD workspace, DMRG environments
                let mps = len * 2.0 * chi * chi * complex;
                let svd = (2.0 * chi).powi(2) * complex * 6.0;
                let envs = len * 3.0 * dmrg_chi * dmrg_chi * complex * 2.0;
                mps + svd + envs
            }
        };
        let parallel = match &self.task {
            Task::Sweep(axis) => self.workers.min(axis.len().max(1)),
            _ => 1,
        } as f64;
        per_run * parallel / mib
    }

    /// Config text that reproduces this configuration.
    pub fn to_config_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        if let Some(preset) = self.preset {
            let _ = writeln!(s, "# preset {preset}");
        }
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("n_init", p.n_init.to_string());
        kv("m_init", p.m_init.to_string());
        kv("j_sys", p.j_sys.to_string());
        kv("g_sys", p.g_sys.to_string());
        kv("j_env", p.j_env.to_string());
        kv("g_env", p.g_env.to_string());
        kv("h", p.h.to_string());
        kv("period", self.period.to_string());
        kv("tau", self.tau.to_string());
        kv("max_bond", self.policy.max_bond.to_string());
        kv("cutoff", self.policy.cutoff.to_string());
        kv("dmrg_sweeps", self.dmrg.max_sweeps.to_string());
        kv("dmrg_max_bond", self.dmrg.max_bond.to_string());
        kv("dmrg_cutoff", self.dmrg.cutoff.to_string());
        kv("dmrg_energy_tol", self.dmrg.energy_tol.to_string());
        kv("dmrg_lanczos_tol", self.dmrg.lanczos_tol.to_string());
        kv("dmrg_krylov_dim", self.dmrg.krylov_dim.to_string());
        kv("seed", self.dmrg.seed.to_string());
        kv(
            "env_source",
            match self.env_source {
                EnvGroundSource::Dmrg(_) => "dmrg".into(),
                EnvGroundSource::Exact => "exact".into(),
            },
        );
        kv("initial", self.initial.name());
        kv("out", self.out.display().to_string());
        kv("workers", self.workers.to_string());
        kv("memory_limit_mb", self.memory_limit_mb.to_string());
        match &self.task {
            Task::Trace => kv("task", "trace".into()),
            Task::Circuit => kv("task", "circuit".into()),
            Task::DmrgScan(chis) => kv("chi_values", join(chis)),
            Task::Sweep(SweepAxis::BoundaryCoupling(v)) => kv("h_values", join(v)),
            Task::Sweep(SweepAxis::TrotterStep(v)) => kv("tau_values", join(v)),
            Task::Sweep(SweepAxis::SystemSize(v)) => kv("n_values", join(v)),
            Task::Sweep(SweepAxis::Regimes(v)) => {
                let flat: Vec<f64> = v.iter().flat_map(|r| [r.j_sys, r.g_sys, r.j_env, r.g_env]).collect();
                kv("regimes", join(&flat))
            }
        }
        s
    }
}

#[derive(Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub traces: Vec<(String, EntropyTrace)>,
    /// Sweep points that failed, with their error messages.
    pub failures: Vec<(String, String)>,
    /// Human-readable notes (e.g. the circuit fidelity report).
    pub notes: Vec<String>,
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect::<String>()
        .trim_matches('_')
        .to_string()
}

fn base_name(config: &ExperimentConfig) -> String {
    config.preset.map(|p| p.name().to_string()).unwrap_or_else(|| "run".into())
}

/// Runs the configured experiment and writes its artifacts and a manifest
/// into `config.out`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutcome> {
    config.validate()?;
    let estimate_mb = config.memory_estimate_mb();
    if estimate_mb > config.memory_limit_mb {
        return Err(Error::Infeasible { estimate_mb, limit_mb: config.memory_limit_mb });
    }
    fs::create_dir_all(&config.out)?;
    let base = base_name(config);
    let mut outcome = RunOutcome::default();
    let write = |outcome: &mut RunOutcome, name: String, contents: &[u8]| -> Result<()> {
        let path = config.out.join(name);
        fs::write(&path, contents)?;
        info!("wrote {}", path.display());
        outcome.files.push(path);
        Ok(())
    };

    match &config.task {
        Task::Trace => {
            let trace = crate::evolve::run_evaporation(&config.run_config()?)?;
            let mut buf = Vec::new();
            trace.write_csv(&mut buf)?;
            write(&mut outcome, format!("{base}.csv"), &buf)?;
            outcome.traces.push((base.clone(), trace));
        }
        Task::Sweep(axis) => {
            let rc = config.run_config()?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(config.workers)
                .build()
                .map_err(|e| Error::Parameter(format!("worker pool: {e}")))?;
            let results = pool.install(|| sweep_runner(&rc, axis))?;
            for r in results {
                match r.trace {
                    Ok(trace) => {
                        let mut buf = Vec::new();
                        trace.write_csv(&mut buf)?;
                        write(&mut outcome, format!("{base}_{}.csv", file_stem(&r.label)), &buf)?;
                        outcome.traces.push((r.label, trace));
                    }
                    Err(e) => outcome.failures.push((r.label, e.to_string())),
                }
            }
        }
        Task::DmrgScan(chis) => {
            let m = config.params.m_init;
            let mpo = build_env_mpo(&config.params, config.params.n_init)?;
            let exact = if m <= PROPAGATION_GUARD {
                Some(exact_ground(&environment_terms(&config.params, m))?.1)
            } else {
                None
            };
            let points = convergence_scan(&mpo, m, chis, &config.dmrg, exact)?;
            let mut buf = Vec::new();
            write_scan_csv(&points, &mut buf)?;
            write(&mut outcome, format!("{base}.csv"), &buf)?;
        }
        Task::Circuit => {
            let schedule = EvaporationSchedule::new(config.params, config.period, config.tau)?;
            let p = &config.params;
            let with_init = (p.n_init, p.m_init) == (4, 2);
            let program = evaporation_program(p, config.tau, schedule.steps_per_interval(), with_init)?;
            let text = serialize(&program);
            if circuit::parse(&text)? != program {
                return Err(Error::Invariant("gate program does not parse back to itself".into()));
            }
            write(&mut outcome, format!("{base}.gates"), text.as_bytes())?;
            if with_init {
                let mut two_step = circuit::init_circuit(p.n_init, p.m_init, ETA_INIT)?;
                let step = trotter_step_circuit(p, p.n_init, p.len(), config.tau)?;
                two_step.extend(step.clone());
                two_step.extend(step);
                write(&mut outcome, format!("{base}_two-step.gates"), serialize(&two_step).as_bytes())?;
                if p.m_init == 2 {
                    let report = env_init_report(p, ETA_INIT)?;
                    write(&mut outcome, format!("{base}_env-init.txt"), format!("{report}\n").as_bytes())?;
                    outcome.notes.push(report.to_string());
                }
            } else {
                outcome.notes.push(format!(
                    "no initialization circuit for N={}, M={}; program starts from the prepared state",
                    p.n_init, p.m_init
                ));
            }
        }
    }

    let mut manifest = format!("# {} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    manifest.push_str(&config.to_config_text());
    let _ = writeln!(manifest, "# memory estimate {estimate_mb:.1} MiB");
    for f in &outcome.files {
        let _ = writeln!(manifest, "# output {}", f.file_name().unwrap_or_default().to_string_lossy());
    }
    for (label, trace) in &outcome.traces {
        let m = &trace.metadata;
        let _ = writeln!(
            manifest,
            "# trace {label}: seed {:?}, S(0) {}, E_env {}, max bond {}, low confidence {}",
            m.seed, m.initial_entropy, m.env_energy, m.max_bond, m.low_confidence
        );
    }
    for (label, err) in &outcome.failures {
        let _ = writeln!(manifest, "# failed {label}: {err}");
    }
    let path = config.out.join(format!("{base}.manifest"));
    fs::write(&path, manifest)?;
    outcome.files.push(path);
    Ok(outcome)
}

/// Gate program for a configuration, as written by `export-circuit`.
pub fn export_program(config: &ExperimentConfig, steps_per_interval: Option<usize>) -> Result<String> {
    let schedule = EvaporationSchedule::new(config.params, config.period, config.tau)?;
    let p = &config.params;
    let steps = steps_per_interval.unwrap_or_else(|| schedule.steps_per_interval());
    if steps == 0 {
        return Err(Error::Parameter("at least one Trotter step per interval".into()));
    }
    let with_init = (p.n_init, p.m_init) == (4, 2);
    Ok(serialize(&evaporation_program(p, config.tau, steps, with_init)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_standard_run() {
        let c = ExperimentConfig::default();
        assert_eq!(c.params, TfimParams::standard(15, 150));
        assert_eq!((c.period, c.tau, c.policy.cutoff, c.policy.max_bond), (5.0, 0.1, 1e-5, 100));
        assert_eq!((c.dmrg.max_sweeps, c.dmrg.max_bond), (10, 100));
        c.validate().unwrap();
    }

    #[test]
    fn desk_scale_keeps_couplings() {
        for preset in Preset::ALL {
            let d = ExperimentConfig::for_preset(preset, Scale::Desk);
            let p = ExperimentConfig::for_preset(preset, Scale::Paper);
            assert_eq!((d.params.j_sys, d.params.h, d.tau), (p.params.j_sys, p.params.h, p.tau));
            assert_eq!(preset.name().parse::<Preset>().unwrap(), preset);
            d.validate().unwrap();
        }
        let d = ExperimentConfig::for_preset(Preset::Fig3PageCurve, Scale::Desk);
        assert_eq!((d.params.n_init, d.params.m_init), (8, 24));
    }

    #[test]
    fn config_text_round_trips() {
        for preset in Preset::ALL {
            let mut c = ExperimentConfig::for_preset(preset, Scale::Desk);
            c.env_source = EnvGroundSource::Exact;
            c.dmrg.seed = 99;
            let back = ExperimentConfig::from_text(&c.to_config_text()).unwrap();
            assert_eq!(back.task, c.task);
            assert_eq!(back.params, c.params);
            assert_eq!(back.to_config_text(), c.to_config_text().replace(&format!("# preset {preset}\n"), ""));
        }
    }

    #[test]
    fn unknown_key_is_named() {
        match ExperimentConfig::from_text("h = 1\nbogus_key = 3\n") {
            Err(Error::UnknownKey(k)) => assert_eq!(k, "bogus_key"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(ExperimentConfig::from_text("h = x\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(ExperimentConfig::from_text("\n\nno equals\n"), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn preset_and_scale_apply_before_other_keys() {
        let c = ExperimentConfig::from_text("h = 0.5 # trailing comment\npreset = fig4-h-sweep\nscale = desk\nh_values = 0\n")
            .unwrap();
        assert_eq!(c.params.h, 0.5);
        assert_eq!(c.params.n_init, 8);
        assert_eq!(c.task, Task::Sweep(SweepAxis::BoundaryCoupling(vec![0.0])));
    }

    #[test]
    fn nine_criticality_regimes() {
        let r = criticality_regimes();
        assert_eq!(r.len(), 9);
        assert_eq!(r[0], Regime { j_sys: 3.0, g_sys: 3.0, j_env: 1.0, g_env: 1.0 });
        assert!(r.iter().any(|x| x.j_sys / x.g_sys > 1.0 && x.j_env == x.g_env));
    }

    #[test]
    fn infeasible_runs_are_refused_with_the_estimate() {
        let mut c = ExperimentConfig::for_preset(Preset::Fig3PageCurve, Scale::Paper);
        c.policy.max_bond = 100_000;
        let dir = tempfile::tempdir().unwrap();
        c.out = dir.path().to_path_buf();
        match run_experiment(&c) {
            Err(Error::Infeasible { estimate_mb, limit_mb }) => {
                assert!(estimate_mb > limit_mb);
                assert!(Error::Infeasible { estimate_mb, limit_mb }.to_string().contains("MiB"));
            }
            other => panic!("{other:?}"),
        }
        assert!(fs::read_dir(dir.path()).unwrap().next().is_none());
        assert!(ExperimentConfig::default().memory_estimate_mb() < DEFAULT_MEMORY_LIMIT_MB);
    }

    #[test]
    fn small_trace_run_writes_csv_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::default();
        c.params = TfimParams::standard(3, 3);
        c.period = 1.0;
        c.env_source = EnvGroundSource::Exact;
        c.out = dir.path().to_path_buf();
        let outcome = run_experiment(&c).unwrap();
        let csv = fs::read_to_string(dir.path().join("run.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        let manifest = fs::read_to_string(dir.path().join("run.manifest")).unwrap();
        assert!(manifest.contains("n_init = 3") && manifest.contains("# output run.csv"));
        // the manifest is itself a valid config
        let again = ExperimentConfig::from_text(&manifest).unwrap();
        assert_eq!(again.params, c.params);
        assert_eq!(outcome.traces.len(), 1);
    }

    #[test]
    fn circuit_preset_writes_programs() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::for_preset(Preset::CircuitL6, Scale::Desk);
        c.out = dir.path().to_path_buf();
        let outcome = run_experiment(&c).unwrap();
        let text = fs::read_to_string(dir.path().join("circuit-l6_two-step.gates")).unwrap();
        let gl = circuit::parse(&text).unwrap();
        assert_eq!(gl.gate_count(circuit::Op::RX), 24);
        assert_eq!(gl.gate_count(circuit::Op::RZZ), 10);
        assert_eq!(gl.gate_count(circuit::Op::CRY), 1);
        let full = fs::read_to_string(dir.path().join("circuit-l6.gates")).unwrap();
        assert_eq!(full.matches("# evaporation event").count(), 3);
        assert!(outcome.notes[0].contains("fidelity"));
    }

    #[test]
    fn export_without_init_for_other_sizes() {
        let mut c = ExperimentConfig::default();
        c.params = TfimParams::standard(3, 2);
        let text = export_program(&c, Some(1)).unwrap();
        let gl = circuit::parse(&text).unwrap();
        assert_eq!(gl.gate_count(circuit::Op::CRY), 0);
        assert_eq!(gl.gate_count(circuit::Op::RZZ), 3 * 4);
        assert!(export_program(&c, Some(0)).is_err());
    }
}
