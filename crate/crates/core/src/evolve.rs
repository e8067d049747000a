//! TEBD evaporation driver.
//!
//! Each interval of length `T` is evolved with `T/τ` second-order Trotter
//! steps for the current boundary. At `t = nT` the entropy across the bond
//! between the system and the environment is recorded, and only then is one
//! site handed over to the environment.

use std::fmt::Write as _;
use std::io::Write;

use log::{info, warn};
use rayon::prelude::*;

use crate::dmrg::{ground_state, DmrgConfig};
use crate::error::{Error, Result};
use crate::model::{environment_terms, initial_state, trotter_layers, EvaporationSchedule, GateLayers, InitialSystem};
use crate::mpo::build_env_mpo;
use crate::mps::MpsState;
use crate::oracle::{exact_ground, PROPAGATION_GUARD};
use crate::tensor::TruncationPolicy;

/// Cumulative discarded weight above which a trace is flagged.
pub const LOW_CONFIDENCE_WEIGHT: f64 = 1e-2;
/// Slack on `S ≤ N ln 2`.
pub const ENTROPY_BOUND_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnvGroundSource {
    Dmrg(DmrgConfig),
    /// Dense diagonalization; only for small environments.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProtocolOrder {
    MeasureThenEvaporate,
    /// Deliberately wrong order, kept for testing the protocol itself.
    EvaporateThenMeasure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub schedule: EvaporationSchedule,
    pub policy: TruncationPolicy,
    pub initial: InitialSystem,
    pub env_source: EnvGroundSource,
    pub order: ProtocolOrder,
}

impl RunConfig {
    /// `T = 5`, `τ = 0.1`, `χ = 100`, cutoff `1e-5`, ζ initial state, DMRG environment.
    pub fn new(schedule: EvaporationSchedule) -> Self {
        Self {
            schedule,
            policy: TruncationPolicy::default(),
            initial: InitialSystem::Zeta,
            env_source: EnvGroundSource::Dmrg(DmrgConfig::default()),
            order: ProtocolOrder::MeasureThenEvaporate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.policy.validate()?;
        if let EnvGroundSource::Dmrg(cfg) = &self.env_source {
            cfg.validate()?;
        }
        Ok(())
    }

    pub fn seed(&self) -> Option<u64> {
        match self.env_source {
            EnvGroundSource::Dmrg(cfg) => Some(cfg.seed),
            EnvGroundSource::Exact => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    /// System size whose boundary bond was measured.
    pub n_sys: usize,
    pub m_env: usize,
    pub entropy: f64,
    /// Product of all pre-renormalization norms so far.
    pub norm: f64,
    pub discarded_weight: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TraceMetadata {
    /// Seed of the DMRG starting state, if DMRG was used.
    pub seed: Option<u64>,
    /// Entropy across the system/environment cut before any evolution.
    pub initial_entropy: f64,
    pub env_energy: f64,
    pub max_bond: usize,
    pub low_confidence: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntropyTrace {
    pub rows: Vec<TraceRow>,
    pub metadata: TraceMetadata,
}

pub const CSV_HEADER: &str = "t,N,M,S_env,norm,discarded_weight";

impl EntropyTrace {
    /// Checks the bookkeeping invariants of a measure-then-evaporate trace.
    pub fn validate(&self) -> Result<()> {
        let ln2 = std::f64::consts::LN_2;
        for (k, r) in self.rows.iter().enumerate() {
            let fail = |what: String| Err(Error::Invariant(format!("row {}: {what}", k + 1)));
            if !(r.entropy >= -ENTROPY_BOUND_TOL) {
                return fail(format!("negative entropy {}", r.entropy));
            }
            if r.entropy > r.n_sys as f64 * ln2 + ENTROPY_BOUND_TOL {
                return fail(format!("entropy {} exceeds {} ln 2", r.entropy, r.n_sys));
            }
            if r.norm > 1.0 + 1e-9 || r.norm < 1.0 - r.discarded_weight - 1e-9 {
                return fail(format!("norm {} inconsistent with weight {}", r.norm, r.discarded_weight));
            }
            if let Some(prev) = k.checked_sub(1).map(|p| self.rows[p]) {
                if r.t <= prev.t || r.n_sys + r.m_env != prev.n_sys + prev.m_env {
                    return fail("rows out of order".into());
                }
                if r.discarded_weight < prev.discarded_weight {
                    return fail("discarded weight decreased".into());
                }
            }
        }
        Ok(())
    }

    pub fn entropies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.entropy).collect()
    }

    /// Index of the largest entropy.
    pub fn peak_index(&self) -> Option<usize> {
        self.rows.iter().enumerate().max_by(|a, b| a.1.entropy.total_cmp(&b.1.entropy)).map(|(k, _)| k)
    }

    pub fn peak_entropy(&self) -> f64 {
        self.rows.iter().map(|r| r.entropy).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.t, r.n_sys, r.m_env, r.entropy, r.norm, r.discarded_weight);
        }
        s
    }

    /// Validates, then writes the CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        self.validate()?;
        out.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::Parse { line: 1, message: format!("expected header `{CSV_HEADER}`") }),
        }
        let mut rows = Vec::new();
        for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(parse_err(format!("expected 6 fields, got {}", f.len())));
            }
            let real = |s: &str| s.trim().parse::<f64>().map_err(|e| parse_err(format!("{s}: {e}")));
            let int = |s: &str| s.trim().parse::<usize>().map_err(|e| parse_err(format!("{s}: {e}")));
            rows.push(TraceRow {
                t: real(f[0])?,
                n_sys: int(f[1])?,
                m_env: int(f[2])?,
                entropy: real(f[3])?,
                norm: real(f[4])?,
                discarded_weight: real(f[5])?,
            });
        }
        Ok(Self { rows, metadata: TraceMetadata::default() })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepReport {
    pub discarded_weight: f64,
    pub norm_product: f64,
}

/// Applies `steps` Trotter steps; the state is renormalized after every gate.
pub fn step_interval(
    state: &mut MpsState,
    gates: &GateLayers,
    steps: usize,
    policy: &TruncationPolicy,
) -> Result<StepReport> {
    if steps == 0 {
        return Err(Error::Parameter("an interval needs at least one step".into()));
    }
    let mut report = StepReport { discarded_weight: 0.0, norm_product: 1.0 };
    for _ in 0..steps {
        for gate in gates.gates() {
            if gate.is_two_site() {
                let out = state.apply_two_site_gate(&gate.matrix, gate.site(), policy)?;
                report.discarded_weight += out.discarded_weight;
                report.norm_product *= out.norm_before;
            } else {
                state.apply_single_site_gate(&gate.matrix, gate.site())?;
            }
        }
    }
    Ok(report)
}

/// Ground state of the initial environment block and its energy.
pub fn environment_ground(config: &RunConfig) -> Result<(MpsState, f64)> {
    let params = &config.schedule.params;
    let m = params.m_init;
    let exact = || -> Result<(MpsState, f64)> {
        if m > PROPAGATION_GUARD {
            return Err(Error::Guard(format!("exact environment ground state on {m} sites")));
        }
        let (sv, e) = exact_ground(&environment_terms(params, m))?;
        Ok((MpsState::from_statevector(sv.amplitudes(), &TruncationPolicy::new(usize::MAX, 1e-16)?)?, e))
    };
    match config.env_source {
        EnvGroundSource::Exact => exact(),
        // a single environment spin has nothing for DMRG to sweep over
        EnvGroundSource::Dmrg(_) if m < 2 => exact(),
        EnvGroundSource::Dmrg(cfg) => {
            let (psi, report) = ground_state(&build_env_mpo(params, params.n_init)?, m, &cfg)?;
            if !report.converged {
                warn!("environment DMRG did not converge; continuing with E = {}", report.energy);
            }
            Ok((psi, report.energy))
        }
    }
}

pub fn run_evaporation(config: &RunConfig) -> Result<EntropyTrace> {
    config.validate()?;
    let schedule = &config.schedule;
    let params = &schedule.params;
    let len = params.len();
    let (env, env_energy) = environment_ground(config)?;
    let mut psi = initial_state(params, &config.initial.build(params.n_init)?, &env)?;
    let mut metadata = TraceMetadata { seed: config.seed(), env_energy, ..TraceMetadata::default() };
    metadata.initial_entropy = psi.entropy_at(params.n_init - 1)?;

    let steps = schedule.steps_per_interval();
    let (mut norm, mut weight) = (1.0, 0.0);
    let mut rows = Vec::with_capacity(params.n_init);
    for event in 1..=params.n_init {
        let n = params.n_init + 1 - event;
        let gates = trotter_layers(params, n, schedule.tau)?;
        let step = step_interval(&mut psi, &gates, steps, &config.policy)?;
        norm *= step.norm_product;
        weight += step.discarded_weight;
        metadata.max_bond = metadata.max_bond.max(psi.max_bond());

        let cut = match config.order {
            ProtocolOrder::MeasureThenEvaporate => n,
            ProtocolOrder::EvaporateThenMeasure => n - 1,
        };
        let entropy = if cut == 0 { 0.0 } else { psi.entropy_at(cut - 1)? };
        if entropy > cut as f64 * std::f64::consts::LN_2 + ENTROPY_BOUND_TOL {
            return Err(Error::Invariant(format!("entropy {entropy} exceeds {cut} ln 2 at event {event}")));
        }
        rows.push(TraceRow {
            t: event as f64 * schedule.period,
            n_sys: cut,
            m_env: len - cut,
            entropy,
            norm,
            discarded_weight: weight,
        });
        info!("t = {:>6}: N = {n}, S = {entropy:.6}, χ = {}, weight = {weight:.2e}", rows[event - 1].t, psi.max_bond());
    }
    if weight > LOW_CONFIDENCE_WEIGHT {
        warn!("cumulative discarded weight {weight:.3e} exceeds {LOW_CONFIDENCE_WEIGHT}; trace is low-confidence");
        metadata.low_confidence = true;
    }
    let trace = EntropyTrace { rows, metadata };
    trace.validate()?;
    Ok(trace)
}

/// Couplings of one system/environment regime.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regime {
    pub j_sys: f64,
    pub g_sys: f64,
    pub j_env: f64,
    pub g_env: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SweepAxis {
    SystemSize(Vec<usize>),
    BoundaryCoupling(Vec<f64>),
    Regimes(Vec<Regime>),
    TrotterStep(Vec<f64>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            Self::SystemSize(v) => v.len(),
            Self::BoundaryCoupling(v) | Self::TrotterStep(v) => v.len(),
            Self::Regimes(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copies of `base` differing only in the swept parameter, with labels.
    pub fn configs(&self, base: &RunConfig) -> Result<Vec<(String, RunConfig)>> {
        if self.is_empty() {
            return Err(Error::Parameter("sweep needs at least one value".into()));
        }
        let with = |f: &dyn Fn(&mut EvaporationSchedule)| {
            let mut c = base.clone();
            f(&mut c.schedule);
            c
        };
        let out = match self {
            Self::SystemSize(v) => v.iter().map(|&n| (format!("N_I={n}"), with(&|s| s.params.n_init = n))).collect(),
            Self::BoundaryCoupling(v) => v.iter().map(|&h| (format!("h={h}"), with(&|s| s.params.h = h))).collect(),
            Self::TrotterStep(v) => v.iter().map(|&tau| (format!("tau={tau}"), with(&|s| s.tau = tau))).collect(),
            Self::Regimes(v) => v
                .iter()
                .map(|r| {
                    let label = format!("sys=({},{}) env=({},{})", r.j_sys, r.g_sys, r.j_env, r.g_env);
                    let c = with(&|s| {
                        s.params.j_sys = r.j_sys;
                        s.params.g_sys = r.g_sys;
                        s.params.j_env = r.j_env;
                        s.params.g_env = r.g_env;
                    });
                    (label, c)
                })
                .collect(),
        };
        Ok(out)
    }
}

pub struct SweepResult {
    pub label: String,
    pub config: RunConfig,
    pub trace: Result<EntropyTrace>,
}

/// Runs every point of the sweep in parallel; a failing point does not
/// affect the others.
pub fn sweep_runner(base: &RunConfig, axis: &SweepAxis) -> Result<Vec<SweepResult>> {
    let configs = axis.configs(base)?;
    Ok(configs
        .into_par_iter()
        .map(|(label, config)| {
            let trace = run_evaporation(&config);
            if let Err(e) = &trace {
                warn!("sweep point {label} failed: {e}");
            }
            SweepResult { label, config, trace }
        })
        .collect())
}
