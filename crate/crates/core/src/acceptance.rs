//! The acceptance suite: eleven end-to-end checks with fixed tolerances,
//! shared by `pagecurve verify` and the `acceptance` test target.
//!
//! Desk-scale traces (`N_I = 8`, `M_I = 24`) are produced through the same
//! experiment runner the CLI uses and cached, so criteria that compare
//! traces do not rerun them.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{env_init_report, init_circuit, parse, serialize, trotter_step_circuit, ETA_INIT};
use crate::dmrg::{convergence_scan, ground_state, DmrgConfig};
use crate::error::{Error, Result};
use crate::evolve::{run_evaporation, EnvGroundSource, EntropyTrace, RunConfig};
use crate::experiment::{run_experiment, ExperimentConfig, Preset, Scale};
use crate::model::{hamiltonian_terms, EvaporationSchedule, HamiltonianTerms, InitialSystem, Region, TfimParams};
use crate::mpo::Mpo;
use crate::mps::MpsState;
use crate::oracle::{
    self, density_entropy, evolution_operator, exact_ground, operator_distance, protocol_replay,
    reduced_density, reduced_density_complement, StateVector,
};
use crate::random::random_state_vector;
use crate::tensor::TruncationPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    /// Small-L equivalence against the dense simulator.
    Oracle,
    Dmrg,
    /// Desk-scale entropy profiles.
    Shape,
    Determinism,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Oracle => "oracle",
            Group::Dmrg => "dmrg",
            Group::Shape => "shape",
            Group::Determinism => "determinism",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub group: Group,
    pub budget: Duration,
}

const fn criterion(id: u8, name: &'static str, group: Group, minutes: u64) -> Criterion {
    Criterion { id, name, group, budget: Duration::from_secs(60 * minutes) }
}

pub const CRITERIA: [Criterion; 11] = [
    criterion(1, "oracle equivalence (TEBD)", Group::Oracle, 1),
    criterion(2, "entropy identity", Group::Oracle, 1),
    criterion(3, "page-curve shape", Group::Shape, 10),
    criterion(4, "kinematic emergence (h=0)", Group::Shape, 10),
    criterion(5, "criticality suppression", Group::Shape, 20),
    criterion(6, "initial-state robustness", Group::Shape, 20),
    criterion(7, "DMRG correctness", Group::Dmrg, 5),
    criterion(8, "Trotter order", Group::Oracle, 1),
    criterion(9, "tau-window reproduction", Group::Shape, 15),
    criterion(10, "circuit round-trip", Group::Oracle, 1),
    criterion(11, "determinism", Group::Determinism, 5),
];

/// Which criteria to run: everything, or a comma-separated list of group
/// names and criterion numbers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Filter {
    ids: Vec<u8>,
    groups: Vec<Group>,
}

impl Filter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn selects(&self, c: &Criterion) -> bool {
        (self.ids.is_empty() && self.groups.is_empty()) || self.ids.contains(&c.id) || self.groups.contains(&c.group)
    }
}

impl FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut f = Filter::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Ok(id) = part.parse::<u8>() {
                if !CRITERIA.iter().any(|c| c.id == id) {
                    return Err(Error::Parameter(format!("no criterion {id}")));
                }
                f.ids.push(id);
            } else if let Some(g) =
                [Group::Oracle, Group::Dmrg, Group::Shape, Group::Determinism].into_iter().find(|g| g.name() == part)
            {
                f.groups.push(g);
            } else {
                return Err(Error::Parameter(format!(
                    "unknown filter `{part}` (use oracle, dmrg, shape, determinism or a criterion number)"
                )));
            }
        }
        Ok(f)
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub criterion: Criterion,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<28} {} ({:.1} s, budget {} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion.id,
            self.criterion.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.criterion.budget.as_secs()
        )
    }
}

/// The profile tests shared by the shape criteria.
#[derive(Clone, Debug, PartialEq)]
pub struct ShapeCheck {
    pub entropies: Vec<f64>,
    /// 1-based event index of the maximum.
    pub peak_event: usize,
    pub peak: f64,
    pub unique_max: bool,
    pub peak_near_half: bool,
    pub first_below_half_peak: bool,
    pub last_below_half_peak: bool,
    /// Every row satisfies the trace invariants, including `0 ≤ S ≤ N ln 2`.
    pub bounded: bool,
}

/// Peak within this many events of `N_I / 2`.
pub const PEAK_WINDOW: usize = 2;

impl ShapeCheck {
    pub fn new(trace: &EntropyTrace, n_init: usize) -> Self {
        let entropies = trace.entropies();
        let peak_idx = trace.peak_index().unwrap_or(0);
        let peak = entropies.get(peak_idx).copied().unwrap_or(0.0);
        let unique_max = !entropies.is_empty() && entropies.iter().filter(|&&s| s >= peak - 1e-12).count() == 1;
        let peak_event = peak_idx + 1;
        let half = n_init as f64 / 2.0;
        Self {
            peak_event,
            peak,
            unique_max,
            peak_near_half: (peak_event as f64 - half).abs() <= PEAK_WINDOW as f64,
            first_below_half_peak: entropies.first().is_some_and(|&s| s < peak / 2.0),
            last_below_half_peak: entropies.last().is_some_and(|&s| s < peak / 2.0),
            bounded: trace.validate().is_ok(),
            entropies,
        }
    }

    pub fn passed(&self) -> bool {
        self.unique_max && self.peak_near_half && self.first_below_half_peak && self.last_below_half_peak && self.bounded
    }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "NO"
    }
}

impl fmt::Display for ShapeCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.entropies.iter().map(|x| format!("{x:.3}")).collect();
        let (first, last) = (self.entropies.first().unwrap_or(&0.0), self.entropies.last().unwrap_or(&0.0));
        write!(
            f,
            "S=[{}] peak {:.3}@{} (window {}) unique {}; first {:.3}<{:.3} {}; last {:.3}<{:.3} {}; bound {}",
            s.join(" "),
            self.peak,
            self.peak_event,
            mark(self.peak_near_half),
            mark(self.unique_max),
            first,
            self.peak / 2.0,
            mark(self.first_below_half_peak),
            last,
            self.peak / 2.0,
            mark(self.last_below_half_peak),
            mark(self.bounded)
        )
    }
}

/// Desk-scale trace variants used by the shape criteria.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Desk {
    Standard,
    NoCoupling,
    OffCritical,
    Xi,
    CoarseTau,
}

impl Desk {
    fn key(self) -> &'static str {
        match self {
            Desk::Standard => "standard",
            Desk::NoCoupling => "h0",
            Desk::OffCritical => "jsys10",
            Desk::Xi => "xi",
            Desk::CoarseTau => "tau0.5",
        }
    }

    fn config(self, dir: PathBuf) -> ExperimentConfig {
        let mut c = ExperimentConfig::for_preset(Preset::Fig3PageCurve, Scale::Desk);
        c.out = dir;
        match self {
            Desk::Standard => {}
            Desk::NoCoupling => c.params.h = 0.0,
            Desk::OffCritical => c.params.j_sys = 10.0,
            Desk::Xi => c.initial = InitialSystem::Xi,
            Desk::CoarseTau => c.tau = 0.5,
        }
        c
    }
}

pub struct Suite {
    workdir: PathBuf,
    traces: RefCell<HashMap<Desk, std::result::Result<EntropyTrace, String>>>,
}

impl Suite {
    /// Scratch outputs go under `workdir`.
    pub fn new(workdir: PathBuf) -> Self {
        Self { workdir, traces: RefCell::new(HashMap::new()) }
    }

    fn desk(&self, which: Desk) -> Result<EntropyTrace> {
        if let Some(t) = self.traces.borrow().get(&which) {
            return t.clone().map_err(Error::Invariant);
        }
        let run = run_experiment(&which.config(self.workdir.join(which.key())))
            .and_then(|o| o.traces.into_iter().next().map(|(_, t)| t).ok_or_else(|| Error::Invariant("no trace".into())));
        self.traces.borrow_mut().insert(which, run.as_ref().map(|t| t.clone()).map_err(|e| e.to_string()));
        run
    }

    pub fn run(&self, filter: &Filter) -> Vec<Outcome> {
        CRITERIA.iter().filter(|c| filter.selects(c)).map(|c| self.run_one(*c)).collect()
    }

    pub fn run_one(&self, criterion: Criterion) -> Outcome {
        let start = Instant::now();
        let result = match criterion.id {
            1 => oracle_equivalence(),
            2 => entropy_identity(),
            3 => self.page_shape(),
            4 => self.kinematic(),
            5 => self.criticality(),
            6 => self.initial_state(),
            7 => dmrg_correctness(),
            8 => trotter_order(),
            9 => self.tau_window(),
            10 => circuit_round_trip(),
            11 => self.determinism(),
            _ => Err(Error::Parameter(format!("no criterion {}", criterion.id))),
        };
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match result {
            Ok((p, d)) => (p, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if elapsed > criterion.budget {
            passed = false;
            detail.push_str("; over runtime budget");
        }
        Outcome { criterion, passed, detail, elapsed }
    }

    fn page_shape(&self) -> Result<(bool, String)> {
        let trace = self.desk(Desk::Standard)?;
        let check = ShapeCheck::new(&trace, 8);
        Ok((check.passed(), format!("{check}; low-confidence {}", trace.metadata.low_confidence)))
    }

    fn kinematic(&self) -> Result<(bool, String)> {
        let trace = self.desk(Desk::NoCoupling)?;
        let check = ShapeCheck::new(&trace, 8);
        Ok((check.passed(), format!("{check}; low-confidence {}", trace.metadata.low_confidence)))
    }

    fn criticality(&self) -> Result<(bool, String)> {
        let critical = self.desk(Desk::Standard)?.peak_entropy();
        let off = self.desk(Desk::OffCritical)?.peak_entropy();
        Ok((off < critical, format!("peak S: J_sys=10 {off:.4} < J_sys=3 {critical:.4}")))
    }

    fn initial_state(&self) -> Result<(bool, String)> {
        let zeta = ShapeCheck::new(&self.desk(Desk::Standard)?, 8);
        let xi = ShapeCheck::new(&self.desk(Desk::Xi)?, 8);
        let close = zeta.peak_event.abs_diff(xi.peak_event) <= PEAK_WINDOW;
        Ok((
            zeta.passed() && xi.passed() && close,
            format!(
                "zeta shape {}, xi shape {}, peaks {} vs {} {}; xi {xi}",
                mark(zeta.passed()),
                mark(xi.passed()),
                zeta.peak_event,
                xi.peak_event,
                mark(close)
            ),
        ))
    }

    fn tau_window(&self) -> Result<(bool, String)> {
        let fine = self.desk(Desk::Standard)?;
        let coarse = self.desk(Desk::CoarseTau)?;
        let (a, b) = (fine.peak_index().unwrap_or(0) + 1, coarse.peak_index().unwrap_or(0) + 1);
        let s: Vec<String> = coarse.entropies().iter().map(|x| format!("{x:.3}")).collect();
        Ok((a.abs_diff(b) <= 1, format!("peak event tau=0.1: {a}, tau=0.5: {b} (tau=0.5 S=[{}])", s.join(" "))))
    }

    fn determinism(&self) -> Result<(bool, String)> {
        let first_dir = self.workdir.join(Desk::Standard.key());
        if !self.traces.borrow().contains_key(&Desk::Standard) {
            self.desk(Desk::Standard)?;
        }
        let again = self.workdir.join("standard-repeat");
        run_experiment(&Desk::Standard.config(again.clone()))?;
        let name = format!("{}.csv", Preset::Fig3PageCurve.name());
        let (a, b) = (fs::read(first_dir.join(&name))?, fs::read(again.join(&name))?);
        Ok((a == b, format!("{name}: {} vs {} bytes, identical {}", a.len(), b.len(), mark(a == b))))
    }
}

/// Whether every outcome passed, with a one-line tally.
pub fn summarize(outcomes: &[Outcome]) -> (bool, String) {
    let passed = outcomes.iter().filter(|o| o.passed).count();
    let ok = passed == outcomes.len();
    (ok, format!("{passed}/{} criteria passed", outcomes.len()))
}

fn oracle_equivalence() -> Result<(bool, String)> {
    let schedule = EvaporationSchedule::new(TfimParams::standard(3, 3), 5.0, 0.01)?;
    let mut config = RunConfig::new(schedule);
    config.policy = TruncationPolicy::exact();
    config.env_source = EnvGroundSource::Exact;
    let tebd = run_evaporation(&config)?;
    let exact = protocol_replay(&config)?;
    let diff = tebd.entropies().iter().zip(exact.entropies()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let ok = diff <= 2e-3 && tebd.rows.len() == exact.rows.len();
    Ok((ok, format!("max |dS| = {diff:.2e} over {} rows (tol 2e-3)", tebd.rows.len())))
}

fn entropy_identity() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut sides, mut mps_dev) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let psi = random_state_vector(8, &mut rng);
        let sv = StateVector::new(8, psi.data().to_vec())?;
        let mut mps = MpsState::from_statevector(psi.data(), &TruncationPolicy::exact())?;
        for k in 1..8 {
            let a = density_entropy(&reduced_density(&sv, k)?);
            let b = density_entropy(&reduced_density_complement(&sv, k)?);
            sides = sides.max((a - b).abs());
            mps_dev = mps_dev.max((mps.entropy_at(k - 1)? - a).abs());
        }
    }
    let ok = sides <= 1e-10 && mps_dev <= 1e-8;
    Ok((ok, format!("|S_A - S_B| <= {sides:.1e} (tol 1e-10), |S_mps - S_exact| <= {mps_dev:.1e} (tol 1e-8)")))
}

fn dmrg_correctness() -> Result<(bool, String)> {
    let chain = |m: usize| Mpo::from_terms(&HamiltonianTerms::uniform(m, 1.0, 1.0, Region::Environment));
    let cfg = DmrgConfig::default();
    let (_, two) = ground_state(&chain(2)?, 2, &cfg)?;
    let e2 = (two.energy + 5f64.sqrt()).abs();
    let (_, ten) = ground_state(&chain(10)?, 10, &cfg)?;
    let exact10 = exact_ground(&HamiltonianTerms::uniform(10, 1.0, 1.0, Region::Environment))?.1;
    let e10 = (ten.energy - exact10).abs();
    let scan = convergence_scan(&chain(20)?, 20, &[45, 100], &cfg, None)?;
    let e20 = (scan[0].energy - scan[1].energy).abs();
    let ok = e2 <= 1e-10 && e10 <= 1e-8 && e20 <= 1e-10;
    Ok((ok, format!("M=2 {e2:.1e} (1e-10), M=10 {e10:.1e} (1e-8), M=20 |E(45)-E(100)| {e20:.1e} (1e-10)")))
}

fn trotter_order() -> Result<(bool, String)> {
    let params = TfimParams::standard(3, 3);
    let terms = hamiltonian_terms(&params, 3)?;
    let dist = |tau: f64| -> Result<f64> {
        let circuit = oracle::gate_list_unitary(&trotter_step_circuit(&params, 3, 6, tau)?, 6)?;
        Ok(operator_distance(&circuit, &evolution_operator(&terms, tau)?))
    };
    let (d1, d2) = (dist(0.1)?, dist(0.05)?);
    let ratio = d1 / d2;
    Ok(((ratio - 8.0).abs() <= 2.0, format!("distance {d1:.3e} -> {d2:.3e}, ratio {ratio:.2} (8 +/- 2)")))
}

fn circuit_round_trip() -> Result<(bool, String)> {
    let params = TfimParams::standard(4, 2);
    let tau = 0.1;
    let mut program = init_circuit(4, 2, ETA_INIT)?;
    let step = trotter_step_circuit(&params, 4, 6, tau)?;
    program.extend(step.clone());
    program.extend(step);
    let text = serialize(&program);
    let back = parse(&text)?;
    let identical = back == program;

    let mut sv = StateVector::basis(6, 0)?;
    oracle::apply_gate_list(&mut sv, &back)?;
    let mut psi = MpsState::from_product(&[0; 6])?;
    program.apply_to_mps(&mut psi, &TruncationPolicy::exact())?;
    let fidelity = StateVector::from_mps(&psi)?.fidelity(&sv);

    let report = env_init_report(&params, ETA_INIT)?;
    let (best, best_f) = report.best();
    let ok = identical && fidelity >= 1.0 - 1e-8;
    Ok((
        ok,
        format!(
            "parse identical {}, replay fidelity 1-{:.1e}; env-init fidelity {:.4} (control on |1>, half angle), best {best_f:.4} ({best})",
            mark(identical),
            1.0 - fidelity,
            report.pinned()
        ),
    ))
}
