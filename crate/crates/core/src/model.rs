//! The evaporating two-part transverse-field Ising chain.
//!
//! Sites are 0-based in code. A chain of `L = N + M` spins is split into a
//! system block `0..N` and an environment block `N..L`:
//!
//! ```text
//! H = -J_sys Σ_{i<N-1} Zᵢ Zᵢ₊₁ - g_sys Σ_{j<N} Xⱼ
//!     -J_env Σ_{N≤i<L-1} Zᵢ Zᵢ₊₁ - g_env Σ_{j≥N} Xⱼ
//!     -h Z_{N-1} Z_N
//! ```
//!
//! An evaporation event moves the boundary one site to the left
//! (`N → N-1`, `M → M+1`) without touching the state.

use log::warn;

use crate::error::{Error, Result};
use crate::mps::MpsState;
use crate::tensor::{Tensor, C64, ZERO};

/// Relative slack allowed when checking that `T/τ` is an integer.
pub const STEP_RATIO_TOL: f64 = 1e-9;

pub fn pauli_x() -> Tensor {
    Tensor::from_real(&[2, 2], &[0.0, 1.0, 1.0, 0.0]).unwrap()
}

pub fn pauli_y() -> Tensor {
    Tensor::new(vec![2, 2], vec![ZERO, C64::new(0.0, -1.0), C64::new(0.0, 1.0), ZERO]).unwrap()
}

/// `σᶻ|0⟩ = +|0⟩`.
pub fn pauli_z() -> Tensor {
    Tensor::from_real(&[2, 2], &[1.0, 0.0, 0.0, -1.0]).unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TfimParams {
    pub j_sys: f64,
    pub g_sys: f64,
    pub j_env: f64,
    pub g_env: f64,
    /// Coupling across the system/environment boundary.
    pub h: f64,
    /// Initial system size `N_I`.
    pub n_init: usize,
    /// Initial environment size `M_I`.
    pub m_init: usize,
}

impl TfimParams {
    /// `J_sys = g_sys = h = 3`, `J_env = g_env = 1`.
    pub fn standard(n_init: usize, m_init: usize) -> Self {
        Self { j_sys: 3.0, g_sys: 3.0, j_env: 1.0, g_env: 1.0, h: 3.0, n_init, m_init }
    }

    pub fn len(&self) -> usize {
        self.n_init + self.m_init
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init < 1 {
            return Err(Error::Parameter("the system needs at least one site".into()));
        }
        if self.len() < 2 {
            return Err(Error::Parameter("the chain needs at least two sites".into()));
        }
        let couplings = [self.j_sys, self.g_sys, self.j_env, self.g_env, self.h];
        if couplings.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter(format!("non-finite coupling in {couplings:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvaporationSchedule {
    /// Time between evaporation events, `T`.
    pub period: f64,
    /// Trotter step `τ`.
    pub tau: f64,
    pub params: TfimParams,
}

impl EvaporationSchedule {
    pub fn new(params: TfimParams, period: f64, tau: f64) -> Result<Self> {
        let schedule = Self { period, tau, params };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Parameter(format!("Trotter step {} must be positive", self.tau)));
        }
        if !(self.period >= self.tau && self.period.is_finite()) {
            return Err(Error::Parameter(format!(
                "period {} must be at least the Trotter step {}",
                self.period, self.tau
            )));
        }
        let ratio = self.period / self.tau;
        if (ratio - ratio.round()).abs() > STEP_RATIO_TOL * ratio.max(1.0) {
            return Err(Error::Parameter(format!(
                "period {} is not an integer multiple of the Trotter step {}",
                self.period, self.tau
            )));
        }
        Ok(())
    }

    /// Trotter steps per evaporation interval.
    pub fn steps_per_interval(&self) -> usize {
        (self.period / self.tau).round() as usize
    }

    /// Time at which the system is fully evaporated, `N_I · T`.
    pub fn horizon(&self) -> f64 {
        self.params.n_init as f64 * self.period
    }

    /// `(N(t), M(t))` with `N(t) = N_I - ⌊t/T⌋`.
    pub fn boundary_at(&self, t: f64) -> Result<(usize, usize)> {
        if !(0.0..=self.horizon() * (1.0 + STEP_RATIO_TOL)).contains(&t) {
            return Err(Error::Range(format!("time {t} outside [0, {}]", self.horizon())));
        }
        let events = ((t / self.period) + STEP_RATIO_TOL).floor() as usize;
        let events = events.min(self.params.n_init);
        Ok((self.params.n_init - events, self.params.m_init + events))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    System,
    Boundary,
    Environment,
}

/// `-coupling · σᶻ_site σᶻ_{site+1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZzBond {
    pub site: usize,
    pub coupling: f64,
    pub region: Region,
}

/// `-coupling · σˣ_site`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XField {
    pub site: usize,
    pub coupling: f64,
    pub region: Region,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HamiltonianTerms {
    pub len: usize,
    pub zz_bonds: Vec<ZzBond>,
    pub x_fields: Vec<XField>,
}

impl HamiltonianTerms {
    /// Uniform open chain `-J Σ ZZ - g Σ X` on `len` sites.
    pub fn uniform(len: usize, j: f64, g: f64, region: Region) -> Self {
        Self {
            len,
            zz_bonds: (0..len.saturating_sub(1)).map(|site| ZzBond { site, coupling: j, region }).collect(),
            x_fields: (0..len).map(|site| XField { site, coupling: g, region }).collect(),
        }
    }

    pub fn boundary_bond(&self) -> Option<&ZzBond> {
        self.zz_bonds.iter().find(|b| b.region == Region::Boundary)
    }
}

/// Terms of the full chain when the system holds `n_sys` sites.
pub fn hamiltonian_terms(params: &TfimParams, n_sys: usize) -> Result<HamiltonianTerms> {
    let len = params.len();
    if n_sys > len {
        return Err(Error::Range(format!("system size {n_sys} exceeds chain length {len}")));
    }
    let zz_bonds = (0..len - 1)
        .map(|site| {
            let (coupling, region) = if site + 1 < n_sys {
                (params.j_sys, Region::System)
            } else if site + 1 == n_sys {
                (params.h, Region::Boundary)
            } else {
                (params.j_env, Region::Environment)
            };
            ZzBond { site, coupling, region }
        })
        .collect();
    let x_fields = (0..len)
        .map(|site| {
            if site < n_sys {
                XField { site, coupling: params.g_sys, region: Region::System }
            } else {
                XField { site, coupling: params.g_env, region: Region::Environment }
            }
        })
        .collect();
    Ok(HamiltonianTerms { len, zz_bonds, x_fields })
}

/// Environment Hamiltonian on its own `m` sites, reindexed from 0.
pub fn environment_terms(params: &TfimParams, m: usize) -> HamiltonianTerms {
    HamiltonianTerms::uniform(m, params.j_env, params.g_env, Region::Environment)
}

/// `exp(+i·g·dt·σˣ)`, the propagator of `-g σˣ` over `dt`.
pub fn field_gate(coupling: f64, dt: f64) -> Tensor {
    let (c, s) = ((coupling * dt).cos(), (coupling * dt).sin());
    Tensor::from_raw(vec![2, 2], vec![C64::new(c, 0.0), C64::new(0.0, s), C64::new(0.0, s), C64::new(c, 0.0)])
}

/// `exp(+i·J·dt·σᶻσᶻ)`, the propagator of `-J σᶻσᶻ` over `dt`, as 4×4.
pub fn bond_gate(coupling: f64, dt: f64) -> Tensor {
    let same = C64::from_polar(1.0, coupling * dt);
    let diff = same.conj();
    Tensor::from_fn(&[4, 4], |ix| {
        if ix[0] != ix[1] {
            ZERO
        } else if ix[0] == 0 || ix[0] == 3 {
            same
        } else {
            diff
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateTerm {
    /// Exponential of `-coupling σˣ_site` over `fraction · τ`.
    Field { site: usize, coupling: f64, fraction: f64 },
    /// Exponential of `-coupling σᶻ_site σᶻ_{site+1}` over `τ`.
    Bond { site: usize, coupling: f64, region: Region },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalGate {
    pub term: GateTerm,
    pub matrix: Tensor,
}

impl LocalGate {
    /// First site acted on.
    pub fn site(&self) -> usize {
        match self.term {
            GateTerm::Field { site, .. } | GateTerm::Bond { site, .. } => site,
        }
    }

    pub fn is_two_site(&self) -> bool {
        matches!(self.term, GateTerm::Bond { .. })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateLayer {
    pub gates: Vec<LocalGate>,
}

/// One second-order Trotter step, applied layer by layer in order:
/// half-step fields, odd bonds, even bonds, half-step fields.
#[derive(Clone, Debug, PartialEq)]
pub struct GateLayers {
    pub tau: f64,
    pub layers: Vec<GateLayer>,
}

impl GateLayers {
    /// Same layers in the opposite order.
    pub fn reversed(&self) -> Self {
        Self { tau: self.tau, layers: self.layers.iter().rev().cloned().collect() }
    }

    pub fn gates(&self) -> impl Iterator<Item = &LocalGate> {
        self.layers.iter().flat_map(|l| l.gates.iter())
    }
}

/// Odd bonds in 1-based numbering, (1,2), (3,4), …, start at even 0-based sites.
fn is_odd_bond(site: usize) -> bool {
    site % 2 == 0
}

/// Compiles the second-order step for a system of `n_sys` sites. The
/// boundary bond `(n_sys-1, n_sys)` lands in the odd layer when `n_sys` is
/// odd and in the even layer otherwise.
pub fn trotter_layers(params: &TfimParams, n_sys: usize, tau: f64) -> Result<GateLayers> {
    let terms = hamiltonian_terms(params, n_sys)?;
    let half_fields = GateLayer {
        gates: terms
            .x_fields
            .iter()
            .map(|f| LocalGate {
                term: GateTerm::Field { site: f.site, coupling: f.coupling, fraction: 0.5 },
                matrix: field_gate(f.coupling, tau / 2.0),
            })
            .collect(),
    };
    let bonds = |odd: bool| GateLayer {
        gates: terms
            .zz_bonds
            .iter()
            .filter(|b| is_odd_bond(b.site) == odd)
            .map(|b| LocalGate {
                term: GateTerm::Bond { site: b.site, coupling: b.coupling, region: b.region },
                matrix: bond_gate(b.coupling, tau),
            })
            .collect(),
    };
    Ok(GateLayers {
        tau,
        layers: vec![half_fields.clone(), bonds(true), bonds(false), half_fields],
    })
}

/// Split of the initial system block into a `|0⟩` product part followed by
/// a GHZ part that touches the environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ZetaLayout {
    pub product_sites: usize,
    pub ghz_sites: usize,
}

impl ZetaLayout {
    /// `⌈n/2⌉` product sites, `⌊n/2⌋` GHZ sites.
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("ζ needs at least two system sites, got {n}")));
        }
        Ok(Self { product_sites: n.div_ceil(2), ghz_sites: n / 2 })
    }

    /// A one-site GHZ block is just `|+⟩` and carries no entanglement.
    pub fn is_degenerate(&self) -> bool {
        self.ghz_sites < 2
    }
}

/// `|0⟩^⊗⌈n/2⌉ ⊗ GHZ(⌊n/2⌋)`.
pub fn zeta_state(n: usize) -> Result<MpsState> {
    let layout = ZetaLayout::new(n)?;
    if layout.is_degenerate() {
        warn!("ζ({n}) has a single-site GHZ block; the system starts unentangled");
    }
    let zeros = MpsState::from_product(&vec![0; layout.product_sites])?;
    Ok(zeros.concat(&MpsState::ghz(layout.ghz_sites)?))
}

/// `|1⟩^⊗n`.
pub fn xi_state(n: usize) -> Result<MpsState> {
    MpsState::from_product(&vec![1; n])
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitialSystem {
    Zeta,
    Xi,
    Bits(Vec<u8>),
}

impl InitialSystem {
    pub fn build(&self, n: usize) -> Result<MpsState> {
        match self {
            Self::Zeta => zeta_state(n),
            Self::Xi => xi_state(n),
            Self::Bits(bits) if bits.len() == n => MpsState::from_product(bits),
            Self::Bits(bits) => Err(Error::Dimension(format!(
                "{} bits given for a system of {n} sites",
                bits.len()
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Zeta => "zeta".into(),
            Self::Xi => "xi".into(),
            Self::Bits(bits) => bits.iter().map(|b| char::from(b'0' + b)).collect(),
        }
    }
}

/// `system ⊗ environment` joined through a bond of extent 1.
pub fn initial_state(params: &TfimParams, system: &MpsState, env_ground: &MpsState) -> Result<MpsState> {
    if system.len() != params.n_init || env_ground.len() != params.m_init {
        return Err(Error::Dimension(format!(
            "expected {} + {} sites, got {} + {}",
            params.n_init,
            params.m_init,
            system.len(),
            env_ground.len()
        )));
    }
    Ok(system.concat(env_ground))
}
