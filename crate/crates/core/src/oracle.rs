//! Dense reference simulator for small chains.
//!
//! Everything here works on full `2^L` state vectors and operators and shares
//! no code with the MPS path beyond the term lists, so the two can be checked
//! against each other. Site 0 is the most significant bit of a basis index.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::circuit::GateList;
use crate::error::{Error, Result};
use crate::evolve::{EntropyTrace, ProtocolOrder, RunConfig, TraceMetadata, TraceRow};
use crate::model::{environment_terms, hamiltonian_terms, GateLayers, HamiltonianTerms, InitialSystem, ZetaLayout};
use crate::mps::{von_neumann_entropy, MpsState};
use crate::tensor::{Tensor, C64, ZERO};

/// Largest chain held as a dense state vector.
pub const STATEVECTOR_GUARD: usize = 16;
/// Largest chain for which the Hamiltonian is fully diagonalized.
pub const PROPAGATION_GUARD: usize = 14;
/// Largest chain for a full dense replay of the evaporation protocol.
pub const REPLAY_GUARD: usize = 12;

fn guard(len: usize, limit: usize, what: &str) -> Result<()> {
    if len > limit {
        return Err(Error::Guard(format!("{what} on {len} sites exceeds the limit of {limit}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    len: usize,
    amps: Vec<C64>,
}

impl StateVector {
    /// Requires `2^len` amplitudes of unit norm (within `1e-10`).
    pub fn new(len: usize, amps: Vec<C64>) -> Result<Self> {
        guard(len, STATEVECTOR_GUARD, "state vector")?;
        if amps.len() != 1 << len {
            return Err(Error::Dimension(format!("{} amplitudes for {len} sites", amps.len())));
        }
        let sv = Self { len, amps };
        if (sv.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Parameter(format!("state norm {} is not 1", sv.norm())));
        }
        Ok(sv)
    }

    /// Rescales to unit norm.
    pub fn normalized(len: usize, mut amps: Vec<C64>) -> Result<Self> {
        let n = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::Parameter("cannot normalize the zero vector".into()));
        }
        amps.iter_mut().for_each(|a| *a /= n);
        Self::new(len, amps)
    }

    pub fn basis(len: usize, index: usize) -> Result<Self> {
        guard(len, STATEVECTOR_GUARD, "state vector")?;
        let mut amps = vec![ZERO; 1 << len];
        *amps.get_mut(index).ok_or_else(|| Error::Range(format!("basis index {index}")))? = C64::new(1.0, 0.0);
        Ok(Self { len, amps })
    }

    pub fn from_mps(mps: &MpsState) -> Result<Self> {
        guard(mps.len(), STATEVECTOR_GUARD, "state vector")?;
        Self::normalized(mps.len(), mps.to_statevector()?.into_data())
    }

    /// `self ⊗ other`, with `self` on the leading sites.
    pub fn kron(&self, other: &StateVector) -> Result<Self> {
        let amps = self.amps.iter().flat_map(|a| other.amps.iter().map(move |b| a * b)).collect();
        Self::new(self.len + other.len, amps)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    fn bit(&self, site: usize) -> usize {
        self.len - 1 - site
    }

    /// Applies a 2×2 gate on `site`.
    pub fn apply_one(&mut self, gate: &Tensor, site: usize) -> Result<()> {
        if gate.shape() != [2, 2] || site >= self.len {
            return Err(Error::Dimension(format!("gate {:?} on site {site} of {}", gate.shape(), self.len)));
        }
        let mask = 1 << self.bit(site);
        let g = gate.data();
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let (a0, a1) = (self.amps[i], self.amps[i | mask]);
                self.amps[i] = g[0] * a0 + g[1] * a1;
                self.amps[i | mask] = g[2] * a0 + g[3] * a1;
            }
        }
        Ok(())
    }

    /// Applies a 4×4 gate on `(first, second)`; row index `2·b_first + b_second`.
    /// The two sites need not be adjacent or ordered.
    pub fn apply_two(&mut self, gate: &Tensor, first: usize, second: usize) -> Result<()> {
        let gate = if gate.shape() == [2, 2, 2, 2] { gate.clone().reshape(&[4, 4])? } else { gate.clone() };
        if gate.shape() != [4, 4] || first >= self.len || second >= self.len || first == second {
            return Err(Error::Dimension(format!(
                "gate {:?} on sites ({first}, {second}) of {}",
                gate.shape(),
                self.len
            )));
        }
        let (m1, m2) = (1 << self.bit(first), 1 << self.bit(second));
        let g = gate.data();
        for i in 0..self.amps.len() {
            if i & (m1 | m2) == 0 {
                let idx = [i, i | m2, i | m1, i | m1 | m2];
                let old = idx.map(|k| self.amps[k]);
                for (r, &k) in idx.iter().enumerate() {
                    self.amps[k] = (0..4).map(|c| g[4 * r + c] * old[c]).sum();
                }
            }
        }
        Ok(())
    }

    pub fn apply_layers(&mut self, layers: &GateLayers) -> Result<()> {
        for gate in layers.gates() {
            if gate.is_two_site() {
                self.apply_two(&gate.matrix, gate.site(), gate.site() + 1)?;
            } else {
                self.apply_one(&gate.matrix, gate.site())?;
            }
        }
        Ok(())
    }

    pub fn to_dvector(&self) -> DVector<C64> {
        DVector::from_column_slice(&self.amps)
    }

    fn from_dvector(len: usize, v: &DVector<C64>) -> Result<Self> {
        Self::new(len, v.as_slice().to_vec())
    }
}

/// Real symmetric `2^L × 2^L` matrix of the transverse-field Ising terms.
pub fn dense_hamiltonian(terms: &HamiltonianTerms) -> Result<DMatrix<f64>> {
    let len = terms.len;
    guard(len, PROPAGATION_GUARD, "dense Hamiltonian")?;
    let dim = 1usize << len;
    let bit = |site: usize| 1usize << (len - 1 - site);
    let mut h = DMatrix::zeros(dim, dim);
    for b in 0..dim {
        let mut diag = 0.0;
        for bond in &terms.zz_bonds {
            let aligned = (b & bit(bond.site) == 0) == (b & bit(bond.site + 1) == 0);
            diag -= if aligned { bond.coupling } else { -bond.coupling };
        }
        h[(b, b)] = diag;
        for f in &terms.x_fields {
            h[(b ^ bit(f.site), b)] -= f.coupling;
        }
    }
    Ok(h)
}

/// Lowest eigenpair, with the sign fixed so the largest component is positive.
pub fn exact_ground(terms: &HamiltonianTerms) -> Result<(StateVector, f64)> {
    let eig = SymmetricEigen::new(dense_hamiltonian(terms)?);
    let k = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(k);
    let lead = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
    let sign = lead.signum();
    let amps = v.iter().map(|x| C64::new(sign * x, 0.0)).collect();
    Ok((StateVector::normalized(terms.len, amps)?, eig.eigenvalues[k]))
}

/// Caches the eigendecomposition of `H` so repeated propagation is cheap.
pub struct Propagator {
    len: usize,
    energies: DVector<f64>,
    basis: DMatrix<C64>,
}

impl Propagator {
    pub fn new(terms: &HamiltonianTerms) -> Result<Self> {
        let eig = SymmetricEigen::new(dense_hamiltonian(terms)?);
        Ok(Self { len: terms.len, energies: eig.eigenvalues, basis: eig.eigenvectors.map(|x| C64::new(x, 0.0)) })
    }

    /// `exp(-iHt)` as a dense matrix.
    pub fn operator(&self, t: f64) -> DMatrix<C64> {
        let mut right = self.basis.adjoint();
        for (mut row, e) in right.row_iter_mut().zip(self.energies.iter()) {
            row *= C64::from_polar(1.0, -e * t);
        }
        &self.basis * right
    }

    pub fn propagate(&self, state: &StateVector, t: f64) -> Result<StateVector> {
        if state.len != self.len {
            return Err(Error::Dimension(format!("{}-site state, {}-site Hamiltonian", state.len, self.len)));
        }
        let mut coeffs = self.basis.adjoint() * state.to_dvector();
        for (c, e) in coeffs.iter_mut().zip(self.energies.iter()) {
            *c *= C64::from_polar(1.0, -e * t);
        }
        StateVector::normalized(self.len, (&self.basis * coeffs).as_slice().to_vec())
    }
}

pub fn exact_propagate(state: &StateVector, terms: &HamiltonianTerms, t: f64) -> Result<StateVector> {
    Propagator::new(terms)?.propagate(state, t)
}

pub fn evolution_operator(terms: &HamiltonianTerms, t: f64) -> Result<DMatrix<C64>> {
    Ok(Propagator::new(terms)?.operator(t))
}

/// Dense unitary of one Trotter step; column `k` is the image of basis state `k`.
pub fn layers_unitary(layers: &GateLayers, len: usize) -> Result<DMatrix<C64>> {
    guard(len, PROPAGATION_GUARD, "dense step operator")?;
    let dim = 1 << len;
    let mut u = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let mut sv = StateVector::basis(len, k)?;
        sv.apply_layers(layers)?;
        u.set_column(k, &sv.to_dvector());
    }
    Ok(u)
}

/// Runs a gate program (1-based qubits) on a state vector.
pub fn apply_gate_list(state: &mut StateVector, program: &GateList) -> Result<()> {
    program.validate(state.len())?;
    for g in program.gates() {
        match *g.targets() {
            [q] => state.apply_one(&g.matrix(), q - 1)?,
            [a, b] => state.apply_two(&g.matrix(), a - 1, b - 1)?,
            _ => unreachable!("gates act on one or two qubits"),
        }
    }
    Ok(())
}

/// Dense unitary of a gate program on `len` qubits.
pub fn gate_list_unitary(program: &GateList, len: usize) -> Result<DMatrix<C64>> {
    guard(len, PROPAGATION_GUARD, "dense circuit operator")?;
    let dim = 1 << len;
    let mut u = DMatrix::zeros(dim, dim);
    for k in 0..dim {
        let mut sv = StateVector::basis(len, k)?;
        apply_gate_list(&mut sv, program)?;
        u.set_column(k, &sv.to_dvector());
    }
    Ok(u)
}

/// Spectral norm `‖a - b‖₂`.
pub fn operator_distance(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    (a - b).singular_values().max()
}

/// `ρ_A = Tr_B |ψ⟩⟨ψ|` for the first `k` sites.
pub fn reduced_density(state: &StateVector, k: usize) -> Result<DMatrix<C64>> {
    let psi = split(state, k)?;
    Ok(&psi * psi.adjoint())
}

/// Reduced density matrix of the last `L - k` sites.
pub fn reduced_density_complement(state: &StateVector, k: usize) -> Result<DMatrix<C64>> {
    let psi = split(state, k)?;
    Ok((psi.adjoint() * &psi).transpose())
}

/// `ψ` as a `2^k × 2^{L-k}` matrix.
fn split(state: &StateVector, k: usize) -> Result<DMatrix<C64>> {
    if k > state.len {
        return Err(Error::Range(format!("cut after {k} sites of {}", state.len)));
    }
    let cols = 1 << (state.len - k);
    // amplitudes are row-major in (A, B); nalgebra fills column-major
    Ok(DMatrix::from_row_slice(1 << k, cols, &state.amps))
}

/// `-Tr ρ ln ρ` for a Hermitian density matrix.
pub fn density_entropy(rho: &DMatrix<C64>) -> f64 {
    let p: Vec<f64> = SymmetricEigen::new(rho.clone()).eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    von_neumann_entropy(&p)
}

/// Entanglement entropy across the cut after the first `k` sites, taken on
/// whichever side is smaller.
pub fn exact_entropy(state: &StateVector, k: usize) -> Result<f64> {
    let rho = if 2 * k <= state.len { reduced_density(state, k)? } else { reduced_density_complement(state, k)? };
    Ok(density_entropy(&rho))
}

pub fn purity(rho: &DMatrix<C64>) -> f64 {
    (rho * rho).trace().re
}

impl StateVector {
    /// `U |ψ⟩` for a dense operator.
    pub fn transformed(&self, u: &DMatrix<C64>) -> Result<StateVector> {
        Self::from_dvector(self.len, &(u * self.to_dvector()))
    }
}

/// Dense system block, built directly from basis indices.
fn initial_system_vector(initial: &InitialSystem, n: usize) -> Result<StateVector> {
    let ones = |k: usize| (1usize << k) - 1;
    match initial {
        InitialSystem::Zeta => {
            let layout = ZetaLayout::new(n)?;
            let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            let mut amps = vec![ZERO; 1 << n];
            amps[0] = h;
            amps[ones(layout.ghz_sites)] = h;
            StateVector::new(n, amps)
        }
        InitialSystem::Xi => StateVector::basis(n, ones(n)),
        InitialSystem::Bits(bits) if bits.len() == n => {
            StateVector::basis(n, bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b & 1)))
        }
        InitialSystem::Bits(bits) => {
            Err(Error::Dimension(format!("{} bits given for a system of {n} sites", bits.len())))
        }
    }
}

/// Brute-force mirror of the MPS evaporation run: exact environment ground
/// state, exact propagation over each interval, entropies from reduced
/// density matrices. Truncation settings in `config` are ignored.
pub fn protocol_replay(config: &RunConfig) -> Result<EntropyTrace> {
    config.schedule.validate()?;
    let params = &config.schedule.params;
    let len = params.len();
    guard(len, REPLAY_GUARD, "protocol replay")?;
    let (env, env_energy) = exact_ground(&environment_terms(params, params.m_init))?;
    let mut psi = initial_system_vector(&config.initial, params.n_init)?.kron(&env)?;
    let metadata = TraceMetadata {
        seed: None,
        initial_entropy: exact_entropy(&psi, params.n_init)?,
        env_energy,
        max_bond: 0,
        low_confidence: false,
    };
    let mut rows = Vec::with_capacity(params.n_init);
    for event in 1..=params.n_init {
        let n = params.n_init + 1 - event;
        psi = Propagator::new(&hamiltonian_terms(params, n)?)?.propagate(&psi, config.schedule.period)?;
        let cut = match config.order {
            ProtocolOrder::MeasureThenEvaporate => n,
            ProtocolOrder::EvaporateThenMeasure => n - 1,
        };
        rows.push(TraceRow {
            t: event as f64 * config.schedule.period,
            n_sys: cut,
            m_env: len - cut,
            entropy: exact_entropy(&psi, cut)?,
            norm: 1.0,
            discarded_weight: 0.0,
        });
    }
    Ok(EntropyTrace { rows, metadata })
}
