//! Matrix-product operator for nearest-neighbour transverse-field Ising chains.
//!
//! Each site tensor has axes `(w_left, w_right, out, in)` and bond dimension 3.
//! The finite-state automaton reads
//!
//! ```text
//!        ⎡ 1   -Jᵢ Z   -gᵢ X ⎤
//!   Wᵢ = ⎢ 0     0       Z   ⎥
//!        ⎣ 0     0       1   ⎦
//! ```
//!
//! with the left boundary selecting row 0 and the right boundary column 2.

use crate::error::{Error, Result};
use crate::model::{environment_terms, pauli_x, pauli_z, HamiltonianTerms, TfimParams};
use crate::mps::MpsState;
use crate::tensor::{contract, Tensor, ONE};

pub const MPO_BOND: usize = 3;
/// Largest chain converted to a dense matrix.
pub const DENSE_MPO_GUARD: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct Mpo {
    sites: Vec<Tensor>,
}

impl Mpo {
    pub fn from_terms(terms: &HamiltonianTerms) -> Result<Self> {
        let len = terms.len;
        if len == 0 {
            return Err(Error::Parameter("an MPO needs at least one site".into()));
        }
        let mut j = vec![0.0; len];
        let mut g = vec![0.0; len];
        for b in &terms.zz_bonds {
            if b.site + 1 >= len {
                return Err(Error::Range(format!("bond at site {} on {len} sites", b.site)));
            }
            j[b.site] += b.coupling;
        }
        for f in &terms.x_fields {
            *g.get_mut(f.site).ok_or_else(|| Error::Range(format!("field at site {}", f.site)))? += f.coupling;
        }
        let (x, z) = (pauli_x(), pauli_z());
        let id = Tensor::identity(2);
        let sites = (0..len)
            .map(|i| {
                let mut w = Tensor::zeros(&[MPO_BOND, MPO_BOND, 2, 2]);
                let blocks: [(usize, usize, &Tensor, f64); 5] =
                    [(0, 0, &id, 1.0), (0, 1, &z, -j[i]), (0, 2, &x, -g[i]), (1, 2, &z, 1.0), (2, 2, &id, 1.0)];
                for (r, c, op, coeff) in blocks {
                    for o in 0..2 {
                        for n in 0..2 {
                            let v = op.get(&[o, n]) * coeff;
                            w.data_mut()[((r * MPO_BOND + c) * 2 + o) * 2 + n] = v;
                        }
                    }
                }
                let rows = if i == 0 { 0..1 } else { 0..MPO_BOND };
                let cols = if i + 1 == len { 2..3 } else { 0..MPO_BOND };
                slice_bonds(&w, rows, cols)
            })
            .collect();
        Ok(Self { sites })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site(&self, i: usize) -> &Tensor {
        &self.sites[i]
    }

    /// Dense `2^L × 2^L` operator.
    pub fn to_dense(&self) -> Result<Tensor> {
        if self.len() > DENSE_MPO_GUARD {
            return Err(Error::Guard(format!("dense MPO on {} sites", self.len())));
        }
        // acc: (w, out, in) with the w_left boundary of site 0 already summed
        let first = &self.sites[0];
        let mut acc = first.clone().reshape(&[first.shape()[1], 2, 2])?;
        let mut dim = 2;
        for w in &self.sites[1..] {
            // (w, O, I) × (w, w', o, i) → (O, I, w', o, i) → (w', O, o, I, i)
            let next = contract(&acc, w, &[(0, 0)])?.permute(&[2, 0, 3, 1, 4])?;
            dim *= 2;
            acc = next.reshape(&[w.shape()[1], dim, dim])?;
        }
        acc.reshape(&[dim, dim])
    }

    /// `⟨ψ|H|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn expectation(&self, psi: &MpsState) -> Result<f64> {
        if psi.len() != self.len() {
            return Err(Error::Dimension(format!("{}-site state, {}-site MPO", psi.len(), self.len())));
        }
        let mut env = Tensor::from_raw(vec![1, 1, 1], vec![ONE]);
        for (a, w) in psi.sites().iter().zip(&self.sites) {
            env = grow_left(&env, a, w)?;
        }
        let norm = psi.inner(psi)?.re;
        Ok(env.data()[0].re / norm)
    }
}

fn slice_bonds(w: &Tensor, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Tensor {
    let (r0, c0) = (rows.start, cols.start);
    Tensor::from_fn(&[rows.len(), cols.len(), 2, 2], |ix| w.get(&[ix[0] + r0, ix[1] + c0, ix[2], ix[3]]))
}

/// `L'(b̄, w', b) = Σ Ā(ā, s', b̄) L(ā, w, a) W(w, w', s', s) A(a, s, b)`.
pub(crate) fn grow_left(env: &Tensor, a: &Tensor, w: &Tensor) -> Result<Tensor> {
    let t1 = contract(env, a, &[(2, 0)])?; // (ā, w, s, b)
    let t2 = contract(&t1, w, &[(1, 0), (2, 3)])?; // (ā, b, w', s')
    contract(&a.conj(), &t2, &[(0, 0), (1, 3)])?.permute(&[0, 2, 1]) // (b̄, w', b)
}

/// `R'(ā, w, a) = Σ B̄(ā, s', b̄) R(b̄, w', b) W(w, w', s', s) B(a, s, b)`.
pub(crate) fn grow_right(env: &Tensor, b: &Tensor, w: &Tensor) -> Result<Tensor> {
    let t1 = contract(b, env, &[(2, 2)])?; // (a, s, b̄, w')
    let t2 = contract(&t1, w, &[(3, 1), (1, 3)])?; // (a, b̄, w, s')
    contract(&b.conj(), &t2, &[(1, 3), (2, 1)])?.permute(&[0, 2, 1]) // (ā, w, a)
}

/// MPO of the environment Hamiltonian `-J_env Σ ZZ - g_env Σ X` on the
/// `L - n_sys` environment sites.
pub fn build_env_mpo(params: &TfimParams, n_sys: usize) -> Result<Mpo> {
    let len = params.len();
    if n_sys > len {
        return Err(Error::Range(format!("system size {n_sys} exceeds chain length {len}")));
    }
    let m = len - n_sys;
    if m < 2 {
        return Err(Error::Parameter(format!("environment of {m} site(s) is too small for DMRG")));
    }
    Mpo::from_terms(&environment_terms(params, m))
}
