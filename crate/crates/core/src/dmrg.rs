//! Two-site DMRG ground-state search.

use std::io::Write;

use log::{debug, info};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mpo::{grow_left, grow_right, Mpo};
use crate::mps::MpsState;
use crate::random::gaussian_complex;
use crate::tensor::{contract, svd_truncate, Tensor, TruncationPolicy, C64, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DmrgConfig {
    pub max_sweeps: usize,
    pub max_bond: usize,
    /// Relative discarded weight per two-site split.
    pub cutoff: f64,
    /// Stop once successive sweep energies differ by less than this.
    pub energy_tol: f64,
    pub lanczos_tol: f64,
    pub krylov_dim: usize,
    pub seed: u64,
}

impl Default for DmrgConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 10,
            max_bond: 100,
            cutoff: 1e-10,
            energy_tol: 1e-10,
            lanczos_tol: 1e-12,
            krylov_dim: 40,
            seed: 0x5eed,
        }
    }
}

impl DmrgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 || self.krylov_dim < 2 {
            return Err(Error::Parameter("DMRG needs at least one sweep and a Krylov space of 2".into()));
        }
        TruncationPolicy::new(self.max_bond, self.cutoff).map(|_| ())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmrgReport {
    /// `⟨H⟩` after each full (left-right-left) sweep.
    pub sweep_energies: Vec<f64>,
    pub energy: f64,
    pub max_bond: usize,
    /// Largest discarded weight of any split in the final sweep.
    pub truncation_error: f64,
    pub converged: bool,
}

/// Lowest eigenpair of the Hermitian map `apply` by Lanczos with full
/// reorthogonalization, restarted from the current Ritz vector.
pub fn lanczos(
    apply: impl Fn(&[C64]) -> Result<Vec<C64>>,
    start: &[C64],
    krylov_dim: usize,
    tol: f64,
) -> Result<(f64, Vec<C64>)> {
    let dim = start.len();
    let mut v0 = start.to_vec();
    let mut energy = f64::INFINITY;
    for _restart in 0..20 {
        let n0 = norm(&v0);
        if n0 == 0.0 {
            return Err(Error::Parameter("Lanczos start vector is zero".into()));
        }
        v0.iter_mut().for_each(|x| *x /= n0);
        let mut basis: Vec<Vec<C64>> = vec![v0.clone()];
        let (mut alpha, mut beta): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        let kmax = krylov_dim.min(dim);
        let mut residual = f64::INFINITY;
        let mut ritz = (0.0, vec![1.0]);
        for k in 0..kmax {
            let mut w = apply(&basis[k])?;
            alpha.push(dot(&basis[k], &w).re);
            // two passes of Gram-Schmidt against the whole basis
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(b, &w);
                    w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
                }
            }
            let bk = norm(&w);
            let (theta, y) = tridiagonal_ground(&alpha, &beta);
            residual = bk * y[k].abs();
            ritz = (theta, y);
            if residual < tol || bk < 1e-14 || k + 1 == kmax {
                break;
            }
            beta.push(bk);
            basis.push(w.into_iter().map(|x| x / bk).collect());
        }
        let (theta, y) = ritz;
        let mut vec = vec![ZERO; dim];
        for (b, c) in basis.iter().zip(&y) {
            vec.iter_mut().zip(b).for_each(|(x, v)| *x += v * *c);
        }
        let converged = residual < tol || (energy - theta).abs() < tol * theta.abs().max(1.0);
        energy = theta;
        v0 = vec;
        if converged || basis.len() == dim {
            break;
        }
    }
    let n = norm(&v0);
    Ok((energy, v0.into_iter().map(|x| x / n).collect()))
}

fn tridiagonal_ground(alpha: &[f64], beta: &[f64]) -> (f64, Vec<f64>) {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i == j + 1 {
            beta[j]
        } else if j == i + 1 {
            beta[i]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let m = eig.eigenvalues.imin();
    (eig.eigenvalues[m], eig.eigenvectors.column(m).iter().copied().collect())
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `H_eff θ` for the two-site block `(a, s₁, s₂, b)`.
fn apply_two_site(left: &Tensor, w1: &Tensor, w2: &Tensor, right: &Tensor, theta: &Tensor) -> Result<Tensor> {
    let t = contract(left, theta, &[(2, 0)])?; // (ā, w, s₁, s₂, b)
    let t = contract(&t, w1, &[(1, 0), (2, 3)])?; // (ā, s₂, b, w₁, s₁')
    let t = contract(&t, w2, &[(3, 0), (1, 3)])?; // (ā, b, s₁', w₂, s₂')
    contract(&t, right, &[(1, 2), (3, 1)]) // (ā, s₁', s₂', b̄)
}

fn random_product(len: usize, rng: &mut ChaCha8Rng) -> Result<MpsState> {
    let vectors: Vec<[C64; 2]> = (0..len)
        .map(|_| {
            let v = [gaussian_complex(rng), gaussian_complex(rng)];
            let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            [v[0] / n, v[1] / n]
        })
        .collect();
    MpsState::from_site_vectors(&vectors)
}

fn boundary() -> Tensor {
    Tensor::scalar(ONE).reshape(&[1, 1, 1]).expect("scalar reshapes")
}

/// Ground state of `mpo` on `len` sites, starting from a seeded random
/// product state.
pub fn ground_state(mpo: &Mpo, len: usize, config: &DmrgConfig) -> Result<(MpsState, DmrgReport)> {
    config.validate()?;
    if len != mpo.len() {
        return Err(Error::Dimension(format!("{len} sites requested for a {}-site MPO", mpo.len())));
    }
    if len < 2 {
        return Err(Error::Parameter("two-site DMRG needs at least two sites".into()));
    }
    let policy = TruncationPolicy::new(config.max_bond, config.cutoff)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut psi = random_product(len, &mut rng)?;
    psi.move_center_to(0)?;

    let mut lefts: Vec<Tensor> = vec![boundary(); len];
    let mut rights: Vec<Tensor> = vec![boundary(); len];
    for i in (1..len).rev() {
        rights[i - 1] = grow_right(&rights[i], psi.site(i), mpo.site(i))?;
    }

    let mut report = DmrgReport {
        sweep_energies: Vec::new(),
        energy: f64::NAN,
        max_bond: 1,
        truncation_error: 0.0,
        converged: false,
    };
    for sweep in 0..config.max_sweeps {
        let mut worst = 0.0f64;
        let bonds: Vec<(usize, bool)> =
            (0..len - 1).map(|i| (i, true)).chain((0..len - 1).rev().map(|i| (i, false))).collect();
        for (i, rightward) in bonds {
            let theta = contract(psi.site(i), psi.site(i + 1), &[(2, 0)])?;
            let shape = theta.shape().to_vec();
            let (l, w1, w2, r) = (&lefts[i], mpo.site(i), mpo.site(i + 1), &rights[i + 1]);
            let apply = |v: &[C64]| -> Result<Vec<C64>> {
                let t = Tensor::new(shape.clone(), v.to_vec())?;
                Ok(apply_two_site(l, w1, w2, r, &t)?.into_data())
            };
            let (_, ground) = lanczos(apply, theta.data(), config.krylov_dim, config.lanczos_tol)?;
            let svd = svd_truncate(&Tensor::new(shape, ground)?, &[0, 1], &policy)?;
            worst = worst.max(svd.discarded_weight);
            let scale = 1.0 / svd.kept_norm_sqr().sqrt();
            let s = svd.s.clone();
            if rightward {
                let sv = Tensor::from_fn(svd.vdag.shape(), |ix| svd.vdag.get(ix) * (s[ix[0]] * scale));
                psi.replace_site(i, svd.u);
                psi.replace_site(i + 1, sv);
                psi.set_center_unchecked(Some(i + 1));
                lefts[i + 1] = grow_left(&lefts[i], psi.site(i), mpo.site(i))?;
            } else {
                let us = Tensor::from_fn(svd.u.shape(), |ix| svd.u.get(ix) * (s[ix[2]] * scale));
                psi.replace_site(i, us);
                psi.replace_site(i + 1, svd.vdag);
                psi.set_center_unchecked(Some(i));
                rights[i] = grow_right(&rights[i + 1], psi.site(i + 1), mpo.site(i + 1))?;
            }
        }
        let energy = mpo.expectation(&psi)?;
        debug!("DMRG sweep {sweep}: E = {energy:.14}, χ = {}, weight = {worst:.2e}", psi.max_bond());
        let previous = report.sweep_energies.last().copied();
        report.sweep_energies.push(energy);
        report.energy = energy;
        report.truncation_error = worst;
        report.max_bond = psi.max_bond();
        if let Some(prev) = previous {
            if (prev - energy).abs() < config.energy_tol * energy.abs().max(1.0) {
                report.converged = true;
                break;
            }
        }
    }
    info!(
        "DMRG on {len} sites: E = {:.12} after {} sweeps (χ = {}, converged = {})",
        report.energy,
        report.sweep_energies.len(),
        report.max_bond,
        report.converged
    );
    Ok((psi, report))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPoint {
    pub chi: usize,
    pub energy: f64,
    /// `|E(χ) - E_ref|` against the largest `χ` in the scan, or an exact
    /// reference when one is supplied.
    pub abs_error: f64,
}

/// Ground-state energies for each bond dimension in `chis`.
pub fn convergence_scan(
    mpo: &Mpo,
    len: usize,
    chis: &[usize],
    base: &DmrgConfig,
    exact: Option<f64>,
) -> Result<Vec<ScanPoint>> {
    let energies = chis
        .iter()
        .map(|&chi| {
            let (_, report) = ground_state(mpo, len, &DmrgConfig { max_bond: chi, ..*base })?;
            Ok((chi, report.energy))
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = match exact {
        Some(e) => e,
        None => energies.iter().max_by_key(|(chi, _)| *chi).map(|&(_, e)| e).unwrap_or(f64::NAN),
    };
    Ok(energies.into_iter().map(|(chi, energy)| ScanPoint { chi, energy, abs_error: (energy - reference).abs() }).collect())
}

pub fn write_scan_csv<W: Write>(points: &[ScanPoint], mut out: W) -> Result<()> {
    writeln!(out, "chi,energy,abs_error")?;
    for p in points {
        writeln!(out, "{},{},{}", p.chi, p.energy, p.abs_error)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HamiltonianTerms, Region};
    use crate::oracle::{exact_ground, StateVector};

    fn chain(len: usize, j: f64, g: f64) -> (HamiltonianTerms, Mpo) {
        let terms = HamiltonianTerms::uniform(len, j, g, Region::Environment);
        let mpo = Mpo::from_terms(&terms).unwrap();
        (terms, mpo)
    }

    #[test]
    fn lanczos_finds_lowest_eigenvalue() {
        let n = 30;
        let h = DMatrix::from_fn(n, n, |i, j| if i == j { i as f64 * 0.5 - 3.0 } else { 0.1 / (1.0 + (i + j) as f64) });
        let apply = |v: &[C64]| -> Result<Vec<C64>> {
            Ok((0..n).map(|i| (0..n).map(|j| v[j] * h[(i, j)]).sum()).collect())
        };
        let start: Vec<C64> = (0..n).map(|i| C64::new(1.0, 0.1 * i as f64)).collect();
        let (e, v) = lanczos(apply, &start, 12, 1e-12).unwrap();
        let want = SymmetricEigen::new(h.clone()).eigenvalues.min();
        assert!((e - want).abs() < 1e-10);
        let hv = apply(&v).unwrap();
        let resid: f64 = hv.iter().zip(&v).map(|(a, b)| (a - b * e).norm_sqr()).sum::<f64>().sqrt();
        assert!(resid < 1e-6);
    }

    #[test]
    fn two_site_environment_ground_state() {
        let (terms, mpo) = chain(2, 1.0, 1.0);
        let (psi, report) = ground_state(&mpo, 2, &DmrgConfig::default()).unwrap();
        assert!((report.energy + 5f64.sqrt()).abs() < 1e-10);
        let (exact, _) = exact_ground(&terms).unwrap();
        let got = StateVector::from_mps(&psi).unwrap();
        assert!((got.fidelity(&exact) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn matches_exact_diagonalization() {
        for (len, j, g) in [(6, 1.0, 1.0), (8, 1.0, 0.5), (10, 1.0, 1.0), (7, 0.3, 1.0)] {
            let (terms, mpo) = chain(len, j, g);
            let (psi, report) = ground_state(&mpo, len, &DmrgConfig::default()).unwrap();
            let (exact, e0) = exact_ground(&terms).unwrap();
            assert!((report.energy - e0).abs() < 1e-8, "L={len}: {} vs {e0}", report.energy);
            assert!(report.converged);
            let got = StateVector::from_mps(&psi).unwrap();
            assert!(got.fidelity(&exact) > 1.0 - 1e-8);
        }
    }

    #[test]
    fn energies_settle_monotonically() {
        let (_, mpo) = chain(12, 1.0, 1.0);
        let (_, report) = ground_state(&mpo, 12, &DmrgConfig::default()).unwrap();
        for w in report.sweep_energies.windows(2) {
            assert!(w[1] <= w[0] + 1e-10);
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let (_, mpo) = chain(8, 1.0, 1.0);
        let cfg = DmrgConfig { seed: 99, ..DmrgConfig::default() };
        let a = ground_state(&mpo, 8, &cfg).unwrap();
        let b = ground_state(&mpo, 8, &cfg).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn scan_error_shrinks_with_bond_dimension() {
        let (_, mpo) = chain(16, 1.0, 1.0);
        let points = convergence_scan(&mpo, 16, &[2, 4, 8, 16], &DmrgConfig::default(), None).unwrap();
        assert_eq!(points.last().unwrap().abs_error, 0.0);
        assert!(points[0].abs_error > points[1].abs_error && points[1].abs_error > points[2].abs_error);
        let mut buf = Vec::new();
        write_scan_csv(&points, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("chi,energy,abs_error\n2,"));
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (_, mpo) = chain(4, 1.0, 1.0);
        assert!(ground_state(&mpo, 5, &DmrgConfig::default()).is_err());
        assert!(ground_state(&mpo, 4, &DmrgConfig { max_sweeps: 0, ..DmrgConfig::default() }).is_err());
    }
}
