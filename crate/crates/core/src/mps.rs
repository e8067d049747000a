//! Open-boundary matrix product states of spin-½ chains.
//!
//! Site tensors are rank-3 with axes `(left bond, physical, right bond)`; the
//! outer bonds have extent 1. Bond `b` sits between sites `b` and `b + 1`
//! (0-based), so a chain of length `L` has bonds `0..L-1`.
//!
//! The state tracks an orthogonality center when one is known: every site left
//! of it is a left isometry and every site right of it a right isometry. Gate
//! application and Schmidt decompositions move the center as needed.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::tensor::{contract, lq_split, qr_split, svd_truncate, Tensor, TruncationPolicy, C64, ONE, ZERO};

/// Local Hilbert space dimension.
pub const PHYS: usize = 2;

/// Largest chain that may be expanded into a dense statevector.
pub const STATEVECTOR_LIMIT: usize = 20;

/// Tolerance on `G†G - 1` for gates accepted by the MPS.
pub const UNITARITY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct MpsState {
    sites: Vec<Tensor>,
    center: Option<usize>,
}

/// Eigenvalues of a reduced density matrix at one cut.
#[derive(Clone, Debug, PartialEq)]
pub struct SchmidtSpectrum {
    /// Non-increasing, summing to one.
    pub lambdas: Vec<f64>,
    /// Norm of the state the spectrum was taken from; 1 for normalized input.
    pub norm: f64,
}

impl SchmidtSpectrum {
    pub fn entropy(&self) -> f64 {
        von_neumann_entropy(&self.lambdas)
    }
}

/// `-Σ λ ln λ` in nats, with `0 ln 0 = 0`.
pub fn von_neumann_entropy(lambdas: &[f64]) -> f64 {
    lambdas
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.ln())
        .sum::<f64>()
        .max(0.0)
        .abs()
}

/// Result of one two-site gate application.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateOutcome {
    /// Relative weight dropped by truncation.
    pub discarded_weight: f64,
    /// Norm of the truncated state before it was rescaled to one.
    pub norm_before: f64,
}

fn check_site(t: &Tensor) -> Result<()> {
    if t.rank() != 3 || t.shape()[1] != PHYS {
        return Err(Error::Shape(format!(
            "site tensor must be (left, {PHYS}, right), got {:?}",
            t.shape()
        )));
    }
    Ok(())
}

fn check_unitary(gate: &Tensor) -> Result<()> {
    let deviation = gate.unitarity_deviation()?;
    if deviation > UNITARITY_TOL {
        return Err(Error::NotUnitary { deviation });
    }
    Ok(())
}

impl MpsState {
    /// Validates bond agreement and boundary extents.
    pub fn from_tensors(sites: Vec<Tensor>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Shape("an MPS needs at least one site".into()));
        }
        for t in &sites {
            check_site(t)?;
        }
        if sites[0].shape()[0] != 1 || sites[sites.len() - 1].shape()[2] != 1 {
            return Err(Error::Shape("boundary bonds must have extent 1".into()));
        }
        for (k, pair) in sites.windows(2).enumerate() {
            if pair[0].shape()[2] != pair[1].shape()[0] {
                return Err(Error::Dimension(format!(
                    "bond {k}: {} vs {}",
                    pair[0].shape()[2],
                    pair[1].shape()[0]
                )));
            }
        }
        Ok(Self { sites, center: None })
    }

    /// Computational basis product state; `bits[i]` is the σᶻ eigenvalue label of site `i`.
    pub fn from_product(bits: &[u8]) -> Result<Self> {
        let vectors = bits
            .iter()
            .map(|&b| match b {
                0 => Ok([ONE, ZERO]),
                1 => Ok([ZERO, ONE]),
                other => Err(Error::Parameter(format!("basis label {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_site_vectors(&vectors)
    }

    /// Product state with the given (normalized) single-site vectors.
    pub fn from_site_vectors(vectors: &[[C64; 2]]) -> Result<Self> {
        let sites = vectors
            .iter()
            .map(|v| Tensor::new(vec![1, PHYS, 1], v.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let mut state = Self::from_tensors(sites)?;
        state.center = Some(0);
        if vectors.iter().any(|v| (v[0].norm_sqr() + v[1].norm_sqr() - 1.0).abs() > 1e-12) {
            state.center = None;
        }
        Ok(state)
    }

    /// `(|0…0⟩ + |1…1⟩)/√2` on `n` sites; for `n = 1` this is `|+⟩`.
    pub fn ghz(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("GHZ block needs at least one site".into()));
        }
        let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        if n == 1 {
            return Self::from_site_vectors(&[[h, h]]);
        }
        let mut sites = Vec::with_capacity(n);
        // first site carries the amplitude and opens the two branches
        sites.push(Tensor::from_fn(&[1, 2, 2], |ix| if ix[1] == ix[2] { h } else { ZERO }));
        for _ in 1..n - 1 {
            sites.push(Tensor::from_fn(&[2, 2, 2], |ix| {
                if ix[0] == ix[1] && ix[1] == ix[2] { ONE } else { ZERO }
            }));
        }
        sites.push(Tensor::from_fn(&[2, 2, 1], |ix| if ix[0] == ix[1] { ONE } else { ZERO }));
        let mut state = Self::from_tensors(sites)?;
        state.center = Some(0);
        Ok(state)
    }

    /// Splits a dense statevector (site 0 most significant) into an MPS by
    /// successive SVDs. The orthogonality center ends on the last site.
    pub fn from_statevector(amplitudes: &[C64], policy: &TruncationPolicy) -> Result<Self> {
        let dim = amplitudes.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::Shape(format!("statevector length {dim} is not 2^L with L ≥ 1")));
        }
        let len = dim.trailing_zeros() as usize;
        let mut rest = Tensor::new(vec![1, dim], amplitudes.to_vec())?;
        let mut sites = Vec::with_capacity(len);
        for _ in 0..len - 1 {
            let (bond, cols) = (rest.shape()[0], rest.shape()[1]);
            let split = rest.reshape(&[bond, PHYS, cols / PHYS])?;
            let svd = svd_truncate(&split, &[0, 1], policy)?;
            let kept = svd.s.len();
            sites.push(svd.u);
            let sv = Tensor::from_fn(svd.vdag.shape(), |ix| svd.vdag.get(ix) * svd.s[ix[0]]);
            rest = sv.reshape(&[kept, cols / PHYS])?;
        }
        let bond = rest.shape()[0];
        sites.push(rest.reshape(&[bond, PHYS, 1])?);
        let mut state = Self::from_tensors(sites)?;
        state.center = Some(len - 1);
        Ok(state)
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

    pub fn sites(&self) -> &[Tensor] {
        &self.sites
    }

    pub fn ortho_center(&self) -> Option<usize> {
        self.center
    }

    /// Extents of the `L - 1` internal bonds.
    pub fn bond_dims(&self) -> Vec<usize> {
        self.sites[..self.sites.len() - 1].iter().map(|t| t.shape()[2]).collect()
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub(crate) fn replace_site(&mut self, i: usize, t: Tensor) {
        self.sites[i] = t;
        self.center = None;
    }

    pub(crate) fn set_center_unchecked(&mut self, center: Option<usize>) {
        self.center = center;
    }

    /// Tensor product `self ⊗ other` joined by a bond of extent 1.
    pub fn concat(&self, other: &MpsState) -> MpsState {
        let sites = self.sites.iter().chain(&other.sites).cloned().collect();
        MpsState { sites, center: None }
    }

    fn shift_center_right(&mut self, c: usize) -> Result<()> {
        let (q, r) = qr_split(&self.sites[c], &[0, 1])?;
        self.sites[c] = q;
        self.sites[c + 1] = contract(&r, &self.sites[c + 1], &[(1, 0)])?;
        Ok(())
    }

    fn shift_center_left(&mut self, c: usize) -> Result<()> {
        let (l, q) = lq_split(&self.sites[c], &[0])?;
        self.sites[c] = q;
        self.sites[c - 1] = contract(&self.sites[c - 1], &l, &[(2, 0)])?;
        Ok(())
    }

    /// Brings the state into mixed-canonical form centered at `k`.
    pub fn move_center_to(&mut self, k: usize) -> Result<()> {
        if k >= self.len() {
            return Err(Error::Range(format!("site {k} outside chain of {}", self.len())));
        }
        match self.center {
            Some(c) if c <= k => {
                for i in c..k {
                    self.shift_center_right(i)?;
                }
            }
            Some(c) => {
                for i in (k + 1..=c).rev() {
                    self.shift_center_left(i)?;
                }
            }
            None => {
                for i in 0..k {
                    self.shift_center_right(i)?;
                }
                for i in (k + 1..self.len()).rev() {
                    self.shift_center_left(i)?;
                }
            }
        }
        self.center = Some(k);
        Ok(())
    }

    /// Applies a 2×2 unitary to the physical index of `site`.
    pub fn apply_single_site_gate(&mut self, gate: &Tensor, site: usize) -> Result<()> {
        if gate.shape() != [PHYS, PHYS] {
            return Err(Error::Shape(format!("single-site gate must be 2x2, got {:?}", gate.shape())));
        }
        if site >= self.len() {
            return Err(Error::Range(format!("site {site} outside chain of {}", self.len())));
        }
        check_unitary(gate)?;
        let updated = contract(gate, &self.sites[site], &[(1, 1)])?;
        self.sites[site] = updated.permute(&[1, 0, 2])?;
        Ok(())
    }

    /// Applies a two-site unitary on `(site, site + 1)`, truncates the new
    /// bond with `policy` and rescales the state to unit norm. The gate is
    /// either 4×4 or 2×2×2×2 with axes `(out₁, out₂, in₁, in₂)`. The
    /// orthogonality center ends at `site + 1`.
    pub fn apply_two_site_gate(
        &mut self,
        gate: &Tensor,
        site: usize,
        policy: &TruncationPolicy,
    ) -> Result<GateOutcome> {
        let gate = match gate.shape() {
            [4, 4] => {
                check_unitary(gate)?;
                gate.clone().reshape(&[PHYS; 4])?
            }
            [2, 2, 2, 2] => {
                check_unitary(&gate.clone().reshape(&[4, 4])?)?;
                gate.clone()
            }
            other => return Err(Error::Shape(format!("two-site gate must be 4x4, got {other:?}"))),
        };
        if site + 1 >= self.len() {
            return Err(Error::Range(format!(
                "bond ({site}, {}) outside chain of {}",
                site + 1,
                self.len()
            )));
        }
        match self.center {
            Some(c) if c == site || c == site + 1 => {}
            Some(c) if c > site + 1 => self.move_center_to(site + 1)?,
            _ => self.move_center_to(site)?,
        }

        let theta = contract(&self.sites[site], &self.sites[site + 1], &[(2, 0)])?;
        let evolved = contract(&gate, &theta, &[(2, 1), (3, 2)])?.permute(&[2, 0, 1, 3])?;
        let svd = svd_truncate(&evolved, &[0, 1], policy)?;
        let kept = svd.kept_norm_sqr().sqrt();
        let scale = if kept > 0.0 { 1.0 / kept } else { 1.0 };
        self.sites[site] = svd.u;
        self.sites[site + 1] =
            Tensor::from_fn(svd.vdag.shape(), |ix| svd.vdag.get(ix) * (svd.s[ix[0]] * scale));
        self.center = Some(site + 1);
        Ok(GateOutcome {
            discarded_weight: svd.discarded_weight,
            norm_before: kept,
        })
    }

    /// Schmidt spectrum across bond `bond` (between sites `bond` and `bond + 1`).
    pub fn schmidt_at(&mut self, bond: usize) -> Result<SchmidtSpectrum> {
        if bond + 1 >= self.len() {
            return Err(Error::Range(format!("bond {bond} outside chain of {}", self.len())));
        }
        self.move_center_to(bond)?;
        let svd = svd_truncate(&self.sites[bond], &[0, 1], &TruncationPolicy::exact())?;
        let total = svd.kept_norm_sqr();
        if total == 0.0 {
            return Err(Error::Range("zero state has no Schmidt spectrum".into()));
        }
        Ok(SchmidtSpectrum {
            lambdas: svd.s.iter().map(|s| s * s / total).collect(),
            norm: total.sqrt(),
        })
    }

    /// Von Neumann entropy (nats) across `bond`.
    pub fn entropy_at(&mut self, bond: usize) -> Result<f64> {
        Ok(self.schmidt_at(bond)?.entropy())
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &MpsState) -> Result<C64> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!("lengths {} and {}", self.len(), other.len())));
        }
        let mut env = Tensor::from_raw(vec![1, 1], vec![ONE]);
        for (a, b) in self.sites.iter().zip(&other.sites) {
            let half = contract(&env, b, &[(1, 0)])?;
            env = contract(&a.conj(), &half, &[(0, 0), (1, 1)])?;
        }
        Ok(env.data()[0])
    }

    pub fn norm(&self) -> f64 {
        match self.center {
            Some(c) => self.sites[c].norm(),
            None => self.inner(self).map(|z| z.re.max(0.0).sqrt()).unwrap_or(0.0),
        }
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::Range("cannot normalize the zero state".into()));
        }
        let c = match self.center {
            Some(c) => c,
            None => {
                self.move_center_to(0)?;
                0
            }
        };
        self.sites[c].scale_in_place(C64::new(1.0 / n, 0.0));
        Ok(())
    }

    /// `⟨ψ|O_site|ψ⟩ / ⟨ψ|ψ⟩` for a 2×2 operator.
    pub fn expect_single_site(&self, op: &Tensor, site: usize) -> Result<C64> {
        let mut applied = self.clone();
        let updated = contract(op, &applied.sites[site], &[(1, 1)])?.permute(&[1, 0, 2])?;
        applied.sites[site] = updated;
        applied.center = None;
        Ok(self.inner(&applied)? / self.inner(self)?.re)
    }

    /// Dense amplitudes, site 0 as the most significant bit.
    pub fn to_statevector(&self) -> Result<Tensor> {
        if self.len() > STATEVECTOR_LIMIT {
            return Err(Error::Guard(format!(
                "statevector of {} sites exceeds the {STATEVECTOR_LIMIT}-site limit",
                self.len()
            )));
        }
        let mut acc = self.sites[0].clone().reshape(&[PHYS, self.sites[0].shape()[2]])?;
        for t in &self.sites[1..] {
            let merged = contract(&acc, t, &[(1, 0)])?;
            let (rows, right) = (acc.shape()[0] * PHYS, t.shape()[2]);
            acc = merged.reshape(&[rows, right])?;
        }
        let dim = acc.shape()[0];
        acc.reshape(&[dim])
    }

    /// Writes a plain-text dump: a `length` line, then per site a
    /// `site <i> <left> 2 <right>` header followed by one `re im` line per
    /// entry in row-major order.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# mps snapshot")?;
        writeln!(out, "length {}", self.len())?;
        for (i, t) in self.sites.iter().enumerate() {
            let s = t.shape();
            writeln!(out, "site {i} {} {} {}", s[0], s[1], s[2])?;
            for z in t.data() {
                writeln!(out, "{:e} {:e}", z.re, z.im)?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l))
            .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty() || s.starts_with('#')));
        let parse_err = |line: usize, message: &str| Error::Parse { line, message: message.into() };
        let (n, header) = lines.next().ok_or_else(|| parse_err(0, "empty snapshot"))?;
        let header = header?;
        let len: usize = header
            .strip_prefix("length ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| parse_err(n, "expected `length <L>`"))?;
        let mut sites = Vec::with_capacity(len);
        for i in 0..len {
            let (n, head) = lines.next().ok_or_else(|| parse_err(0, "truncated snapshot"))?;
            let head = head?;
            let fields: Vec<usize> = head
                .split_whitespace()
                .skip(1)
                .map(|f| f.parse().map_err(|_| parse_err(n, "bad site header")))
                .collect::<Result<_>>()?;
            if !head.starts_with("site ") || fields.len() != 4 || fields[0] != i {
                return Err(parse_err(n, "expected `site <i> <left> 2 <right>`"));
            }
            let shape = fields[1..].to_vec();
            let count: usize = shape.iter().product();
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, entry) = lines.next().ok_or_else(|| parse_err(0, "truncated snapshot"))?;
                let entry = entry?;
                let mut parts = entry.split_whitespace().map(str::parse::<f64>);
                match (parts.next(), parts.next(), parts.next()) {
                    (Some(Ok(re)), Some(Ok(im)), None) => data.push(C64::new(re, im)),
                    _ => return Err(parse_err(n, "expected `<re> <im>`")),
                }
            }
            sites.push(Tensor::new(shape, data)?);
        }
        Self::from_tensors(sites)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_state_vector, random_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn pauli_x() -> Tensor {
        Tensor::from_real(&[2, 2], &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    fn pauli_z() -> Tensor {
        Tensor::from_real(&[2, 2], &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    fn rx(phi: f64) -> Tensor {
        let (c, s) = ((phi / 2.0).cos(), (phi / 2.0).sin());
        Tensor::new(vec![2, 2], vec![C64::new(c, 0.0), C64::new(0.0, -s), C64::new(0.0, -s), C64::new(c, 0.0)])
            .unwrap()
    }

    fn bell_circuit() -> Tensor {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // CNOT · (H ⊗ I), rows/cols indexed by (q1 q2)
        let hi = Tensor::from_real(
            &[4, 4],
            &[h, 0., h, 0., 0., h, 0., h, h, 0., -h, 0., 0., h, 0., -h],
        )
        .unwrap();
        let cnot = Tensor::from_real(
            &[4, 4],
            &[1., 0., 0., 0., 0., 1., 0., 0., 0., 0., 0., 1., 0., 0., 1., 0.],
        )
        .unwrap();
        cnot.matmul(&hi).unwrap()
    }

    /// Dense reference: apply a 4x4 gate on (site, site+1) to a statevector.
    fn apply_dense(psi: &[C64], gate: &Tensor, site: usize, len: usize) -> Vec<C64> {
        let mut out = vec![ZERO; psi.len()];
        let shift = len - site - 2;
        for (idx, amp) in psi.iter().enumerate() {
            let pair = (idx >> shift) & 3;
            for o in 0..4 {
                let target = (idx & !(3 << shift)) | (o << shift);
                out[target] += gate.get(&[o, pair]) * amp;
            }
        }
        out
    }

    fn dense_entropy(psi: &[C64], left: usize, len: usize) -> f64 {
        let rows = 1 << left;
        let cols = 1 << (len - left);
        let m = nalgebra::DMatrix::from_row_slice(rows, cols, psi);
        let rho = &m * m.adjoint();
        let eig = nalgebra::SymmetricEigen::new(rho);
        von_neumann_entropy(&eig.eigenvalues.iter().map(|&x| x.max(0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn product_state_has_no_entanglement() {
        let mut s = MpsState::from_product(&[0, 0, 0]).unwrap();
        assert_eq!(s.bond_dims(), vec![1, 1]);
        assert!((s.norm() - 1.0).abs() < 1e-15);
        for b in 0..2 {
            assert_eq!(s.schmidt_at(b).unwrap().lambdas, vec![1.0]);
            assert_eq!(s.entropy_at(b).unwrap(), 0.0);
        }
        assert!(MpsState::from_product(&[]).is_err());
        assert!(MpsState::from_product(&[2]).is_err());
    }

    #[test]
    fn all_ones_state() {
        let s = MpsState::from_product(&[1; 4]).unwrap();
        let psi = s.to_statevector().unwrap();
        assert_eq!(psi.data()[15], ONE);
        assert!(psi.data()[..15].iter().all(|z| *z == ZERO));
    }

    #[test]
    fn sigma_z_expectations() {
        let s = MpsState::from_product(&[0, 1]).unwrap();
        assert!((s.expect_single_site(&pauli_z(), 0).unwrap() - ONE).norm() < 1e-15);
        assert!((s.expect_single_site(&pauli_z(), 1).unwrap() + ONE).norm() < 1e-15);
    }

    #[test]
    fn product_round_trip_is_basis_vector() {
        let bits = [1, 0, 1, 1, 0];
        let psi = MpsState::from_product(&bits).unwrap().to_statevector().unwrap();
        let index = bits.iter().fold(0usize, |acc, &b| acc * 2 + b as usize);
        for (i, z) in psi.data().iter().enumerate() {
            assert_eq!(*z, if i == index { ONE } else { ZERO });
        }
    }

    #[test]
    fn bell_pair_from_circuit() {
        let mut s = MpsState::from_product(&[0, 0]).unwrap();
        let out = s.apply_two_site_gate(&bell_circuit(), 0, &TruncationPolicy::default()).unwrap();
        assert_eq!(out.discarded_weight, 0.0);
        assert_eq!(s.bond_dims(), vec![2]);
        let spectrum = s.schmidt_at(0).unwrap();
        assert!(spectrum.lambdas.iter().all(|l| (l - 0.5).abs() < 1e-14));
        assert!((spectrum.entropy() - LN2).abs() < 1e-14);
    }

    #[test]
    fn identity_gate_changes_nothing() {
        let mut s = MpsState::ghz(3).unwrap();
        let before = s.to_statevector().unwrap();
        let out = s.apply_two_site_gate(&Tensor::identity(4), 1, &TruncationPolicy::default()).unwrap();
        assert_eq!(out.discarded_weight, 0.0);
        assert!(s.to_statevector().unwrap().max_abs_diff(&before).unwrap() < 1e-14);
    }

    #[test]
    fn non_unitary_gate_rejected() {
        let mut s = MpsState::from_product(&[0, 0]).unwrap();
        let g = Tensor::identity(4).scale(C64::new(1.1, 0.0));
        assert!(matches!(
            s.apply_two_site_gate(&g, 0, &TruncationPolicy::default()),
            Err(Error::NotUnitary { .. })
        ));
        let g = Tensor::identity(2).scale(C64::new(0.5, 0.0));
        assert!(matches!(s.apply_single_site_gate(&g, 0), Err(Error::NotUnitary { .. })));
        assert!(s.apply_two_site_gate(&Tensor::identity(4), 1, &TruncationPolicy::default()).is_err());
    }

    #[test]
    fn random_gate_matches_dense_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let psi = random_state_vector(3, &mut rng);
        let mut s = MpsState::from_statevector(psi.data(), &TruncationPolicy::exact()).unwrap();
        let mut dense = psi.data().to_vec();
        for site in [0, 1, 0] {
            let u = random_unitary(4, &mut rng);
            s.apply_two_site_gate(&u, site, &TruncationPolicy::exact()).unwrap();
            dense = apply_dense(&dense, &u, site, 3);
        }
        let got = s.to_statevector().unwrap();
        let want = Tensor::new(vec![8], dense).unwrap();
        assert!(got.max_abs_diff(&want).unwrap() < 1e-10);
    }

    #[test]
    fn single_site_gates() {
        let mut s = MpsState::from_product(&[0]).unwrap();
        s.apply_single_site_gate(&pauli_x(), 0).unwrap();
        assert_eq!(s.to_statevector().unwrap().data(), &[ZERO, ONE]);

        let mut g = MpsState::ghz(3).unwrap();
        let before = g.to_statevector().unwrap();
        g.apply_single_site_gate(&rx(0.7), 1).unwrap();
        g.apply_single_site_gate(&rx(-0.7), 1).unwrap();
        assert!(g.to_statevector().unwrap().max_abs_diff(&before).unwrap() < 1e-12);
        assert_eq!(g.bond_dims(), vec![2, 2]);
    }

    #[test]
    fn rx_matches_direct_exponential() {
        // exp(+i·g·τ/2·σx) with g = 3, τ = 0.1 applied to |0⟩
        let a: f64 = 3.0 * 0.1 / 2.0;
        let want = [C64::new(a.cos(), 0.0), C64::new(0.0, a.sin())];
        let mut s = MpsState::from_product(&[0]).unwrap();
        s.apply_single_site_gate(&rx(-0.3), 0).unwrap();
        let got = s.to_statevector().unwrap();
        assert!((got.data()[0] - want[0]).norm() < 1e-12);
        assert!((got.data()[1] - want[1]).norm() < 1e-12);
    }

    #[test]
    fn ghz_spectrum_and_statevector() {
        let mut s = MpsState::ghz(4).unwrap();
        let spectrum = s.schmidt_at(1).unwrap();
        assert_eq!(spectrum.lambdas.len(), 2);
        assert!(spectrum.lambdas.iter().all(|l| (l - 0.5).abs() < 1e-14));

        let psi = MpsState::ghz(3).unwrap().to_statevector().unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (i, z) in psi.data().iter().enumerate() {
            let want = if i == 0 || i == 7 { h } else { 0.0 };
            assert!((z - C64::new(want, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn entropy_values() {
        assert_eq!(von_neumann_entropy(&[1.0]), 0.0);
        assert!((von_neumann_entropy(&[0.5, 0.5]) - LN2).abs() < 1e-15);
        assert!((von_neumann_entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(von_neumann_entropy(&[1.0, 0.0]), 0.0);
    }

    #[test]
    fn inner_products() {
        let mut bell = MpsState::from_product(&[0, 0]).unwrap();
        bell.apply_two_site_gate(&bell_circuit(), 0, &TruncationPolicy::default()).unwrap();
        assert!((bell.inner(&bell).unwrap() - ONE).norm() < 1e-14);
        let a = MpsState::from_product(&[0, 0]).unwrap();
        let b = MpsState::from_product(&[1, 1]).unwrap();
        assert_eq!(a.inner(&b).unwrap(), ZERO);
        assert!((MpsState::from_product(&[0; 4]).unwrap().norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn schmidt_matches_dense_reduced_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = MpsState::from_product(&[0; 6]).unwrap();
        for layer in 0..4 {
            for site in (layer % 2..5).step_by(2) {
                s.apply_two_site_gate(&random_unitary(4, &mut rng), site, &TruncationPolicy::exact())
                    .unwrap();
            }
        }
        let psi = s.to_statevector().unwrap();
        for bond in 0..5 {
            let spectrum = s.schmidt_at(bond).unwrap();
            let rows = 1 << (bond + 1);
            let m = nalgebra::DMatrix::from_row_slice(rows, 64 / rows, psi.data());
            let mut eig: Vec<f64> =
                nalgebra::SymmetricEigen::new(&m * m.adjoint()).eigenvalues.iter().copied().collect();
            eig.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (k, l) in spectrum.lambdas.iter().enumerate() {
                assert!((l - eig[k]).abs() < 1e-8);
            }
            assert!((spectrum.lambdas.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn unnormalized_state_reports_norm() {
        let mut s = MpsState::ghz(3).unwrap();
        let mut t = s.site(0).clone();
        t.scale_in_place(C64::new(2.0, 0.0));
        s.replace_site(0, t);
        let spectrum = s.schmidt_at(0).unwrap();
        assert!((spectrum.norm - 2.0).abs() < 1e-12);
        assert!((spectrum.lambdas.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        s.normalize().unwrap();
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_both_sides_and_dimension_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let psi = random_state_vector(7, &mut rng);
        let mut s = MpsState::from_statevector(psi.data(), &TruncationPolicy::exact()).unwrap();
        for bond in 0..6 {
            let k = bond + 1;
            let mps = s.entropy_at(bond).unwrap();
            let left = dense_entropy(psi.data(), k, 7);
            assert!((mps - left).abs() < 1e-8);
            assert!(mps <= (k.min(7 - k) as f64) * LN2 + 1e-12);
        }
    }

    #[test]
    fn concat_is_tensor_product() {
        let a = MpsState::ghz(2).unwrap();
        let b = MpsState::from_product(&[1]).unwrap();
        let mut joined = a.concat(&b);
        assert_eq!(joined.len(), 3);
        assert_eq!(joined.entropy_at(1).unwrap(), 0.0);
        assert!((joined.norm() - 1.0).abs() < 1e-14);
        let psi = joined.to_statevector().unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((psi.data()[1].re - h).abs() < 1e-15 && (psi.data()[7].re - h).abs() < 1e-15);
    }

    #[test]
    fn statevector_guard() {
        let s = MpsState::from_product(&[0; STATEVECTOR_LIMIT + 1]).unwrap();
        assert!(matches!(s.to_statevector(), Err(Error::Guard(_))));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = random_state_vector(4, &mut rng);
        let s = MpsState::from_statevector(psi.data(), &TruncationPolicy::exact()).unwrap();
        let mut buf = Vec::new();
        s.write_snapshot(&mut buf).unwrap();
        let back = MpsState::read_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.sites(), s.sites());
        assert!(matches!(
            MpsState::read_snapshot("length 1\nsite 0 1 2 1\n1 0\n".as_bytes()),
            Err(Error::Parse { line: 4, .. }) | Err(Error::Parse { line: 0, .. })
        ));
    }
}
