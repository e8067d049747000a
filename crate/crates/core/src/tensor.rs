//! Dense complex tensors and the factorizations the MPS code is built on.
//!
//! Entries are stored row-major over `shape`: the last axis varies fastest.
//! This is the only linearization used anywhere in the crate, so a
//! statevector obtained by contracting an MPS indexes basis states with
//! site 0 as the most significant bit.

use std::borrow::Cow;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<C64>,
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut out = vec![1; shape.len()];
    for ax in (0..shape.len().saturating_sub(1)).rev() {
        out[ax] = out[ax + 1] * shape[ax + 1];
    }
    out
}

impl Tensor {
    /// Builds a tensor, checking extents, length and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<C64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Shape(format!("zero extent in {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Range("tensor has non-finite entries".into()));
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_raw(shape: Vec<usize>, data: Vec<C64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::from_raw(shape.to_vec(), vec![ZERO; len])
    }

    pub fn scalar(z: C64) -> Self {
        Self::from_raw(Vec::new(), vec![z])
    }

    pub fn from_real(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::new(
            shape.to_vec(),
            values.iter().map(|&x| C64::new(x, 0.0)).collect(),
        )
    }

    /// Fills a tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> C64) -> Self {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for ax in (0..shape.len()).rev() {
                idx[ax] += 1;
                if idx[ax] < shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self::from_raw(shape.to_vec(), data)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(&[n, n], |ix| if ix[0] == ix[1] { ONE } else { ZERO })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        let off: usize = idx
            .iter()
            .zip(strides(&self.shape))
            .map(|(i, s)| i * s)
            .sum();
        self.data[off]
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.contains(&0) {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Reorders axes: axis `k` of the result is axis `perm[k]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        self.permute_cow(perm).map(Cow::into_owned)
    }

    fn permute_cow(&self, perm: &[usize]) -> Result<Cow<'_, Self>> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Shape(format!(
                "{perm:?} is not a permutation of {rank} axes"
            )));
        }
        if perm.iter().enumerate().all(|(i, &p)| i == p) {
            return Ok(Cow::Borrowed(self));
        }
        let old = strides(&self.shape);
        let shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let src: Vec<usize> = perm.iter().map(|&p| old[p]).collect();
        let last = rank - 1;
        let (inner, inner_stride) = (shape[last], src[last]);
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; rank];
        let mut off = 0usize;
        'outer: loop {
            data.extend((0..inner).map(|j| self.data[off + j * inner_stride]));
            let mut ax = last;
            loop {
                if ax == 0 {
                    break 'outer;
                }
                ax -= 1;
                idx[ax] += 1;
                off += src[ax];
                if idx[ax] < shape[ax] {
                    break;
                }
                off -= src[ax] * shape[ax];
                idx[ax] = 0;
            }
        }
        Ok(Cow::Owned(Self::from_raw(shape, data)))
    }

    pub fn conj(&self) -> Self {
        Self::from_raw(self.shape.clone(), self.data.iter().map(|z| z.conj()).collect())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::from_raw(self.shape.clone(), self.data.iter().map(|z| z * factor).collect())
    }

    pub(crate) fn scale_in_place(&mut self, factor: C64) {
        self.data.iter_mut().for_each(|z| *z *= factor);
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius distance to a tensor of the same shape.
    pub fn distance(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    fn matrix_dims(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [m, n] => Ok((m, n)),
            _ => Err(Error::Shape(format!("expected a matrix, got {:?}", self.shape))),
        }
    }

    /// Conjugate transpose of a matrix.
    pub fn dagger(&self) -> Result<Self> {
        self.matrix_dims()?;
        Ok(self.permute(&[1, 0])?.conj())
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        self.matrix_dims()?;
        other.matrix_dims()?;
        contract(self, other, &[(1, 0)])
    }

    /// Largest entrywise deviation of `G†G` from the identity.
    pub fn unitarity_deviation(&self) -> Result<f64> {
        let (m, n) = self.matrix_dims()?;
        if m != n {
            return Err(Error::Shape(format!("non-square gate {m}x{n}")));
        }
        let gram = contract(&self.conj(), self, &[(0, 0)])?;
        Ok(gram.max_abs_diff(&Tensor::identity(n))?)
    }
}

/// Row-major complex matrix product `A (m×k) · B (k×n)`.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[C64], b: &[C64]) -> Vec<C64> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let mut c = vec![ZERO; m * n];
    if m == 0 || k == 0 || n == 0 {
        return c;
    }
    let lhs = MatRef::from_row_major_slice(a, m, k);
    let rhs = MatRef::from_row_major_slice(b, k, n);
    let dst = MatMut::from_row_major_slice_mut(&mut c, m, n);
    matmul(dst, Accum::Replace, lhs, rhs, ONE, Par::Seq);
    c
}

fn to_row_major(mat: MatRef<'_, C64>) -> Vec<C64> {
    (0..mat.nrows()).flat_map(|i| (0..mat.ncols()).map(move |j| mat[(i, j)])).collect()
}

/// Sums over paired axes. Result axes: unpaired axes of `a` in order, then
/// unpaired axes of `b` in order.
pub fn contract(a: &Tensor, b: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor> {
    let mut used_a = vec![false; a.rank()];
    let mut used_b = vec![false; b.rank()];
    for &(i, j) in pairs {
        if i >= a.rank() || j >= b.rank() {
            return Err(Error::Dimension(format!(
                "axis pair ({i}, {j}) out of range for ranks {} and {}",
                a.rank(),
                b.rank()
            )));
        }
        if std::mem::replace(&mut used_a[i], true) || std::mem::replace(&mut used_b[j], true) {
            return Err(Error::Dimension(format!("axis pair ({i}, {j}) repeats an axis")));
        }
        if a.shape[i] != b.shape[j] {
            return Err(Error::Dimension(format!(
                "extent {} on axis {i} does not match extent {} on axis {j}",
                a.shape[i], b.shape[j]
            )));
        }
    }
    let free_a: Vec<usize> = (0..a.rank()).filter(|&i| !used_a[i]).collect();
    let free_b: Vec<usize> = (0..b.rank()).filter(|&j| !used_b[j]).collect();

    let perm_a: Vec<usize> = free_a.iter().copied().chain(pairs.iter().map(|p| p.0)).collect();
    let perm_b: Vec<usize> = pairs.iter().map(|p| p.1).chain(free_b.iter().copied()).collect();
    let ap = a.permute_cow(&perm_a)?;
    let bp = b.permute_cow(&perm_b)?;

    let m: usize = free_a.iter().map(|&i| a.shape[i]).product();
    let k: usize = pairs.iter().map(|p| a.shape[p.0]).product();
    let n: usize = free_b.iter().map(|&j| b.shape[j]).product();
    let shape: Vec<usize> = free_a
        .iter()
        .map(|&i| a.shape[i])
        .chain(free_b.iter().map(|&j| b.shape[j]))
        .collect();
    Ok(Tensor::from_raw(shape, gemm(m, k, n, &ap.data, &bp.data)))
}

/// Bond truncation rule shared by TEBD and DMRG.
///
/// `cutoff` is a relative discarded weight: the squared norm of the dropped
/// singular values divided by the total squared norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncationPolicy {
    pub max_bond: usize,
    pub cutoff: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { max_bond: 100, cutoff: 1e-5 }
    }
}

impl TruncationPolicy {
    pub fn new(max_bond: usize, cutoff: f64) -> Result<Self> {
        let policy = Self { max_bond, cutoff };
        policy.validate()?;
        Ok(policy)
    }

    /// No truncation beyond exact zeros.
    pub fn exact() -> Self {
        Self { max_bond: usize::MAX, cutoff: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_bond == 0 {
            return Err(Error::Parameter("max_bond must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.cutoff) {
            return Err(Error::Parameter(format!(
                "cutoff {} outside [0, 1)",
                self.cutoff
            )));
        }
        Ok(())
    }

    /// Number of values kept from a non-increasing spectrum.
    pub fn kept_rank(&self, s: &[f64]) -> usize {
        let total: f64 = s.iter().map(|x| x * x).sum();
        if total == 0.0 || s.is_empty() {
            return 1;
        }
        let mut tail = 0.0;
        let mut r = s.len();
        while r > 1 {
            let w = tail + s[r - 1] * s[r - 1];
            if w / total > self.cutoff {
                break;
            }
            tail = w;
            r -= 1;
        }
        r.min(self.max_bond).max(1)
    }
}

#[derive(Clone, Debug)]
pub struct SvdResult {
    /// Shape: row extents followed by the kept rank.
    pub u: Tensor,
    /// Non-increasing singular values.
    pub s: Vec<f64>,
    /// Shape: kept rank followed by column extents.
    pub vdag: Tensor,
    /// Sum of squared dropped values over the total.
    pub discarded_weight: f64,
    /// Set when the input was identically zero.
    pub degenerate: bool,
}

impl SvdResult {
    /// Squared norm of the kept part.
    pub fn kept_norm_sqr(&self) -> f64 {
        self.s.iter().map(|x| x * x).sum()
    }
}

struct Matricized {
    data: Vec<C64>,
    rows: usize,
    cols: usize,
    row_shape: Vec<usize>,
    col_shape: Vec<usize>,
}

fn matricize(t: &Tensor, row_axes: &[usize]) -> Result<Matricized> {
    let rank = t.rank();
    if row_axes.is_empty() || row_axes.len() >= rank {
        return Err(Error::Shape(format!(
            "split {row_axes:?} must leave both sides of a rank-{rank} tensor non-empty"
        )));
    }
    let col_axes: Vec<usize> = (0..rank).filter(|a| !row_axes.contains(a)).collect();
    let perm: Vec<usize> = row_axes.iter().chain(&col_axes).copied().collect();
    let permuted = t.permute_cow(&perm)?;
    let row_shape: Vec<usize> = row_axes.iter().map(|&a| t.shape[a]).collect();
    let col_shape: Vec<usize> = col_axes.iter().map(|&a| t.shape[a]).collect();
    Ok(Matricized {
        rows: row_shape.iter().product(),
        cols: col_shape.iter().product(),
        data: permuted.into_owned().data,
        row_shape,
        col_shape,
    })
}

/// Truncated SVD across the split `row_axes | remaining axes`.
pub fn svd_truncate(t: &Tensor, row_axes: &[usize], policy: &TruncationPolicy) -> Result<SvdResult> {
    policy.validate()?;
    let mat = matricize(t, row_axes)?;
    let (m, n) = (mat.rows, mat.cols);
    let u_shape = |k: usize| mat.row_shape.iter().copied().chain([k]).collect::<Vec<_>>();
    let v_shape = |k: usize| [k].into_iter().chain(mat.col_shape.iter().copied()).collect::<Vec<_>>();

    if mat.data.iter().all(|z| *z == ZERO) {
        let mut u = Tensor::zeros(&u_shape(1));
        u.data[0] = ONE;
        let mut vdag = Tensor::zeros(&v_shape(1));
        vdag.data[0] = ONE;
        return Ok(SvdResult { u, s: vec![0.0], vdag, discarded_weight: 0.0, degenerate: true });
    }

    let svd = MatRef::from_row_major_slice(&mat.data, m, n)
        .thin_svd()
        .map_err(|e| Error::Range(format!("SVD did not converge: {e:?}")))?;
    let (u_full, v_full) = (svd.U(), svd.V());
    let s_full: Vec<f64> = svd.S().column_vector().iter().map(|x| x.re).collect();
    let keep = policy.kept_rank(&s_full);
    let total: f64 = s_full.iter().map(|x| x * x).sum();
    let dropped: f64 = s_full[keep..].iter().map(|x| x * x).sum();

    let u = Tensor::from_raw(
        u_shape(keep),
        (0..m).flat_map(|i| (0..keep).map(move |j| u_full[(i, j)])).collect(),
    );
    let vdag = Tensor::from_raw(
        v_shape(keep),
        (0..keep).flat_map(|i| (0..n).map(move |j| v_full[(j, i)].conj())).collect(),
    );
    Ok(SvdResult {
        u,
        s: s_full[..keep].to_vec(),
        vdag,
        discarded_weight: dropped / total,
        degenerate: false,
    })
}

/// Thin QR across the split: returns an isometry `Q` (row extents + k) and
/// `R` (k + column extents), `k = min(rows, cols)`.
pub fn qr_split(t: &Tensor, row_axes: &[usize]) -> Result<(Tensor, Tensor)> {
    let mat = matricize(t, row_axes)?;
    let k = mat.rows.min(mat.cols);
    let qr = MatRef::from_row_major_slice(&mat.data, mat.rows, mat.cols).qr();
    let q = Tensor::from_raw([mat.row_shape, vec![k]].concat(), to_row_major(qr.compute_thin_Q().as_ref()));
    let r = Tensor::from_raw([vec![k], mat.col_shape].concat(), to_row_major(qr.thin_R()));
    Ok((q, r))
}

/// Mirror of [`qr_split`]: `t = L · Q` with `Q` having orthonormal rows.
/// Returns `(L, Q)` shaped (row extents + k) and (k + column extents).
pub fn lq_split(t: &Tensor, row_axes: &[usize]) -> Result<(Tensor, Tensor)> {
    let mat = matricize(t, row_axes)?;
    let k = mat.rows.min(mat.cols);
    let adjoint: Mat<C64> = MatRef::from_row_major_slice(&mat.data, mat.rows, mat.cols).adjoint().to_owned();
    let qr = adjoint.qr();
    let (r, q) = (qr.thin_R(), qr.compute_thin_Q());
    let l = Tensor::from_fn(&[mat.rows, k], |ix| r[(ix[1], ix[0])].conj()).reshape(&[mat.row_shape, vec![k]].concat())?;
    let q = Tensor::from_fn(&[k, mat.cols], |ix| q[(ix[1], ix[0])].conj()).reshape(&[vec![k], mat.col_shape].concat())?;
    Ok((l, q))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
        let len: usize = shape.iter().product();
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), len).prop_map(move |v| {
            Tensor::new(shape.clone(), v.into_iter().map(|(r, i)| C64::new(r, i)).collect()).unwrap()
        })
    }

    proptest! {
        #[test]
        fn contraction_is_bilinear(
            a in tensor(vec![3, 4]),
            b in tensor(vec![4, 2]),
            re in -2.0f64..2.0,
            im in -2.0f64..2.0,
        ) {
            let alpha = C64::new(re, im);
            let lhs = contract(&a.scale(alpha), &b, &[(1, 0)]).unwrap();
            let rhs = contract(&a, &b, &[(1, 0)]).unwrap().scale(alpha);
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
        }

        #[test]
        fn exact_svd_reconstructs(t in tensor(vec![3, 2, 4])) {
            let r = svd_truncate(&t, &[1], &TruncationPolicy::exact()).unwrap();
            let us = Tensor::from_fn(r.u.shape(), |ix| r.u.get(ix) * r.s[ix[1]]);
            let back = contract(&us, &r.vdag, &[(1, 0)]).unwrap().permute(&[1, 0, 2]).unwrap();
            prop_assert!(back.distance(&t).unwrap() < 1e-10);
        }

        #[test]
        fn discarded_weight_monotone_in_bond(t in tensor(vec![5, 5])) {
            let mut last = f64::INFINITY;
            for chi in 1..=5 {
                let w = svd_truncate(&t, &[0], &TruncationPolicy::new(chi, 0.0).unwrap())
                    .unwrap()
                    .discarded_weight;
                prop_assert!(w <= last + 1e-15);
                last = w;
            }
        }
    }
}
