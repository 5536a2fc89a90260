//! Dense complex linear-algebra kernels shared by every other module.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>`. Rank decisions are relative:
//! a singular value or eigenvalue counts as zero when it is below
//! `tol * largest`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Construction tolerance used when no explicit value is given.
pub const BUILD_TOL: f64 = 1e-9;
/// Verification tolerance used when no explicit value is given.
pub const VERIFY_TOL: f64 = 1e-6;
/// Relative cut below which Choi and Gram eigenvalues are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Absolute floor below which a whole input is considered numerically zero.
const ZERO_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub build: f64,
    pub verify: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { build: BUILD_TOL, verify: VERIFY_TOL }
    }
}

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// The matrix unit `E_ij` of size `n x n`.
pub fn matrix_unit(n: usize, i: usize, j: usize) -> CMatrix {
    let mut m = zeros(n, n);
    m[(i, j)] = cr(1.0);
    m
}

/// All matrix units of `M_n`, ordered `(0,0), (0,1), ..., (n-1,n-1)`.
pub fn matrix_units(n: usize) -> Vec<CMatrix> {
    (0..n * n).map(|k| matrix_unit(n, k / n, k % n)).collect()
}

pub fn diag_real(values: &[f64]) -> CMatrix {
    let n = values.len();
    let mut m = zeros(n, n);
    for (i, v) in values.iter().enumerate() {
        m[(i, i)] = cr(*v);
    }
    m
}

/// Kronecker product with the first factor as the major index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// `(a (x) b) x` without forming the Kronecker product.
pub fn kron_apply(a: &CMatrix, b: &CMatrix, x: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    assert_eq!(x.nrows(), ac * bc, "kron_apply: operand has the wrong number of rows");
    let mut out = zeros(ar * br, x.ncols());
    for col in 0..x.ncols() {
        let xm = CMatrix::from_fn(ac, bc, |i, j| x[(i * bc + j, col)]);
        let ym = a * xm * b.transpose();
        for i in 0..ar {
            for j in 0..br {
                out[(i * br + j, col)] = ym[(i, j)];
            }
        }
    }
    out
}

/// Block-diagonal direct sum.
pub fn direct_sum(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut m = zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut(a.shape(), b.shape()).copy_from(b);
    m
}

/// Horizontal concatenation `[m_1 m_2 ...]`; all blocks share a row count.
pub fn hstack(blocks: &[CMatrix]) -> CMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack row mismatch");
        m.view_mut((0, at), b.shape()).copy_from(b);
        at += b.ncols();
    }
    m
}

/// Vertical concatenation; all blocks share a column count.
pub fn vstack(blocks: &[CMatrix]) -> CMatrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut m = zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vstack column mismatch");
        m.view_mut((at, 0), b.shape()).copy_from(b);
        at += b.nrows();
    }
    m
}

/// Row-major flattening into a column vector.
pub fn flatten(m: &CMatrix) -> CMatrix {
    let (r, cc) = m.shape();
    CMatrix::from_fn(r * cc, 1, |k, _| m[(k / cc, k % cc)])
}

/// Inverse of [`flatten`].
pub fn unflatten(v: &CMatrix, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| v[(i * cols + j, 0)])
}

/// Largest singular value.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

pub fn fro_norm(m: &CMatrix) -> f64 {
    m.norm()
}

/// Largest entry modulus; the residual measure used throughout the crate.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

pub fn hermitian_residual(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// SVD iterated to machine precision. The library default stops early on
/// tall matrices with clustered singular values.
fn svd(m: &CMatrix, u: bool, v: bool) -> nalgebra::SVD<C64, nalgebra::Dyn, nalgebra::Dyn> {
    m.clone().try_svd(u, v, f64::EPSILON, 0).unwrap_or_else(|| m.clone().svd(u, v))
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = svd(m, false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with a relative threshold.
pub fn rank(m: &CMatrix, rel_tol: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&top) if top > ZERO_FLOOR => s.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Eigenvalues, descending.
    pub values: Vec<f64>,
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn reconstruct(&self) -> CMatrix {
        let d = diag_real(&self.values);
        &self.vectors * d * self.vectors.adjoint()
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.
pub fn eig_hermitian(m: &CMatrix, tol: f64) -> Result<HermitianEigen> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!("eig_hermitian needs a square matrix, got {:?}", m.shape())));
    }
    let residual = hermitian_residual(m);
    if residual > tol {
        return Err(Error::NotHermitian { residual });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(HermitianEigen { values: Vec::new(), vectors: zeros(0, 0) });
    }
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = canonical_phase(&eig.eigenvectors.columns(src, 1).into_owned());
        vectors.set_column(dst, &col.column(0));
    }
    Ok(HermitianEigen { values, vectors })
}

/// Rotates a vector so that its first largest-modulus entry is real positive.
pub fn canonical_phase(v: &CMatrix) -> CMatrix {
    let top = v.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()));
    if top == 0.0 {
        return v.clone();
    }
    let pivot = v.iter().find(|z| z.norm() >= top * (1.0 - 1e-9)).copied().unwrap_or(cr(1.0));
    let phase = pivot.conj() / pivot.norm();
    v.map(|z| z * phase)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdWitness {
    pub is_psd: bool,
    pub min_eigenvalue: f64,
}

/// Positive-semidefiniteness test: PSD iff the minimal eigenvalue is at
/// least `-tol`. The minimal eigenvalue is returned either way.
pub fn psd_check(m: &CMatrix, tol: f64) -> Result<PsdWitness> {
    // Hermiticity is judged relative to the matrix scale.
    let scale = max_abs(m).max(1.0);
    let eig = eig_hermitian(m, tol.max(1e-12) * scale * 10.0)?;
    let min_eigenvalue = eig.values.last().copied().unwrap_or(0.0);
    Ok(PsdWitness { is_psd: min_eigenvalue >= -tol, min_eigenvalue })
}

/// Orthonormal basis (as columns) of the column space of `m`, discarding
/// directions below `rel_tol * sigma_max`. May return zero columns.
pub fn column_basis(m: &CMatrix, rel_tol: f64) -> CMatrix {
    let rows = m.nrows();
    if m.ncols() == 0 || rows == 0 {
        return zeros(rows, 0);
    }
    let svd = svd(m, true, false);
    let u = svd.u.expect("left singular vectors requested");
    let sv = &svd.singular_values;
    let top = sv.iter().copied().fold(0.0_f64, f64::max);
    if top <= ZERO_FLOOR {
        return zeros(rows, 0);
    }
    let keep: Vec<usize> = (0..sv.len()).filter(|&k| sv[k] > rel_tol * top).collect();
    let mut out = zeros(rows, keep.len());
    for (dst, &k) in keep.iter().enumerate() {
        let col = canonical_phase(&u.columns(k, 1).into_owned());
        out.set_column(dst, &col.column(0));
    }
    out
}

/// Orthonormal basis of the span of equally shaped matrices under the
/// entrywise Hermitian inner product `tr(x* y)`.
pub fn orthonormal_span(vectors: &[CMatrix], tol: f64) -> Result<Vec<CMatrix>> {
    let Some(first) = vectors.first() else {
        return Err(Error::EmptySpan);
    };
    let shape = first.shape();
    if let Some(bad) = vectors.iter().find(|v| v.shape() != shape) {
        return Err(Error::ShapeMismatch(format!("expected {:?}, got {:?}", shape, bad.shape())));
    }
    let cols: Vec<CMatrix> = vectors.iter().map(flatten).collect();
    let basis = column_basis(&hstack(&cols), tol);
    if basis.ncols() == 0 {
        return Err(Error::EmptySpan);
    }
    Ok((0..basis.ncols())
        .map(|k| unflatten(&basis.columns(k, 1).into_owned(), shape.0, shape.1))
        .collect())
}

/// Gram matrix `G_ij = tr(v_i* v_j)`.
pub fn gram(vectors: &[CMatrix]) -> CMatrix {
    let n = vectors.len();
    CMatrix::from_fn(n, n, |i, j| (vectors[i].adjoint() * &vectors[j]).trace())
}

/// Moore-Penrose pseudo-inverse; singular values below `tol * sigma_max`
/// are treated as zero.
pub fn pinv(m: &CMatrix, tol: f64) -> CMatrix {
    let (r, cc) = m.shape();
    if r == 0 || cc == 0 {
        return zeros(cc, r);
    }
    let svd = svd(m, true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let top = sv.iter().copied().fold(0.0_f64, f64::max);
    let mut out = zeros(cc, r);
    if top <= ZERO_FLOOR {
        return out;
    }
    for k in 0..sv.len() {
        if sv[k] > tol * top {
            let vk = vt.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk).scale(1.0 / sv[k]);
        }
    }
    out
}

/// Least-squares solution `x` of `x * a = b`, with the relative residual
/// `|x a - b| / max(1, |b|)` in max-entry norm.
pub fn solve_right(a: &CMatrix, b: &CMatrix, tol: f64) -> (CMatrix, f64) {
    let x = b * pinv(a, tol);
    let residual = max_abs(&(&x * a - b)) / max_abs(b).max(1.0);
    (x, residual)
}

fn norm_one(m: &CMatrix) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring around a truncated Taylor series.
pub fn expm(m: &CMatrix) -> CMatrix {
    assert!(m.is_square(), "expm needs a square matrix");
    let n = m.nrows();
    let norm = norm_one(m);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let a = m.scale(0.5_f64.powi(squarings));
    let mut sum = identity(n);
    let mut term = identity(n);
    for k in 1..=40 {
        term = (&term * &a).scale(1.0 / k as f64);
        sum += &term;
        if max_abs(&term) <= 1e-18 * max_abs(&sum) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Principal square root by the Denman-Beavers iteration. Returns `None`
/// when an iterate becomes singular.
fn sqrtm(m: &CMatrix) -> Option<CMatrix> {
    let n = m.nrows();
    let mut y = m.clone();
    let mut z = identity(n);
    for _ in 0..100 {
        let y_inv = y.clone().try_inverse()?;
        let z_inv = z.clone().try_inverse()?;
        let y_next = (&y + z_inv).scale(0.5);
        let z_next = (&z + y_inv).scale(0.5);
        let delta = max_abs(&(&y_next - &y));
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * max_abs(&y).max(1.0) {
            break;
        }
    }
    Some(y)
}

/// Principal matrix logarithm by inverse scaling and squaring. Intended for
/// matrices with spectrum away from the closed negative real axis.
pub fn logm(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch("logm needs a square matrix".into()));
    }
    let n = m.nrows();
    let mut x = m.clone();
    let mut roots = 0;
    while norm_one(&(&x - identity(n))) > 0.05 {
        x = sqrtm(&x).ok_or_else(|| Error::Invalid("logm: singular iterate".into()))?;
        roots += 1;
        if roots > 60 {
            return Err(Error::Invalid("logm: square roots did not converge".into()));
        }
    }
    let e = &x - identity(n);
    let mut sum = zeros(n, n);
    let mut power = identity(n);
    for k in 1..=60 {
        power = &power * &e;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += power.scale(sign / k as f64);
        if max_abs(&power) / (k as f64) < 1e-18 {
            break;
        }
    }
    Ok(sum.scale(2.0_f64.powi(roots)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn kron_apply_matches_kron() {
        let mut rng = crate::random::seeded(2);
        let a = crate::random::ginibre(&mut rng, 2, 3);
        let b = crate::random::ginibre(&mut rng, 4, 2);
        let x = crate::random::ginibre(&mut rng, 6, 3);
        assert!(max_abs(&(kron(&a, &b) * &x - kron_apply(&a, &b, &x))) < 1e-12);
    }

    #[test]
    fn pinv_on_stacked_unitaries() {
        let mut rng = crate::random::seeded(5);
        let mut u = || crate::random::random_unitary(&mut rng, 4);
        let blocks: Vec<CMatrix> = (0..4).map(|_| kron(&u(), &u())).collect();
        let a = vstack(&blocks);
        let p = pinv(&a, RANK_TOL);
        assert!(max_abs(&(&a * &p * &a - &a)) < 1e-12);
        assert!(singular_values(&a).iter().all(|s| (s - 2.0).abs() < 1e-12));
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = eig_hermitian(&identity(2), 1e-12).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        assert!(max_abs(&(e.reconstruct() - identity(2))) < 1e-14);

        let e = eig_hermitian(&diag_real(&[3.0, -1.0]), 1e-12).unwrap();
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn eig_rejects_non_hermitian() {
        let mut m = identity(2);
        m[(0, 1)] = cr(1.0);
        assert!(matches!(eig_hermitian(&m, 1e-9), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn psd_examples() {
        let w = psd_check(&identity(3), 1e-9).unwrap();
        assert!(w.is_psd);
        assert_abs_diff_eq!(w.min_eigenvalue, 1.0, epsilon = 1e-14);
        let w = psd_check(&diag_real(&[1.0, -1.0]), 1e-9).unwrap();
        assert!(!w.is_psd);
        assert_abs_diff_eq!(w.min_eigenvalue, -1.0, epsilon = 1e-14);
    }

    #[test]
    fn span_collapses_duplicates() {
        let e1 = CMatrix::from_column_slice(2, 1, &[cr(1.0), cr(0.0)]);
        let e2 = CMatrix::from_column_slice(2, 1, &[cr(0.0), cr(1.0)]);
        let b = orthonormal_span(&[e1.clone(), e1.clone()], 1e-10).unwrap();
        assert_eq!(b.len(), 1);
        assert!((b[0].clone() - &e1).norm() < 1e-14);
        let b = orthonormal_span(&[e1, e2], 1e-10).unwrap();
        assert_eq!(b.len(), 2);
        assert!(max_abs(&(gram(&b) - identity(2))) < 1e-14);
        assert_eq!(orthonormal_span(&[zeros(2, 1)], 1e-10), Err(Error::EmptySpan));
    }

    #[test]
    fn pinv_examples() {
        assert!(max_abs(&(pinv(&identity(2), 1e-12) - identity(2))) < 1e-14);
        let p = pinv(&diag_real(&[2.0, 0.0]), 1e-12);
        assert!(max_abs(&(p - diag_real(&[0.5, 0.0]))) < 1e-14);
    }

    #[test]
    fn expm_examples() {
        assert!(max_abs(&(expm(&zeros(3, 3)) - identity(3))) < 1e-15);
        let e = expm(&diag_real(&[0.7, -2.5]));
        assert_abs_diff_eq!(e[(0, 0)].re, 0.7_f64.exp(), epsilon = 1e-13);
        assert_abs_diff_eq!(e[(1, 1)].re, (-2.5_f64).exp(), epsilon = 1e-13);
        assert!(e[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn logm_inverts_expm() {
        let mut m = zeros(2, 2);
        m[(0, 0)] = c(0.3, 0.1);
        m[(0, 1)] = c(-0.4, 0.2);
        m[(1, 0)] = c(0.1, 0.0);
        m[(1, 1)] = c(-0.2, -0.5);
        let back = logm(&expm(&m)).unwrap();
        assert!(max_abs(&(back - m)) < 1e-11);
    }

    #[test]
    fn kron_orders_first_factor_major() {
        let a = matrix_unit(2, 0, 1);
        let b = matrix_unit(3, 2, 0);
        let k = kron(&a, &b);
        assert_eq!(k[(2, 3)], cr(1.0));
        assert_eq!(k.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }
}
