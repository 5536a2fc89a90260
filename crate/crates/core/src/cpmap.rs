//! Completely positive maps `M_n -> M_d` in Heisenberg Kraus form
//! `a -> sum_i K_i* a K_i` with `K_i` of shape `n x d`.
//!
//! The Choi matrix is `C = sum_ij E_ij (x) phi(E_ij)`, indexed so that
//! `C[(i,a),(j,b)] = phi(E_ij)[a,b]` with row index `i*d + a`.

use crate::error::{Error, Result};
use crate::numerics::{
    eig_hermitian, flatten, identity, kron, matrix_unit, max_abs, psd_check, rank, zeros, CMatrix,
    PsdWitness, RANK_TOL,
};

/// A linear map `M_n -> M_{rows x cols}` stored by its values on the matrix
/// units, `values[i*n + j] = psi(E_ij)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap {
    pub in_dim: usize,
    pub out_rows: usize,
    pub out_cols: usize,
    pub values: Vec<CMatrix>,
}

impl LinearMap {
    pub fn new(in_dim: usize, values: Vec<CMatrix>) -> Result<Self> {
        if values.len() != in_dim * in_dim || in_dim == 0 {
            return Err(Error::ShapeMismatch(format!(
                "need {} values for M_{}, got {}",
                in_dim * in_dim,
                in_dim,
                values.len()
            )));
        }
        let (out_rows, out_cols) = values[0].shape();
        if values.iter().any(|v| v.shape() != (out_rows, out_cols)) {
            return Err(Error::ShapeMismatch("values of differing shapes".into()));
        }
        Ok(LinearMap { in_dim, out_rows, out_cols, values })
    }

    pub fn from_fn(in_dim: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let values = (0..in_dim * in_dim)
            .map(|k| f(&matrix_unit(in_dim, k / in_dim, k % in_dim)))
            .collect();
        LinearMap::new(in_dim, values).expect("from_fn produces consistent shapes")
    }

    pub fn zero(in_dim: usize, out_rows: usize, out_cols: usize) -> Self {
        LinearMap { in_dim, out_rows, out_cols, values: vec![zeros(out_rows, out_cols); in_dim * in_dim] }
    }

    pub fn value(&self, i: usize, j: usize) -> &CMatrix {
        &self.values[i * self.in_dim + j]
    }

    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        assert_eq!(a.shape(), (self.in_dim, self.in_dim), "LinearMap::apply shape");
        let mut out = zeros(self.out_rows, self.out_cols);
        for i in 0..self.in_dim {
            for j in 0..self.in_dim {
                let z = a[(i, j)];
                if z.norm() != 0.0 {
                    out += self.value(i, j) * z;
                }
            }
        }
        out
    }

    /// `a -> psi(a*)*`.
    pub fn adjoint_map(&self) -> LinearMap {
        let n = self.in_dim;
        let values = (0..n * n).map(|k| self.value(k % n, k / n).adjoint()).collect();
        LinearMap { in_dim: n, out_rows: self.out_cols, out_cols: self.out_rows, values }
    }

    pub fn scale(&self, s: f64) -> LinearMap {
        LinearMap { values: self.values.iter().map(|v| v.scale(s)).collect(), ..self.clone() }
    }

    /// Max-entry distance over matrix units.
    pub fn distance(&self, other: &LinearMap) -> f64 {
        assert_eq!(self.in_dim, other.in_dim);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| max_abs(&(a - b)))
            .fold(0.0, f64::max)
    }

    /// Choi matrix; only meaningful for square outputs.
    pub fn choi(&self) -> CMatrix {
        let n = self.in_dim;
        let mut c = zeros(n * self.out_rows, n * self.out_cols);
        for i in 0..n {
            for j in 0..n {
                c.view_mut((i * self.out_rows, j * self.out_cols), (self.out_rows, self.out_cols))
                    .copy_from(self.value(i, j));
            }
        }
        c
    }

    pub fn from_choi(n: usize, d: usize, choi: &CMatrix) -> LinearMap {
        let values = (0..n * n)
            .map(|k| choi.view(((k / n) * d, (k % n) * d), (d, d)).into_owned())
            .collect();
        LinearMap { in_dim: n, out_rows: d, out_cols: d, values }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CpMap {
    n: usize,
    d: usize,
    kraus: Vec<CMatrix>,
    choi: CMatrix,
}

impl CpMap {
    /// Builds a CP map from a Kraus list. The stored list is the canonical
    /// linearly independent one read off the Choi eigendecomposition, so
    /// linearly dependent inputs are merged.
    pub fn from_kraus(kraus: &[CMatrix]) -> Result<Self> {
        let first = kraus.first().ok_or_else(|| Error::ShapeMismatch("empty Kraus list".into()))?;
        let (n, d) = first.shape();
        if n == 0 || d == 0 {
            return Err(Error::ShapeMismatch("Kraus operators must be nonempty".into()));
        }
        if let Some(bad) = kraus.iter().find(|k| k.shape() != (n, d)) {
            return Err(Error::ShapeMismatch(format!("expected {n}x{d} Kraus, got {:?}", bad.shape())));
        }
        let mut choi = zeros(n * d, n * d);
        for k in kraus {
            let w = flatten(k).map(|z| z.conj());
            choi += &w * w.adjoint();
        }
        Self::from_choi(n, d, &choi, f64::INFINITY)
    }

    /// Builds a CP map from its Choi matrix, failing with `NotCp` when the
    /// minimal eigenvalue is below `-tol * max(1, |C|)`.
    pub fn from_choi(n: usize, d: usize, choi: &CMatrix, tol: f64) -> Result<Self> {
        if choi.shape() != (n * d, n * d) {
            return Err(Error::ShapeMismatch(format!("Choi must be {0}x{0}", n * d)));
        }
        let scale = max_abs(choi).max(1.0);
        let eig = eig_hermitian(choi, 1e-8 * scale)?;
        let top = eig.values.first().copied().unwrap_or(0.0);
        let min = eig.values.last().copied().unwrap_or(0.0);
        if min < -tol * scale {
            return Err(Error::NotCp { min_eigenvalue: min });
        }
        let mut kraus = Vec::new();
        for (k, &lambda) in eig.values.iter().enumerate() {
            if top <= 0.0 || lambda <= RANK_TOL * top {
                break;
            }
            let u = eig.vectors.column(k);
            let s = lambda.sqrt();
            kraus.push(CMatrix::from_fn(n, d, |i, a| u[i * d + a].conj() * s));
        }
        let choi = (choi + choi.adjoint()).scale(0.5);
        Ok(CpMap { n, d, kraus, choi })
    }

    pub fn identity(n: usize) -> Self {
        Self::from_kraus(&[identity(n)]).expect("identity Kraus")
    }

    /// `a -> u* a u`.
    pub fn conjugation(u: &CMatrix) -> Self {
        Self::from_kraus(std::slice::from_ref(u)).expect("single Kraus operator")
    }

    pub fn zero(n: usize, d: usize) -> Self {
        CpMap { n, d, kraus: Vec::new(), choi: zeros(n * d, n * d) }
    }

    pub fn in_dim(&self) -> usize {
        self.n
    }

    pub fn out_dim(&self) -> usize {
        self.d
    }

    pub fn kraus(&self) -> &[CMatrix] {
        &self.kraus
    }

    pub fn choi(&self) -> &CMatrix {
        &self.choi
    }

    /// Number of Kraus operators; equals the Choi rank.
    pub fn kraus_rank(&self) -> usize {
        self.kraus.len()
    }

    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        let mut out = zeros(self.d, self.d);
        for k in &self.kraus {
            out += k.adjoint() * a * k;
        }
        out
    }

    /// Evaluation through the Choi matrix instead of the Kraus list.
    pub fn apply_via_choi(&self, a: &CMatrix) -> CMatrix {
        LinearMap::from_choi(self.n, self.d, &self.choi).apply(a)
    }

    pub fn to_linear(&self) -> LinearMap {
        LinearMap::from_fn(self.n, |a| self.apply(a))
    }

    pub fn is_cp(&self, tol: f64) -> PsdWitness {
        psd_check(&self.choi, tol).unwrap_or(PsdWitness { is_psd: false, min_eigenvalue: f64::NAN })
    }

    /// `psi o phi` as a map `M_n -> M_e`, where `self = phi` and `next = psi`.
    pub fn compose(&self, next: &CpMap) -> Result<CpMap> {
        if self.d != next.n {
            return Err(Error::DimMismatch(format!("cannot compose M_{} -> M_{} with M_{} -> M_{}", self.n, self.d, next.n, next.d)));
        }
        if self.kraus.is_empty() || next.kraus.is_empty() {
            return Ok(CpMap::zero(self.n, next.d));
        }
        let products: Vec<CMatrix> =
            self.kraus.iter().flat_map(|k| next.kraus.iter().map(move |l| k * l)).collect();
        CpMap::from_kraus(&products)
    }

    /// `t`-fold composition; `power(0)` is the identity.
    pub fn power(&self, t: usize) -> Result<CpMap> {
        if self.n != self.d {
            return Err(Error::DimMismatch("power needs a map on a single algebra".into()));
        }
        let mut out = CpMap::identity(self.n);
        for _ in 0..t {
            out = out.compose(self)?;
        }
        Ok(out)
    }

    pub fn is_unital(&self, tol: f64) -> bool {
        max_abs(&(self.apply(&identity(self.n)) - identity(self.d))) <= tol
    }

    pub fn minimal_stinespring(&self) -> StinespringRep {
        let r = self.kraus.len();
        let mut v = zeros(self.n * r, self.d);
        for (k, kr) in self.kraus.iter().enumerate() {
            for i in 0..self.n {
                for a in 0..self.d {
                    v[(i * r + k, a)] = kr[(i, a)];
                }
            }
        }
        StinespringRep { n: self.n, d: self.d, r, v }
    }
}

/// `phi(a) = V* (a (x) I_r) V` with `V: C^d -> C^n (x) C^r`.
#[derive(Debug, Clone, PartialEq)]
pub struct StinespringRep {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub v: CMatrix,
}

impl StinespringRep {
    pub fn rep_space_dim(&self) -> usize {
        self.n * self.r
    }

    pub fn pi(&self, a: &CMatrix) -> CMatrix {
        kron(a, &identity(self.r))
    }

    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        self.v.adjoint() * self.pi(a) * &self.v
    }

    /// Max residual of `phi(E_ij) - V* pi(E_ij) V` over matrix units.
    pub fn reconstruction_residual(&self, phi: &CpMap) -> f64 {
        (0..self.n * self.n)
            .map(|k| {
                let e = matrix_unit(self.n, k / self.n, k % self.n);
                max_abs(&(phi.apply(&e) - self.apply(&e)))
            })
            .fold(0.0, f64::max)
    }

    /// Rank of `span{pi(E_ij) V h}`; minimal iff equal to `n*r`.
    pub fn cyclic_rank(&self) -> usize {
        if self.r == 0 {
            return 0;
        }
        let blocks: Vec<CMatrix> =
            (0..self.n * self.n).map(|k| self.pi(&matrix_unit(self.n, k / self.n, k % self.n)) * &self.v).collect();
        rank(&crate::numerics::hstack(&blocks), RANK_TOL)
    }

    pub fn is_minimal(&self) -> bool {
        self.cyclic_rank() == self.rep_space_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{c, cr, eig_hermitian};
    use crate::random::{random_kraus, seeded};

    fn transpose_choi(n: usize) -> CMatrix {
        LinearMap::from_fn(n, |a| a.transpose()).choi()
    }

    #[test]
    fn identity_map_has_rank_one_choi_of_trace_n() {
        let id = CpMap::identity(2);
        // Choi of the identity is the unnormalized maximally entangled projector.
        let eig = eig_hermitian(id.choi(), 1e-12).unwrap();
        assert!((eig.values[0] - 2.0).abs() < 1e-12);
        assert!(eig.values[1..].iter().all(|v| v.abs() < 1e-12));
        assert_eq!(id.kraus_rank(), 1);
        assert!(max_abs(&(&id.kraus()[0] - identity(2))) < 1e-12);
    }

    #[test]
    fn duplicate_kraus_merge_into_one() {
        let mut k = zeros(2, 2);
        k[(0, 0)] = c(0.3, 0.4);
        k[(1, 0)] = cr(0.5);
        let phi = CpMap::from_kraus(&[k.clone(), k.clone()]).unwrap();
        assert_eq!(phi.kraus_rank(), 1);
        // The merged operator is sqrt(2) K up to phase.
        let ratio = phi.kraus()[0][(1, 0)] / k[(1, 0)];
        assert!((ratio.norm() - 2f64.sqrt()).abs() < 1e-12);
        assert!(max_abs(&(&phi.kraus()[0] - &k * ratio)) < 1e-12);
    }

    #[test]
    fn kraus_and_choi_actions_agree() {
        let mut rng = seeded(11);
        let phi = CpMap::from_kraus(&random_kraus(&mut rng, 3, 3, 3)).unwrap();
        for e in crate::numerics::matrix_units(3) {
            assert!(max_abs(&(phi.apply(&e) - phi.apply_via_choi(&e))) < 1e-10);
        }
    }

    #[test]
    fn transpose_is_not_cp() {
        let choi = transpose_choi(2);
        let w = psd_check(&choi, 1e-9).unwrap();
        // The swap operator has eigenvalue -1 on the antisymmetric vector.
        assert!((w.min_eigenvalue + 1.0).abs() < 1e-12);
        assert!(matches!(CpMap::from_choi(2, 2, &choi, 1e-9), Err(Error::NotCp { .. })));
    }

    #[test]
    fn compose_conjugations() {
        let mut u = zeros(2, 2);
        u[(0, 1)] = cr(1.0);
        u[(1, 0)] = c(0.0, 1.0);
        let mut w = zeros(2, 2);
        let h = 0.5f64.sqrt();
        w[(0, 0)] = cr(h);
        w[(0, 1)] = cr(h);
        w[(1, 0)] = cr(h);
        w[(1, 1)] = cr(-h);
        let both = CpMap::conjugation(&u).compose(&CpMap::conjugation(&w)).unwrap();
        let direct = CpMap::conjugation(&(&u * &w));
        assert!(both.to_linear().distance(&direct.to_linear()) < 1e-12);
        let id_first = CpMap::identity(2).compose(&both).unwrap();
        assert!(id_first.to_linear().distance(&both.to_linear()) < 1e-12);
    }

    #[test]
    fn adjoint_of_two_sided_multiplication() {
        let mut rng = seeded(3);
        let xs = random_kraus(&mut rng, 2, 2, 2);
        let (x, y) = (&xs[0], &xs[1]);
        let psi = LinearMap::from_fn(2, |a| x.adjoint() * a * y);
        let expected = LinearMap::from_fn(2, |a| y.adjoint() * a * x);
        assert!(psi.adjoint_map().distance(&expected) < 1e-13);
        assert!(psi.adjoint_map().adjoint_map().distance(&psi) < 1e-15);
    }

    #[test]
    fn stinespring_of_conjugation() {
        let mut u = zeros(2, 2);
        u[(0, 1)] = cr(1.0);
        u[(1, 0)] = c(0.0, -1.0);
        let phi = CpMap::conjugation(&u);
        let st = phi.minimal_stinespring();
        assert_eq!(st.r, 1);
        let phase = st.v[(0, 1)] / u[(0, 1)];
        assert!((phase.norm() - 1.0).abs() < 1e-12);
        assert!(max_abs(&(&st.v - &u * phase)) < 1e-12);
        assert!(st.is_minimal());
    }

    #[test]
    fn stinespring_rank_four() {
        let mut rng = seeded(5);
        let phi = CpMap::from_kraus(&random_kraus(&mut rng, 3, 3, 4)).unwrap();
        let st = phi.minimal_stinespring();
        assert_eq!(st.r, 4);
        assert!(st.reconstruction_residual(&phi) < 1e-9);
        assert!(st.is_minimal());
    }
}
