//! Concrete two-sided modules realized as operator spaces.
//!
//! A right `M_d`-module here is always of the form `Hom(C^d, W)` for a
//! subspace `W` of an ambient space `C^K`; the left algebra `M_n` acts on
//! `C^K` through a representation `pi`. The module stores an orthonormal
//! basis `Q` of `W` and an orthonormal basis `R` of `pi(E_11) W`, the
//! multiplicity space used to realize interior tensor products.
//!
//! For `E` over `M_n`-`M_d` and `F` over `M_d`-`M_c` the tensor product is
//! realized inside `Hom(C^c, C^K_E (x) C^m_F)` by
//! `x (.) y = sum_b (X e_b) (x) (R_F* pi_F(E_1b) Y)`, which is isometric for
//! the interior inner product. With the corner basis of `E (.) F` fixed to
//! `R_E (x) I`, the tensor product is strictly associative.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{
    column_basis, cr, hstack, identity, kron, matrix_unit, max_abs, op_norm, pinv, rank, solve_right,
    zeros, CMatrix, RANK_TOL,
};

/// A *-representation of `M_n` on `C^K`, stored structurally so that large
/// tensor powers never materialize dense images of every matrix unit.
#[derive(Debug, Clone, PartialEq)]
pub enum LeftRep {
    /// `a -> a (x) I_r` on `C^n (x) C^r`.
    Amplified { n: usize, r: usize },
    /// `a -> inner(a) (x) I_m`.
    Tensor { inner: Box<LeftRep>, m: usize },
    /// `a -> inner(I_k (x) a)`, where `inner` represents `M_{k n}`.
    Diagonal { inner: Box<LeftRep>, k: usize },
    /// Explicit images, `images[i*n + j] = pi(E_ij)`.
    Dense { n: usize, images: Vec<CMatrix> },
}

impl LeftRep {
    pub fn algebra_dim(&self) -> usize {
        match self {
            LeftRep::Amplified { n, .. } => *n,
            LeftRep::Tensor { inner, .. } => inner.algebra_dim(),
            LeftRep::Diagonal { inner, k } => inner.algebra_dim() / k,
            LeftRep::Dense { n, .. } => *n,
        }
    }

    pub fn ambient(&self) -> usize {
        match self {
            LeftRep::Amplified { n, r } => n * r,
            LeftRep::Tensor { inner, m } => inner.ambient() * m,
            LeftRep::Diagonal { inner, .. } => inner.ambient(),
            LeftRep::Dense { images, .. } => images.first().map_or(0, |m| m.nrows()),
        }
    }

    /// `inner (x) I_m`, flattening nested amplifications.
    pub fn tensor(inner: &LeftRep, m: usize) -> LeftRep {
        match inner {
            LeftRep::Amplified { n, r } => LeftRep::Amplified { n: *n, r: r * m },
            LeftRep::Tensor { inner, m: m0 } => LeftRep::Tensor { inner: inner.clone(), m: m0 * m },
            other => LeftRep::Tensor { inner: Box::new(other.clone()), m },
        }
    }

    /// `pi(a) x` for `x` with `ambient()` rows.
    pub fn apply(&self, a: &CMatrix, x: &CMatrix) -> CMatrix {
        match self {
            LeftRep::Amplified { n, r } => {
                let (n, r) = (*n, *r);
                let cols = x.ncols();
                let mut out = zeros(n * r, cols);
                for i in 0..n {
                    for j in 0..n {
                        let z = a[(i, j)];
                        if z.norm() == 0.0 {
                            continue;
                        }
                        for k in 0..r {
                            for c in 0..cols {
                                out[(i * r + k, c)] += z * x[(j * r + k, c)];
                            }
                        }
                    }
                }
                out
            }
            LeftRep::Tensor { inner, m } => {
                let m = *m;
                let kk = inner.ambient();
                let cols = x.ncols();
                let mut out = zeros(kk * m, cols);
                for j in 0..m {
                    let slice = CMatrix::from_fn(kk, cols, |row, c| x[(row * m + j, c)]);
                    let img = inner.apply(a, &slice);
                    for row in 0..kk {
                        for c in 0..cols {
                            out[(row * m + j, c)] = img[(row, c)];
                        }
                    }
                }
                out
            }
            LeftRep::Diagonal { inner, k } => inner.apply(&kron(&identity(*k), a), x),
            LeftRep::Dense { n, images } => {
                let mut out = zeros(x.nrows(), x.ncols());
                for i in 0..*n {
                    for j in 0..*n {
                        let z = a[(i, j)];
                        if z.norm() != 0.0 {
                            out += &images[i * n + j] * x * z;
                        }
                    }
                }
                out
            }
        }
    }

    pub fn matrix(&self, a: &CMatrix) -> CMatrix {
        self.apply(a, &identity(self.ambient()))
    }

    pub fn unit(&self, i: usize, j: usize) -> CMatrix {
        self.matrix(&matrix_unit(self.algebra_dim(), i, j))
    }

    /// Max residual of `pi(E_ij) pi(E_kl) = delta_jk pi(E_il)` and
    /// `pi(E_ij)* = pi(E_ji)` over all matrix units.
    pub fn homomorphism_residual(&self) -> f64 {
        let n = self.algebra_dim();
        let units: Vec<CMatrix> = (0..n * n).map(|u| self.unit(u / n, u % n)).collect();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let eij = &units[i * n + j];
                worst = worst.max(max_abs(&(eij.adjoint() - &units[j * n + i])));
                for l in 0..n {
                    for k in 0..n {
                        let prod = eij * &units[k * n + l];
                        let expected = if j == k { units[i * n + l].clone() } else { zeros(prod.nrows(), prod.ncols()) };
                        worst = worst.max(max_abs(&(prod - expected)));
                    }
                }
            }
        }
        worst
    }

    /// Orthonormal basis of `pi(E_11) C^K` when it has a closed form.
    fn structural_corner(&self) -> Option<CMatrix> {
        match self {
            LeftRep::Amplified { n, r } => {
                let mut c = zeros(n * r, *r);
                for k in 0..*r {
                    c[(k, k)] = cr(1.0);
                }
                Some(c)
            }
            LeftRep::Tensor { inner, m } => inner.structural_corner().map(|c| kron(&c, &identity(*m))),
            _ => None,
        }
    }
}

/// A right `M_d`-module `Hom(C^d, W)` with a left action of `M_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct VnBimodule {
    right_dim: usize,
    left: LeftRep,
    range: CMatrix,
    corner: CMatrix,
}

pub type Module = Arc<VnBimodule>;

impl VnBimodule {
    /// Module with range spanned by the columns of `span`. The range must be
    /// invariant under the left representation.
    pub fn new(left: LeftRep, right_dim: usize, span: &CMatrix, tol: f64) -> Result<Self> {
        if span.nrows() != left.ambient() {
            return Err(Error::ShapeMismatch(format!(
                "range vectors have {} rows, ambient is {}",
                span.nrows(),
                left.ambient()
            )));
        }
        let range = column_basis(span, RANK_TOL);
        let module = Self::from_parts(left, right_dim, range);
        let residual = module.left_closure_residual();
        if residual > tol {
            return Err(Error::NotSubmodule { residual });
        }
        Ok(module)
    }

    /// Module over the whole ambient space.
    pub fn full(left: LeftRep, right_dim: usize) -> Self {
        let k = left.ambient();
        Self::from_parts(left, right_dim, identity(k))
    }

    fn from_parts(left: LeftRep, right_dim: usize, range: CMatrix) -> Self {
        let k = left.ambient();
        let corner = match left.structural_corner() {
            Some(c) if range.ncols() == k => c,
            _ => {
                let n = left.algebra_dim();
                column_basis(&left.apply(&matrix_unit(n, 0, 0), &range), RANK_TOL)
            }
        };
        VnBimodule { right_dim, left, range, corner }
    }

    /// The algebra `M_d` as a module over itself.
    pub fn trivial(d: usize) -> Self {
        Self::full(LeftRep::Amplified { n: d, r: 1 }, d)
    }

    pub fn left_dim(&self) -> usize {
        self.left.algebra_dim()
    }

    pub fn right_dim(&self) -> usize {
        self.right_dim
    }

    pub fn ambient(&self) -> usize {
        self.left.ambient()
    }

    pub fn left_rep(&self) -> &LeftRep {
        &self.left
    }

    /// Orthonormal basis `Q` of the range `W`.
    pub fn range(&self) -> &CMatrix {
        &self.range
    }

    /// Orthonormal basis `R` of `pi(E_11) W`.
    pub fn corner(&self) -> &CMatrix {
        &self.corner
    }

    pub fn range_dim(&self) -> usize {
        self.range.ncols()
    }

    pub fn multiplicity(&self) -> usize {
        self.corner.ncols()
    }

    /// Complex dimension of the module.
    pub fn dim(&self) -> usize {
        self.range_dim() * self.right_dim
    }

    /// Hilbert-Schmidt orthonormal basis `{Q e_a e_b^T}`.
    pub fn basis(&self) -> Vec<CMatrix> {
        let (w, d) = (self.range_dim(), self.right_dim);
        let mut out = Vec::with_capacity(w * d);
        for a in 0..w {
            for b in 0..d {
                let mut x = zeros(self.ambient(), d);
                x.set_column(b, &self.range.column(a));
                out.push(x);
            }
        }
        out
    }

    /// Orthogonal projection onto `W` as an ambient operator.
    pub fn projector(&self) -> CMatrix {
        &self.range * self.range.adjoint()
    }

    pub fn project(&self, x: &CMatrix) -> CMatrix {
        &self.range * (self.range.adjoint() * x)
    }

    /// Distance of `x` from the module.
    pub fn membership_residual(&self, x: &CMatrix) -> f64 {
        max_abs(&(x - self.project(x)))
    }

    pub fn left_action(&self, a: &CMatrix, x: &CMatrix) -> CMatrix {
        self.left.apply(a, x)
    }

    /// `<x, y> = X* Y`.
    pub fn inner(&self, x: &CMatrix, y: &CMatrix) -> CMatrix {
        x.adjoint() * y
    }

    /// Coordinates `Q* X`; entry `(a, b)` is the coefficient of `Q e_a e_b^T`.
    pub fn coords(&self, x: &CMatrix) -> CMatrix {
        self.range.adjoint() * x
    }

    pub fn left_closure_residual(&self) -> f64 {
        let n = self.left_dim();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let img = self.left.apply(&matrix_unit(n, i, j), &self.range);
                worst = worst.max(max_abs(&(&img - self.project(&img))));
            }
        }
        worst
    }

    /// Residuals of the structural invariants: basis orthonormality, right
    /// closure, left closure and the homomorphism property.
    pub fn invariant_residuals(&self) -> ModuleResiduals {
        let gram = self.range.adjoint() * &self.range;
        let orthonormality = max_abs(&(gram - identity(self.range_dim())));
        let mut right_closure = 0.0_f64;
        for x in self.basis() {
            for e in crate::numerics::matrix_units(self.right_dim) {
                right_closure = right_closure.max(self.membership_residual(&(&x * e)));
            }
        }
        ModuleResiduals {
            orthonormality,
            right_closure,
            left_closure: self.left_closure_residual(),
            homomorphism: self.left.homomorphism_residual(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleResiduals {
    pub orthonormality: f64,
    pub right_closure: f64,
    pub left_closure: f64,
    pub homomorphism: f64,
}

impl ModuleResiduals {
    pub fn max(&self) -> f64 {
        self.orthonormality.max(self.right_closure).max(self.left_closure).max(self.homomorphism)
    }
}

/// An element of a module, kept as its ambient operator.
#[derive(Debug, Clone)]
pub struct ModuleVector {
    parent: Module,
    x: CMatrix,
}

impl ModuleVector {
    pub fn new(parent: Module, x: CMatrix, tol: f64) -> Result<Self> {
        if x.shape() != (parent.ambient(), parent.right_dim()) {
            return Err(Error::ShapeMismatch(format!(
                "vector is {:?}, module needs {}x{}",
                x.shape(),
                parent.ambient(),
                parent.right_dim()
            )));
        }
        let residual = parent.membership_residual(&x);
        if residual > tol * max_abs(&x).max(1.0) {
            return Err(Error::NotSubmodule { residual });
        }
        Ok(ModuleVector { parent, x })
    }

    pub fn from_coords(parent: Module, coords: &CMatrix) -> Self {
        let x = parent.range() * coords;
        ModuleVector { parent, x }
    }

    pub fn parent(&self) -> &Module {
        &self.parent
    }

    pub fn op(&self) -> &CMatrix {
        &self.x
    }

    /// Coefficient matrix `Q* X` (rows: range basis, columns: right index).
    pub fn coords(&self) -> CMatrix {
        self.parent.range().adjoint() * &self.x
    }

    pub fn inner_product(&self, other: &ModuleVector) -> Result<CMatrix> {
        if !Arc::ptr_eq(&self.parent, &other.parent) && *self.parent != *other.parent {
            return Err(Error::ParentMismatch);
        }
        Ok(self.x.adjoint() * &other.x)
    }

    /// Module norm `|<x,x>|^(1/2)`.
    pub fn norm(&self) -> f64 {
        op_norm(&self.x)
    }

    pub fn right_mul(&self, b: &CMatrix) -> ModuleVector {
        ModuleVector { parent: self.parent.clone(), x: &self.x * b }
    }

    pub fn left_mul(&self, a: &CMatrix) -> ModuleVector {
        ModuleVector { parent: self.parent.clone(), x: self.parent.left_action(a, &self.x) }
    }
}

/// GNS representation `(E, xi)` of a CP map: `phi(a) = <xi, a xi>`.
#[derive(Debug, Clone)]
pub struct Gns {
    pub module: Module,
    pub xi: CMatrix,
}

impl Gns {
    pub fn vector(&self) -> ModuleVector {
        ModuleVector { parent: self.module.clone(), x: self.xi.clone() }
    }

    /// `<xi, a xi>`.
    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        self.xi.adjoint() * self.module.left_action(a, &self.xi)
    }

    /// The spanning set `{pi(E_ij) xi}`; right multiples are implicit since
    /// each ambient column spans its right orbit.
    pub fn spanning_set(&self) -> Vec<CMatrix> {
        let n = self.module.left_dim();
        (0..n * n).map(|u| self.module.left_action(&matrix_unit(n, u / n, u % n), &self.xi)).collect()
    }

    /// Dimension of `span(A xi B)`.
    pub fn cyclic_dim(&self) -> usize {
        rank(&hstack(&self.spanning_set()), RANK_TOL) * self.module.right_dim()
    }

    pub fn reconstruction_residual(&self, phi: &crate::cpmap::CpMap) -> f64 {
        crate::numerics::matrix_units(phi.in_dim())
            .iter()
            .map(|e| max_abs(&(phi.apply(e) - self.apply(e))))
            .fold(0.0, f64::max)
    }
}

/// GNS module of a CP map built from its minimal Stinespring representation.
pub fn gns_module(phi: &crate::cpmap::CpMap) -> Gns {
    gns_from_stinespring(&phi.minimal_stinespring())
}

/// GNS module `span(pi(A) V M_d)` for an arbitrary Stinespring triple.
pub fn gns_from_stinespring(rep: &crate::cpmap::StinespringRep) -> Gns {
    let left = LeftRep::Amplified { n: rep.n, r: rep.r };
    let full = VnBimodule::full(left.clone(), rep.d);
    let blocks: Vec<CMatrix> =
        (0..rep.n * rep.n).map(|u| left.apply(&matrix_unit(rep.n, u / rep.n, u % rep.n), &rep.v)).collect();
    let span = hstack(&blocks);
    let module = if rep.r > 0 && rank(&span, RANK_TOL) == full.ambient() {
        full
    } else {
        VnBimodule::from_parts(left, rep.d, column_basis(&span, RANK_TOL))
    };
    Gns { module: Arc::new(module), xi: rep.v.clone() }
}

/// Interior tensor product `E (.) F`.
pub fn tensor(e: &VnBimodule, f: &VnBimodule) -> Result<VnBimodule> {
    if e.right_dim() != f.left_dim() {
        return Err(Error::DimMismatch(format!(
            "right algebra M_{} of E does not match left algebra M_{} of F",
            e.right_dim(),
            f.left_dim()
        )));
    }
    let m = f.multiplicity();
    let im = identity(m);
    Ok(VnBimodule {
        right_dim: f.right_dim(),
        left: LeftRep::tensor(&e.left, m),
        range: kron(e.range(), &im),
        corner: kron(e.corner(), &im),
    })
}

/// Components of `y` in the multiplicity picture, `(R* pi(E_1b) Y)_b`.
fn multiplicity_components(f: &VnBimodule, y: &CMatrix) -> Vec<CMatrix> {
    let d = f.left_dim();
    (0..d).map(|b| f.corner().adjoint() * f.left_action(&matrix_unit(d, 0, b), y)).collect()
}

/// The elementary tensor `x (.) y` as an ambient operator of `E (.) F`.
pub fn tensor_vectors(f: &VnBimodule, x: &CMatrix, y: &CMatrix) -> CMatrix {
    let comps = multiplicity_components(f, y);
    let mut out = zeros(x.nrows() * f.multiplicity(), y.ncols());
    for (b, comp) in comps.iter().enumerate() {
        out += kron(&x.columns(b, 1).into_owned(), comp);
    }
    out
}

/// Inner product `<y, <x, x'> y'>` computed in the abstract balanced tensor
/// product, used to cross-check [`tensor_vectors`].
pub fn abstract_tensor_inner(f: &VnBimodule, x: &CMatrix, y: &CMatrix, x2: &CMatrix, y2: &CMatrix) -> CMatrix {
    y.adjoint() * f.left_action(&(x.adjoint() * x2), y2)
}

/// Rank of the scalar Gram matrix of `{e_i (x) f_j}` over module bases under
/// the balanced semi-inner product; equals `dim(E (.) F)`.
pub fn abstract_tensor_dim(e: &VnBimodule, f: &VnBimodule) -> usize {
    let eb = e.basis();
    let fb = f.basis();
    let pairs: Vec<(usize, usize)> = (0..eb.len()).flat_map(|i| (0..fb.len()).map(move |j| (i, j))).collect();
    let mut inner_e = vec![zeros(0, 0); eb.len() * eb.len()];
    for i in 0..eb.len() {
        for i2 in 0..eb.len() {
            inner_e[i * eb.len() + i2] = f.left.matrix(&(eb[i].adjoint() * &eb[i2]));
        }
    }
    let gram = CMatrix::from_fn(pairs.len(), pairs.len(), |p, q| {
        let (i, j) = pairs[p];
        let (i2, j2) = pairs[q];
        (fb[j].adjoint() * &inner_e[i * eb.len() + i2] * &fb[j2]).trace()
    });
    rank(&gram, RANK_TOL)
}

/// A right-linear adjointable map between modules, stored as the ambient
/// operator `t` with `T(x) = t X`. Left linearity is what makes it bilinear
/// and is reported by [`BilinearMap::left_linearity_residual`].
#[derive(Debug, Clone)]
pub struct BilinearMap {
    source: Module,
    target: Module,
    op: CMatrix,
}

impl BilinearMap {
    /// Compresses `op` to `P_target op P_source`.
    pub fn new(source: Module, target: Module, op: CMatrix) -> Result<Self> {
        if op.shape() != (target.ambient(), source.ambient()) {
            return Err(Error::ShapeMismatch(format!(
                "operator is {:?}, need {}x{}",
                op.shape(),
                target.ambient(),
                source.ambient()
            )));
        }
        if source.right_dim() != target.right_dim() {
            return Err(Error::DimMismatch("modules over different right algebras".into()));
        }
        let op = target.project(&(op * source.projector()));
        Ok(BilinearMap { source, target, op })
    }

    pub fn identity(m: Module) -> Self {
        let op = m.projector();
        BilinearMap { source: m.clone(), target: m, op }
    }

    pub fn zero(source: Module, target: Module) -> Self {
        let op = zeros(target.ambient(), source.ambient());
        BilinearMap { source, target, op }
    }

    /// The unique map with `T(x_k) = y_k` on a spanning set of the source,
    /// by least squares; fails with `Inconsistent` when no such map exists.
    pub fn solve(source: Module, target: Module, xs: &[CMatrix], ys: &[CMatrix], tol: f64) -> Result<Self> {
        if xs.len() != ys.len() || xs.is_empty() {
            return Err(Error::ShapeMismatch("spanning sets must pair up and be nonempty".into()));
        }
        let x = hstack(xs);
        let y = hstack(ys);
        let (op, residual) = solve_right(&x, &y, RANK_TOL);
        if residual > tol {
            return Err(Error::Inconsistent { residual });
        }
        Self::new(source, target, op)
    }

    pub fn source(&self) -> &Module {
        &self.source
    }

    pub fn target(&self) -> &Module {
        &self.target
    }

    pub fn op(&self) -> &CMatrix {
        &self.op
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        &self.op * x
    }

    pub fn adjoint(&self) -> BilinearMap {
        BilinearMap { source: self.target.clone(), target: self.source.clone(), op: self.op.adjoint() }
    }

    /// `self o inner`.
    pub fn compose(&self, inner: &BilinearMap) -> BilinearMap {
        BilinearMap { source: inner.source.clone(), target: self.target.clone(), op: &self.op * &inner.op }
    }

    pub fn scale(&self, c: f64) -> BilinearMap {
        BilinearMap { op: self.op.scale(c), ..self.clone() }
    }

    pub fn norm(&self) -> f64 {
        op_norm(&self.op)
    }

    /// Matrix in the orthonormal bases `{Q e_a e_b^T}` of source and target.
    pub fn coefficients(&self) -> CMatrix {
        kron(&(self.target.range().adjoint() * &self.op * self.source.range()), &identity(self.source.right_dim()))
    }

    pub fn left_linearity_residual(&self) -> f64 {
        let n = self.source.left_dim();
        if n != self.target.left_dim() {
            return f64::INFINITY;
        }
        let q = self.source.range();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                let e = matrix_unit(n, i, j);
                let lhs = &self.op * self.source.left_action(&e, q);
                let rhs = self.target.left_action(&e, &(&self.op * q));
                worst = worst.max(max_abs(&(lhs - rhs)));
            }
        }
        worst
    }

    /// Max residual of `<T x, y> = <x, T* y>` over basis pairs.
    pub fn adjoint_residual(&self) -> f64 {
        let adj = self.adjoint();
        let mut worst = 0.0_f64;
        for x in self.source.basis() {
            for y in self.target.basis() {
                let lhs = (self.apply(&x)).adjoint() * &y;
                let rhs = x.adjoint() * adj.apply(&y);
                worst = worst.max(max_abs(&(lhs - rhs)));
            }
        }
        worst
    }

    /// Max residual of `<T x, T y> = <x, y>` on the source basis.
    pub fn isometry_residual(&self) -> f64 {
        let q = self.source.range();
        let g = q.adjoint() * self.op.adjoint() * &self.op * q;
        max_abs(&(g - identity(q.ncols())))
    }

    pub fn distance(&self, other: &BilinearMap) -> f64 {
        max_abs(&(&self.op - &other.op))
    }
}

/// `S (.) T : E (.) F -> E' (.) F'`, requires `E (.) F` and `E' (.) F'` to be
/// the modules produced by [`tensor`].
pub fn tensor_maps(s: &BilinearMap, t: &BilinearMap, source: Module, target: Module) -> Result<BilinearMap> {
    BilinearMap::new(source, target, kron(s.op(), &multiplicity_part(t)))
}

/// `R'* t R`, the action of a bilinear map on multiplicity spaces.
pub fn multiplicity_part(t: &BilinearMap) -> CMatrix {
    t.target().corner().adjoint() * t.op() * t.source().corner()
}

/// `(S (.) T) x` for ambient operators `s` and `t`, without forming `S (.) T`.
pub fn apply_tensor_maps(s: &CMatrix, t: &BilinearMap, x: &CMatrix) -> CMatrix {
    crate::numerics::kron_apply(s, &multiplicity_part(t), x)
}

/// The left action restricted to the diagonal `a -> pi(I_k (x) a)`, turning an
/// `M_k(A)`-`B` module into an `A`-`B` module. `span` selects a range inside
/// the ambient space (`None` keeps the whole range).
pub fn diagonal_restriction(f: &VnBimodule, k: usize, span: Option<&CMatrix>, tol: f64) -> Result<VnBimodule> {
    if f.left_dim() % k != 0 {
        return Err(Error::GradingMismatch(format!("left algebra M_{} is not M_{}(..)", f.left_dim(), k)));
    }
    let left = LeftRep::Diagonal { inner: Box::new(f.left.clone()), k };
    VnBimodule::new(left, f.right_dim(), span.unwrap_or(f.range()), tol)
}

/// `J = [I_d; I_d]`, realizing the class map `[x] = X J`.
pub fn corner_embedding(d: usize) -> CMatrix {
    crate::numerics::vstack(&[identity(d), identity(d)])
}

/// The corner module `F^(B)` of an `A`-`M_2(B)` module, realized as
/// `Hom(C^d, W_F)` with the same left action, via `[x] -> X J`.
pub fn corner_module(f: &VnBimodule, inner_dim: usize) -> Result<VnBimodule> {
    if f.right_dim() != 2 * inner_dim {
        return Err(Error::GradingMismatch(format!(
            "right algebra M_{} is not M_2(M_{})",
            f.right_dim(),
            inner_dim
        )));
    }
    Ok(VnBimodule { right_dim: inner_dim, ..f.clone() })
}

/// The class `[x]` of an ambient vector of an `M_2(B)` module.
pub fn corner_class(x: &CMatrix, inner_dim: usize) -> CMatrix {
    x * corner_embedding(inner_dim)
}

/// Projection onto the right submodule generated by `spanning`.
pub fn submodule_projection(e: Module, spanning: &[CMatrix], tol: f64) -> Result<BilinearMap> {
    if spanning.is_empty() {
        return Ok(BilinearMap::zero(e.clone(), e));
    }
    for s in spanning {
        if s.shape() != (e.ambient(), e.right_dim()) {
            return Err(Error::ShapeMismatch("spanning vector has the wrong shape".into()));
        }
        let residual = e.membership_residual(s);
        if residual > tol {
            return Err(Error::NotSubmodule { residual });
        }
    }
    let basis = match crate::numerics::orthonormal_span(spanning, RANK_TOL) {
        Ok(b) => b,
        Err(Error::EmptySpan) => return Ok(BilinearMap::zero(e.clone(), e)),
        Err(err) => return Err(err),
    };
    let flat: Vec<CMatrix> = basis.iter().map(crate::numerics::flatten).collect();
    let q = hstack(&flat);
    let mut residual = 0.0_f64;
    for s in spanning {
        for u in crate::numerics::matrix_units(e.right_dim()) {
            let v = crate::numerics::flatten(&(s * u));
            residual = residual.max(max_abs(&(&v - &q * (q.adjoint() * &v))));
        }
    }
    if residual > tol {
        return Err(Error::NotSubmodule { residual });
    }
    let cols = column_basis(&hstack(spanning), RANK_TOL);
    let op = &cols * cols.adjoint();
    BilinearMap::new(e.clone(), e, op)
}

/// Least-squares helper returning `pinv`-based solutions without residual
/// checks, for callers that validate separately.
pub fn pseudo_solve(x: &CMatrix, y: &CMatrix) -> CMatrix {
    y * pinv(x, RANK_TOL)
}
