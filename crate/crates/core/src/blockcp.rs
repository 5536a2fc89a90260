//! Block CP maps `M_2(M_n) -> M_2(M_d)` and their off-diagonal contractions.
//!
//! Indices are block-major: row `i*n + k` of `C^2 (x) C^n`, so the block
//! projections are `E_ii (x) I_n` and the diagonal embedding is `I_2 (x) a`.
//! A block map has the shape `(phi1 psi; psi* phi2)` with CP corners; its
//! off-diagonal part factors as `psi(a) = <y1, T a y2>` through a unique
//! bilinear contraction between the minimal GNS modules of the corners.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::cpmap::{CpMap, LinearMap, StinespringRep};
use crate::error::{Error, Result};
use crate::numerics::{
    direct_sum, hstack, identity, kron, matrix_unit, max_abs, op_norm, pinv, psd_check, solve_right, zeros,
    CMatrix, PsdWitness, RANK_TOL,
};
use crate::random::{random_contraction, random_isometry, random_kraus, random_unitary};
use crate::vnmodule::{corner_class, corner_module, diagonal_restriction, gns_module, BilinearMap, Gns};

/// Slack allowed on the norm of an extracted contraction.
pub const NORM_SLACK: f64 = 1e-7;

/// The `(i, j)` block of size `rows x cols` of a block-major matrix.
pub fn block(m: &CMatrix, i: usize, j: usize, rows: usize, cols: usize) -> CMatrix {
    m.view((i * rows, j * cols), (rows, cols)).into_owned()
}

/// `E_ij (x) a`.
pub fn lift(i: usize, j: usize, a: &CMatrix) -> CMatrix {
    kron(&matrix_unit(2, i, j), a)
}

/// A CP map on `M_2(M_n)` verified to respect the block decomposition.
#[derive(Debug, Clone)]
pub struct BlockCpMap {
    n: usize,
    d: usize,
    full: CpMap,
    phi1: CpMap,
    phi2: CpMap,
    psi: LinearMap,
    leakage: f64,
}

impl BlockCpMap {
    pub fn inner_in(&self) -> usize {
        self.n
    }

    pub fn inner_out(&self) -> usize {
        self.d
    }

    pub fn full(&self) -> &CpMap {
        &self.full
    }

    pub fn phi1(&self) -> &CpMap {
        &self.phi1
    }

    pub fn phi2(&self) -> &CpMap {
        &self.phi2
    }

    pub fn psi(&self) -> &LinearMap {
        &self.psi
    }

    /// Largest corner leakage seen during verification.
    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// Residual of the `(2,1)` corner against `psi*`.
    pub fn adjoint_corner_residual(&self) -> f64 {
        let adj = self.psi.adjoint_map();
        let (n, d) = (self.n, self.d);
        (0..n * n)
            .map(|u| {
                let e = matrix_unit(n, u / n, u % n);
                let out = self.full.apply(&lift(1, 0, &e));
                max_abs(&(block(&out, 1, 0, d, d) - adj.apply(&e)))
            })
            .fold(0.0, f64::max)
    }
}

/// Maximal norm of the parts of `Phi(E_ii X E_jj)` outside the `(i, j)`
/// corner, over matrix units `X`.
pub fn block_leakage(phi: &CpMap, n: usize, d: usize) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            for u in 0..n * n {
                let out = phi.apply(&lift(i, j, &matrix_unit(n, u / n, u % n)));
                for p in 0..2 {
                    for q in 0..2 {
                        if (p, q) != (i, j) {
                            worst = worst.max(max_abs(&block(&out, p, q, d, d)));
                        }
                    }
                }
            }
        }
    }
    worst
}

/// Leakage of a CP map with respect to arbitrary projections `p` (domain)
/// and `q` (codomain): the largest part of `Phi(p1 X p2)` outside
/// `q1 M q2`, where `p1, p2 in {p, 1-p}` and `q1, q2` correspond.
pub fn general_block_leakage(phi: &CpMap, p: &CMatrix, q: &CMatrix) -> f64 {
    let (n, d) = (phi.in_dim(), phi.out_dim());
    let ps = [p.clone(), identity(n) - p];
    let qs = [q.clone(), identity(d) - q];
    let mut worst = 0.0_f64;
    for i in 0..2 {
        for j in 0..2 {
            for u in 0..n * n {
                let x = &ps[i] * matrix_unit(n, u / n, u % n) * &ps[j];
                let out = phi.apply(&x);
                let inside = &qs[i] * &out * &qs[j];
                worst = worst.max(max_abs(&(out - inside)));
            }
        }
    }
    worst
}

/// Checks the block property of `phi: M_2n -> M_2d` and extracts the corners.
pub fn verify_block(phi: &CpMap, tol: f64) -> Result<BlockCpMap> {
    let (n2, d2) = (phi.in_dim(), phi.out_dim());
    if n2 % 2 != 0 || d2 % 2 != 0 {
        return Err(Error::GradingMismatch(format!("M_{n2} -> M_{d2} is not a map between 2x2 block algebras")));
    }
    let witness = phi.is_cp(tol);
    if !witness.is_psd {
        return Err(Error::NotCp { min_eigenvalue: witness.min_eigenvalue });
    }
    let (n, d) = (n2 / 2, d2 / 2);
    let leakage = block_leakage(phi, n, d);
    if leakage > tol {
        return Err(Error::NotBlock { leakage });
    }
    let corner = |i: usize, j: usize| LinearMap::from_fn(n, |a| block(&phi.apply(&lift(i, j, a)), i, j, d, d));
    let phi1 = CpMap::from_choi(n, d, &corner(0, 0).choi(), tol)?;
    let phi2 = CpMap::from_choi(n, d, &corner(1, 1).choi(), tol)?;
    let psi = corner(0, 1);
    let out = BlockCpMap { n, d, full: phi.clone(), phi1, phi2, psi, leakage };
    let adj = out.adjoint_corner_residual();
    if adj > tol {
        return Err(Error::NotBlock { leakage: adj });
    }
    Ok(out)
}

/// The linear map `(phi1 psi; psi* phi2)` without any positivity check.
pub fn assemble(phi1: &LinearMap, phi2: &LinearMap, psi: &LinearMap) -> LinearMap {
    let n = phi1.in_dim;
    let psi_adj = psi.adjoint_map();
    LinearMap::from_fn(2 * n, |a| {
        let blocks = [
            phi1.apply(&block(a, 0, 0, n, n)),
            psi.apply(&block(a, 0, 1, n, n)),
            psi_adj.apply(&block(a, 1, 0, n, n)),
            phi2.apply(&block(a, 1, 1, n, n)),
        ];
        let d = blocks[0].nrows();
        let mut out = zeros(2 * d, 2 * d);
        for (k, b) in blocks.iter().enumerate() {
            out.view_mut(((k / 2) * d, (k % 2) * d), (d, d)).copy_from(b);
        }
        out
    })
}

/// Choi positivity of the assembled block map.
pub fn assembled_psd(phi1: &LinearMap, phi2: &LinearMap, psi: &LinearMap, tol: f64) -> Result<PsdWitness> {
    psd_check(&assemble(phi1, phi2, psi).choi(), tol)
}

/// Result of [`build_from_contraction`], with the two CP summands of the
/// positivity argument kept for inspection.
#[derive(Debug, Clone)]
pub struct BlockConstruction {
    pub block: BlockCpMap,
    pub summand_compressed: PsdWitness,
    pub summand_defect: PsdWitness,
    pub full_choi: PsdWitness,
}

/// Assembles `(phi1 psi; psi* phi2)` with `psi(a) = <x1, T a x2>`.
///
/// The map is written as `Z* pi~(A) Z + diag(0, <x2, a22 (1 - T*T) x2>)`
/// with `Z = diag(x1, T x2)`; both summands are checked separately.
pub fn build_from_contraction(gns1: &Gns, gns2: &Gns, t: &BilinearMap, tol: f64) -> Result<BlockConstruction> {
    let norm = t.norm();
    if norm > 1.0 + tol {
        return Err(Error::NotContraction { norm });
    }
    let bilinear = t.left_linearity_residual();
    if bilinear > tol {
        return Err(Error::NotBilinear { residual: bilinear });
    }
    let (e1, e2) = (&gns1.module, &gns2.module);
    if t.op().shape() != (e1.ambient(), e2.ambient()) {
        return Err(Error::ShapeMismatch("contraction does not act between the given GNS modules".into()));
    }
    let n = e1.left_dim();
    let d = e1.right_dim();
    if e2.left_dim() != n || e2.right_dim() != d {
        return Err(Error::DimMismatch("corner maps act between different algebras".into()));
    }
    let (x1, x2, top) = (&gns1.xi, &gns2.xi, t.op());
    let z = direct_sum(x1, &(top * x2));
    let summand1 = LinearMap::from_fn(2 * n, |a| {
        let mut pa = zeros(2 * e1.ambient(), 2 * e1.ambient());
        for i in 0..2 {
            for j in 0..2 {
                pa += kron(&matrix_unit(2, i, j), &e1.left_rep().matrix(&block(a, i, j, n, n)));
            }
        }
        z.adjoint() * pa * &z
    });
    let defect = e2.projector() - top.adjoint() * top;
    let summand2 = LinearMap::from_fn(2 * n, |a| {
        let inner = x2.adjoint() * e2.left_action(&block(a, 1, 1, n, n), &(&defect * x2));
        direct_sum(&zeros(d, d), &inner)
    });
    let c1 = summand1.choi();
    let c2 = summand2.choi();
    let w1 = psd_check(&c1, tol)?;
    let w2 = psd_check(&c2, tol)?;
    let choi = c1 + c2;
    let full_choi = psd_check(&choi, tol)?;
    let full = CpMap::from_choi(2 * n, 2 * d, &choi, tol)?;
    let block = verify_block(&full, tol.max(1e-9))?;
    Ok(BlockConstruction { block, summand_compressed: w1, summand_defect: w2, full_choi })
}

/// Output of either extraction algorithm. `t` is the ambient operator of the
/// contraction between the minimal GNS modules `C^n (x) C^{r_i}`.
#[derive(Debug, Clone, Serialize)]
pub struct ContractionReport {
    #[serde(serialize_with = "crate::json::serialize_matrix")]
    pub t: CMatrix,
    pub operator_norm: f64,
    pub intertwining_residual: f64,
    pub reconstruction_residual: f64,
    pub solve_residual: f64,
}

impl ContractionReport {
    pub fn distance(&self, other: &ContractionReport) -> f64 {
        if self.t.shape() != other.t.shape() {
            return f64::INFINITY;
        }
        max_abs(&(&self.t - &other.t))
    }
}

fn intertwining_residual(t: &CMatrix, n: usize, r1: usize, r2: usize) -> f64 {
    let mut worst = 0.0_f64;
    for u in 0..n * n {
        let e = matrix_unit(n, u / n, u % n);
        let lhs = kron(&e, &identity(r1)) * t;
        let rhs = t * kron(&e, &identity(r2));
        worst = worst.max(max_abs(&(lhs - rhs)));
    }
    worst
}

fn reconstruction_residual(psi: &LinearMap, rep1: &StinespringRep, rep2: &StinespringRep, t: &CMatrix) -> f64 {
    let n = psi.in_dim;
    (0..n * n)
        .map(|u| {
            let e = matrix_unit(n, u / n, u % n);
            let model = rep1.v.adjoint() * rep1.pi(&e) * t * &rep2.v;
            max_abs(&(psi.apply(&e) - model))
        })
        .fold(0.0, f64::max)
}

/// Solution of the intertwiner system for `S` with `T = I_n (x) S`, returning
/// `(S, residual)` without norm checks. Equations are taken in `order`.
fn solve_multiplicity(psi: &LinearMap, rep1: &StinespringRep, rep2: &StinespringRep, order: &[usize]) -> (CMatrix, f64) {
    let (n, d, r1, r2) = (rep1.n, rep1.d, rep1.r, rep2.r);
    if r1 == 0 || r2 == 0 {
        let residual = (0..n * n).map(|u| max_abs(psi.value(u / n, u % n))).fold(0.0, f64::max);
        return (zeros(r1, r2), residual);
    }
    let rows = n * n * d * d;
    let mut m = zeros(rows, r1 * r2);
    let mut y = zeros(rows, 1);
    for (row, &eq) in order.iter().enumerate() {
        let (kl, ab) = (eq / (d * d), eq % (d * d));
        let (k, l, a, b) = (kl / n, kl % n, ab / d, ab % d);
        y[(row, 0)] = psi.value(k, l)[(a, b)];
        for al in 0..r1 {
            let left = rep1.v[(k * r1 + al, a)].conj();
            for be in 0..r2 {
                m[(row, al * r2 + be)] = left * rep2.v[(l * r2 + be, b)];
            }
        }
    }
    let s = pinv(&m, RANK_TOL) * &y;
    let residual = max_abs(&(&m * &s - &y));
    (CMatrix::from_fn(r1, r2, |al, be| s[(al * r2 + be, 0)]), residual)
}

/// Intertwiner `T = I_n (x) S` with `psi(a) = V1* pi1(a) T V2` for the given
/// Stinespring representations of the corners.
pub fn extract_with_reps(
    psi: &LinearMap,
    rep1: &StinespringRep,
    rep2: &StinespringRep,
    tol: f64,
) -> Result<(CMatrix, ContractionReport)> {
    let n = rep1.n;
    let d = rep1.d;
    let order: Vec<usize> = (0..n * n * d * d).collect();
    extract_ordered(psi, rep1, rep2, &order, tol)
}

fn extract_ordered(
    psi: &LinearMap,
    rep1: &StinespringRep,
    rep2: &StinespringRep,
    order: &[usize],
    tol: f64,
) -> Result<(CMatrix, ContractionReport)> {
    let (s, solve_residual) = solve_multiplicity(psi, rep1, rep2, order);
    if solve_residual > tol {
        return Err(Error::Inconsistent { residual: solve_residual });
    }
    let t = kron(&identity(rep1.n), &s);
    let operator_norm = op_norm(&s);
    if operator_norm > 1.0 + NORM_SLACK {
        return Err(Error::NormExceeded { norm: operator_norm });
    }
    let report = ContractionReport {
        intertwining_residual: intertwining_residual(&t, rep1.n, rep1.r, rep2.r),
        reconstruction_residual: reconstruction_residual(psi, rep1, rep2, &t),
        t,
        operator_norm,
        solve_residual,
    };
    Ok((s, report))
}

/// Stinespring-form extraction against the minimal representations.
pub fn extract_contraction_stinespring(block: &BlockCpMap, tol: f64) -> Result<ContractionReport> {
    let rep1 = block.phi1.minimal_stinespring();
    let rep2 = block.phi2.minimal_stinespring();
    extract_with_reps(&block.psi, &rep1, &rep2, tol).map(|(_, r)| r)
}

/// Intermediate quantities of the module-form extraction.
#[derive(Debug, Clone, Serialize)]
pub struct ModuleTrace {
    /// `|x - x1 - x2|`.
    pub split_residual: f64,
    /// Unitarity defect of `[w] -> [E_12 w]`.
    pub unitary_residual: f64,
    /// Isometry defect of the identifications of `F_i` with `span A [x_i] B`.
    pub isometry_residual: f64,
    /// Residual of the linear systems defining those identifications.
    pub identification_residual: f64,
    pub corner_dims: [usize; 2],
}

/// Module-form extraction following the corner-module argument.
///
/// `E` is the GNS module of the full map with vector `x`; `E_i = pi(E_ii) E`,
/// `x_i = E_ii x E_ii`. The corners `E_i^(B)` carry the unitary
/// `U [w] = [E_12 w]` and `T = V1* U V2`, where `V_i` identifies the minimal
/// GNS module of `phi_i` with `span A [x_i] B`.
pub fn extract_contraction_module(block: &BlockCpMap, tol: f64) -> Result<(ContractionReport, ModuleTrace)> {
    let (n, d) = (block.n, block.d);
    let gns = gns_module(&block.full);
    let e = gns.module.clone();
    let x = &gns.xi;
    let proj = |i: usize| e.left_rep().matrix(&lift(i, i, &identity(n)));
    let pi = [proj(0), proj(1)];
    let xs: Vec<CMatrix> = (0..2).map(|i| &pi[i] * x * lift(i, i, &identity(d))).collect();
    let split_residual = max_abs(&(x - &xs[0] - &xs[1]));
    if split_residual > tol {
        return Err(Error::NotBlock { leakage: split_residual });
    }
    let mut corners = Vec::with_capacity(2);
    for p in &pi {
        let hat = diagonal_restriction(&e, 2, Some(&(p * e.range())), tol)?;
        corners.push(Arc::new(corner_module(&hat, d)?));
    }
    let classes: Vec<CMatrix> = xs.iter().map(|xi| corner_class(xi, d)).collect();

    let e12 = e.left_rep().matrix(&lift(0, 1, &identity(n)));
    let u = &e12 * corners[1].projector();
    let q2 = corners[1].range();
    let q1 = corners[0].range();
    let unitary_residual = if q1.ncols() == q2.ncols() {
        let uq = &u * q2;
        max_abs(&(uq.adjoint() * &uq - identity(q2.ncols())))
            .max(max_abs(&(q1.adjoint() * &uq * uq.adjoint() * q1 - identity(q1.ncols()))))
    } else {
        f64::INFINITY
    };

    let minimal = [gns_module(&block.phi1), gns_module(&block.phi2)];
    let mut vs = Vec::with_capacity(2);
    let mut isometry_residual = 0.0_f64;
    let mut identification_residual = 0.0_f64;
    for i in 0..2 {
        let f = &minimal[i];
        if f.module.ambient() == 0 {
            vs.push(zeros(e.ambient(), 0));
            continue;
        }
        let mut src = Vec::with_capacity(n * n);
        let mut dst = Vec::with_capacity(n * n);
        for w in 0..n * n {
            let a = matrix_unit(n, w / n, w % n);
            src.push(f.module.left_action(&a, &f.xi));
            dst.push(corners[i].left_action(&a, &classes[i]));
        }
        let (v, residual) = solve_right(&hstack(&src), &hstack(&dst), RANK_TOL);
        identification_residual = identification_residual.max(residual);
        isometry_residual = isometry_residual.max(max_abs(&(v.adjoint() * &v - identity(v.ncols()))));
        vs.push(v);
    }
    if identification_residual > tol {
        return Err(Error::Inconsistent { residual: identification_residual });
    }
    let t = vs[0].adjoint() * &u * &vs[1];
    let operator_norm = op_norm(&t);
    let rep1 = block.phi1.minimal_stinespring();
    let rep2 = block.phi2.minimal_stinespring();
    let report = ContractionReport {
        intertwining_residual: intertwining_residual(&t, n, rep1.r, rep2.r),
        reconstruction_residual: reconstruction_residual(&block.psi, &rep1, &rep2, &t),
        t,
        operator_norm,
        solve_residual: identification_residual,
    };
    let trace = ModuleTrace {
        split_residual,
        unitary_residual,
        isometry_residual,
        identification_residual,
        corner_dims: [corners[0].dim(), corners[1].dim()],
    };
    Ok((report, trace))
}

/// Reruns the Stinespring extraction with unitarily rotated multiplicity
/// spaces and shuffled equation orders; returns the largest deviation of the
/// rotated-back contraction from the baseline.
pub fn uniqueness_probe(block: &BlockCpMap, trials: usize, rng: &mut impl Rng, tol: f64) -> Result<f64> {
    let rep1 = block.phi1.minimal_stinespring();
    let rep2 = block.phi2.minimal_stinespring();
    let (base, _) = extract_with_reps(&block.psi, &rep1, &rep2, tol)?;
    let (n, d) = (block.n, block.d);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let u1 = if rep1.r > 0 { random_unitary(rng, rep1.r) } else { zeros(0, 0) };
        let u2 = if rep2.r > 0 { random_unitary(rng, rep2.r) } else { zeros(0, 0) };
        let rot1 = rotate(&rep1, &u1);
        let rot2 = rotate(&rep2, &u2);
        let mut order: Vec<usize> = (0..n * n * d * d).collect();
        for k in (1..order.len()).rev() {
            order.swap(k, rng.random_range(0..=k));
        }
        let (s, _) = extract_ordered(&block.psi, &rot1, &rot2, &order, tol)?;
        let back = u1.adjoint() * s * &u2;
        worst = worst.max(max_abs(&(back - &base)));
    }
    Ok(worst)
}

/// `V -> (I_n (x) W) V` for an isometry `W: C^r -> C^r'`.
pub fn rotate(rep: &StinespringRep, w: &CMatrix) -> StinespringRep {
    StinespringRep { n: rep.n, d: rep.d, r: w.nrows(), v: kron(&identity(rep.n), w) * &rep.v }
}

/// Outcome of the padding experiment on a non-minimal representation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PaddedProbe {
    /// Deviation between two valid intertwiners on the padded spaces.
    pub uncompressed: f64,
    /// Deviation after compressing both to the cyclic subspaces.
    pub compressed: f64,
}

/// Embeds each multiplicity space into one `pad` dimensions larger and
/// compares two intertwiners that differ by a block on the complements.
pub fn padded_probe(block: &BlockCpMap, pad: usize, rng: &mut impl Rng, tol: f64) -> Result<PaddedProbe> {
    let rep1 = block.phi1.minimal_stinespring();
    let rep2 = block.phi2.minimal_stinespring();
    let w1 = random_isometry(rng, rep1.r + pad, rep1.r);
    let w2 = random_isometry(rng, rep2.r + pad, rep2.r);
    let p1 = rotate(&rep1, &w1);
    let p2 = rotate(&rep2, &w2);
    let (s, _) = extract_with_reps(&block.psi, &p1, &p2, tol)?;
    let c1 = identity(p1.r) - &w1 * w1.adjoint();
    let c2 = identity(p2.r) - &w2 * w2.adjoint();
    let other = &s + &c1 * random_contraction(rng, p1.r, p2.r, 1.0) * &c2;
    let residual = reconstruction_residual(&block.psi, &p1, &p2, &kron(&identity(block.n), &other));
    if residual > tol {
        return Err(Error::Inconsistent { residual });
    }
    let k1 = &w1 * w1.adjoint();
    let k2 = &w2 * w2.adjoint();
    Ok(PaddedProbe {
        uncompressed: max_abs(&(&other - &s)),
        compressed: max_abs(&(&k1 * (&other - &s) * &k2)),
    })
}

/// A randomly generated block instance together with its ground truth.
#[derive(Debug, Clone)]
pub struct BlockInstance {
    pub phi1: CpMap,
    pub phi2: CpMap,
    /// Multiplicity part `S` of the true contraction `I_n (x) S`.
    pub s: CMatrix,
    pub construction: BlockConstruction,
}

impl BlockInstance {
    pub fn true_t(&self) -> CMatrix {
        kron(&identity(self.phi1.in_dim()), &self.s)
    }

    pub fn block(&self) -> &BlockCpMap {
        &self.construction.block
    }
}

/// Random corners with `kraus` Kraus operators each and a random contraction
/// of norm `norm` between their minimal GNS modules.
pub fn random_block_instance(rng: &mut impl Rng, n: usize, d: usize, kraus: usize, norm: f64, tol: f64) -> Result<BlockInstance> {
    let phi1 = CpMap::from_kraus(&random_kraus(rng, n, d, kraus))?;
    let phi2 = CpMap::from_kraus(&random_kraus(rng, n, d, kraus))?;
    let g1 = gns_module(&phi1);
    let g2 = gns_module(&phi2);
    let r1 = g1.module.multiplicity();
    let r2 = g2.module.multiplicity();
    let s = random_contraction(rng, r1, r2, norm);
    let t = BilinearMap::new(g2.module.clone(), g1.module.clone(), kron(&identity(n), &s))?;
    let construction = build_from_contraction(&g1, &g2, &t, tol)?;
    Ok(BlockInstance { phi1, phi2, s, construction })
}

/// The bilinear map `c * id` on a GNS module, for the scaling family.
pub fn scaled_identity(gns: &Gns, c: f64) -> BilinearMap {
    BilinearMap::identity(gns.module.clone()).scale(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::BUILD_TOL;
    use crate::random::seeded;

    #[test]
    fn identity_is_block_with_identity_corners() {
        let b = verify_block(&CpMap::identity(4), BUILD_TOL).unwrap();
        let id = CpMap::identity(2);
        assert!(b.phi1().to_linear().distance(&id.to_linear()) < 1e-12);
        assert!(b.phi2().to_linear().distance(&id.to_linear()) < 1e-12);
        assert!(b.psi().distance(&id.to_linear()) < 1e-12);
    }

    #[test]
    fn diagonal_compression_has_zero_corner() {
        let p = lift(0, 0, &identity(2));
        let q = lift(1, 1, &identity(2));
        let phi = CpMap::from_kraus(&[p, q]).unwrap();
        let b = verify_block(&phi, BUILD_TOL).unwrap();
        assert!(b.psi().distance(&LinearMap::zero(2, 2, 2)) < 1e-12);
    }

    #[test]
    fn non_block_map_is_rejected() {
        let mut rng = seeded(3);
        let phi = CpMap::from_kraus(&random_kraus(&mut rng, 4, 4, 2)).unwrap();
        assert!(matches!(verify_block(&phi, BUILD_TOL), Err(Error::NotBlock { .. })));
    }

    #[test]
    fn identity_extracts_identity() {
        let b = verify_block(&CpMap::identity(4), BUILD_TOL).unwrap();
        let r = extract_contraction_stinespring(&b, BUILD_TOL).unwrap();
        assert!(max_abs(&(&r.t - identity(2))) < 1e-10);
        let (m, trace) = extract_contraction_module(&b, BUILD_TOL).unwrap();
        assert!(max_abs(&(&m.t - identity(2))) < 1e-9);
        assert!((m.operator_norm - 1.0).abs() < 1e-9);
        assert!(m.reconstruction_residual < 1e-9);
        assert!(trace.unitary_residual < 1e-9);
    }

    #[test]
    fn scaling_family_positivity() {
        let mut rng = seeded(21);
        let phi = CpMap::from_kraus(&random_kraus(&mut rng, 2, 2, 2)).unwrap();
        let lin = phi.to_linear();
        let mins: Vec<f64> = [0.5, 1.0, 1.25]
            .iter()
            .map(|&c| assembled_psd(&lin, &lin, &lin.scale(c), 1e-9).unwrap().min_eigenvalue)
            .collect();
        assert!(mins[0] > -1e-9 && mins[1] > -1e-9);
        assert!(mins[2] < -1e-3);
    }

    #[test]
    fn build_rejects_expanding_map() {
        let mut rng = seeded(22);
        let phi = CpMap::from_kraus(&random_kraus(&mut rng, 2, 2, 2)).unwrap();
        let g = gns_module(&phi);
        let err = build_from_contraction(&g, &g, &scaled_identity(&g, 1.25), BUILD_TOL).unwrap_err();
        assert!(matches!(err, Error::NotContraction { .. }));
    }

    #[test]
    fn zero_contraction_gives_diagonal_map() {
        let mut rng = seeded(23);
        let phi = CpMap::from_kraus(&random_kraus(&mut rng, 2, 3, 2)).unwrap();
        let g = gns_module(&phi);
        let built = build_from_contraction(&g, &g, &scaled_identity(&g, 0.0), BUILD_TOL).unwrap();
        assert!(built.block.psi().distance(&LinearMap::zero(2, 3, 3)) < 1e-12);
        let r = extract_contraction_stinespring(&built.block, BUILD_TOL).unwrap();
        assert!(max_abs(&r.t) < 1e-10);
    }

    #[test]
    fn random_round_trip_both_algorithms() {
        let mut rng = seeded(24);
        let inst = random_block_instance(&mut rng, 2, 3, 2, 0.8, BUILD_TOL).unwrap();
        let s = extract_contraction_stinespring(inst.block(), BUILD_TOL).unwrap();
        let (m, _) = extract_contraction_module(inst.block(), 1e-8).unwrap();
        assert!(max_abs(&(&s.t - inst.true_t())) < 1e-7);
        assert!(s.distance(&m) < 1e-7);
    }

    #[test]
    fn inconsistent_corner_is_detected() {
        let mut rng = seeded(25);
        let inst = random_block_instance(&mut rng, 2, 2, 1, 0.5, BUILD_TOL).unwrap();
        let bogus = LinearMap::from_fn(2, |a| a.clone());
        let rep1 = inst.phi1.minimal_stinespring();
        let rep2 = inst.phi2.minimal_stinespring();
        let err = extract_with_reps(&bogus, &rep1, &rep2, BUILD_TOL).unwrap_err();
        assert!(matches!(err, Error::Inconsistent { .. }));
    }

    #[test]
    fn expanding_corner_reports_norm() {
        let mut rng = seeded(26);
        let phi = CpMap::from_kraus(&random_kraus(&mut rng, 2, 2, 2)).unwrap();
        let rep = phi.minimal_stinespring();
        let err = extract_with_reps(&phi.to_linear().scale(1.5), &rep, &rep, BUILD_TOL).unwrap_err();
        match err {
            Error::NormExceeded { norm } => assert!((norm - 1.5).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn general_leakage_matches_block_leakage() {
        let b = CpMap::identity(4);
        let p = lift(0, 0, &identity(2));
        assert!(general_block_leakage(&b, &p, &p) < 1e-14);
        let swap = kron(&CMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0].map(crate::numerics::cr)), &identity(2));
        let flip = CpMap::conjugation(&swap);
        assert!(general_block_leakage(&flip, &p, &p) > 0.5);
    }
}
