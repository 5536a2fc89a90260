//! Uniformly continuous block CP semigroups on `M_2(M_d)` with generators
//! `L(A) = A beta + beta* A + sum_i Z_i* A Z_i`, where `beta` and every
//! `Z_i` are block diagonal.
//!
//! Superoperators act on row-major vectorizations, so
//! `vec(X A Y) = (X (x) Y^T) vec(A)`.

use rand::Rng;
use serde::Serialize;

use crate::blockcp::{block, extract_with_reps, lift, verify_block, ContractionReport};
use crate::cpmap::{CpMap, LinearMap, StinespringRep};
use crate::error::{Error, Result};
use crate::numerics::{
    c, direct_sum, expm, flatten, hstack, identity, kron, logm, matrix_unit, max_abs, psd_check, unflatten, zeros,
    CMatrix, PsdWitness,
};
use crate::random::{ginibre, random_hermitian};
use crate::semigroup::{extract_morphism, DiscreteQds};

/// Default sample times for positivity checks.
pub const TIME_GRID: [f64; 4] = [0.0, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGenerator {
    d: usize,
    beta1: CMatrix,
    beta2: CMatrix,
    zetas: Vec<(CMatrix, CMatrix)>,
}

pub fn build_generator(beta1: CMatrix, beta2: CMatrix, zetas: Vec<(CMatrix, CMatrix)>) -> Result<BlockGenerator> {
    let d = beta1.nrows();
    let square = |m: &CMatrix| m.shape() == (d, d);
    if !square(&beta1) || !square(&beta2) {
        return Err(Error::ShapeMismatch(format!("beta blocks must both be {d}x{d}")));
    }
    if let Some(k) = zetas.iter().position(|(a, b)| !square(a) || !square(b)) {
        return Err(Error::ShapeMismatch(format!("coupling {k} is not a pair of {d}x{d} blocks")));
    }
    Ok(BlockGenerator { d, beta1, beta2, zetas })
}

/// Superoperator of `A -> sum_i Z_i* A Z_i` scaled by `c` on its off-diagonal
/// corners; `c = 1` is the block coupling itself.
fn coupling_superoperator(couplings: &[CMatrix], dim: usize, off_diagonal: f64) -> CMatrix {
    let tau = LinearMap::from_fn(dim, |a| {
        let mut out = zeros(dim, dim);
        for z in couplings {
            out += z.adjoint() * a * z;
        }
        out
    });
    let h = dim / 2;
    let scaled = LinearMap::from_fn(dim, |a| {
        let mut out = tau.apply(a);
        for (i, j) in [(0, 1), (1, 0)] {
            let corner = block(&out, i, j, h, h).scale(off_diagonal);
            out.view_mut((i * h, j * h), (h, h)).copy_from(&corner);
        }
        out
    });
    superoperator_of(&scaled)
}

/// Matrix of a linear map on `M_n` acting on row-major vectorizations.
pub fn superoperator_of(map: &LinearMap) -> CMatrix {
    let n = map.in_dim;
    let cols: Vec<CMatrix> = (0..n * n).map(|u| flatten(map.value(u / n, u % n))).collect();
    hstack(&cols)
}

/// Linear map with the given superoperator matrix.
pub fn map_of_superoperator(s: &CMatrix, n: usize) -> LinearMap {
    LinearMap::from_fn(n, |a| unflatten(&(s * flatten(a)), n, n))
}

impl BlockGenerator {
    pub fn inner_dim(&self) -> usize {
        self.d
    }

    pub fn beta1(&self) -> &CMatrix {
        &self.beta1
    }

    pub fn beta2(&self) -> &CMatrix {
        &self.beta2
    }

    pub fn zetas(&self) -> &[(CMatrix, CMatrix)] {
        &self.zetas
    }

    pub fn beta(&self) -> CMatrix {
        direct_sum(&self.beta1, &self.beta2)
    }

    pub fn couplings(&self) -> Vec<CMatrix> {
        self.zetas.iter().map(|(a, b)| direct_sum(a, b)).collect()
    }

    /// The `(2d)^2 x (2d)^2` matrix of `L`.
    pub fn superoperator(&self) -> CMatrix {
        self.superoperator_scaled(1.0)
    }

    fn superoperator_scaled(&self, off_diagonal: f64) -> CMatrix {
        let m = 2 * self.d;
        let beta = self.beta();
        let im = identity(m);
        kron(&im, &beta.transpose()) + kron(&beta.adjoint(), &im) + coupling_superoperator(&self.couplings(), m, off_diagonal)
    }

    pub fn apply(&self, a: &CMatrix) -> CMatrix {
        let beta = self.beta();
        let mut out = a * &beta + beta.adjoint() * a;
        for z in self.couplings() {
            out += z.adjoint() * a * &z;
        }
        out
    }

    /// `|L(H) - L(H)*|` over a Hermitian basis.
    pub fn hermiticity_residual(&self) -> f64 {
        let m = 2 * self.d;
        let mut worst = 0.0_f64;
        for i in 0..m {
            for j in i..m {
                let e = matrix_unit(m, i, j);
                let sym = &e + e.adjoint();
                let anti = (&e - e.adjoint()) * c(0.0, 1.0);
                for h in [sym, anti] {
                    let l = self.apply(&h);
                    worst = worst.max(max_abs(&(&l - l.adjoint())));
                }
            }
        }
        worst
    }

    /// The coupling part `tau(A) = sum_i Z_i* A Z_i` as a CP map.
    pub fn coupling_map(&self) -> Result<CpMap> {
        let couplings = self.couplings();
        if couplings.is_empty() {
            return Ok(CpMap::zero(2 * self.d, 2 * self.d));
        }
        CpMap::from_kraus(&couplings)
    }
}

/// `e^{tL}` as a CP map; fails with `NotCp` when its Choi matrix has an
/// eigenvalue below `-tol`.
pub fn semigroup_at(gen: &BlockGenerator, t: f64, tol: f64) -> Result<CpMap> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::Invalid(format!("time {t} must be finite and nonnegative")));
    }
    let m = 2 * gen.d;
    let s = expm(&gen.superoperator().scale(t));
    let map = map_of_superoperator(&s, m);
    CpMap::from_choi(m, m, &map.choi(), tol)
}

/// Minimal Choi eigenvalue of `e^{tL}` at each time.
pub fn cp_margins(gen: &BlockGenerator, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    let m = 2 * gen.d;
    times
        .iter()
        .map(|&t| {
            let map = map_of_superoperator(&expm(&gen.superoperator().scale(t)), m);
            Ok((t, psd_check(&map.choi(), 0.0)?.min_eigenvalue))
        })
        .collect()
}

/// Choi witness of `e^{t L_c}`, where `L_c` has the off-diagonal corners of
/// its coupling part multiplied by `c`.
pub fn boundary_witness(gen: &BlockGenerator, c: f64, t: f64) -> Result<PsdWitness> {
    let m = 2 * gen.d;
    let map = map_of_superoperator(&expm(&gen.superoperator_scaled(c).scale(t)), m);
    psd_check(&map.choi(), 1e-12)
}

/// Corners of the generator together with the contraction relating the
/// coupling vectors.
#[derive(Debug, Clone)]
pub struct GeneratorCorners {
    pub l11: LinearMap,
    pub l12: LinearMap,
    pub l21: LinearMap,
    pub l22: LinearMap,
    /// Minimal Stinespring triples of the diagonal couplings `tau_11`, `tau_22`.
    pub reps: [StinespringRep; 2],
    pub report: ContractionReport,
    /// `max |L12(a) - a beta2 - beta1* a - <[z1], T a [z2]>|` over matrix units.
    pub relation_residual: f64,
    /// `max |L21(a) - L12(a*)*|`.
    pub adjoint_residual: f64,
}

fn corner_map(gen: &BlockGenerator, i: usize, j: usize) -> LinearMap {
    let d = gen.d;
    LinearMap::from_fn(d, |a| block(&gen.apply(&lift(i, j, a)), i, j, d, d))
}

pub fn generator_corners(gen: &BlockGenerator, tol: f64) -> Result<GeneratorCorners> {
    let d = gen.d;
    let tau = gen.coupling_map()?;
    let tau_block = verify_block(&tau, tol)?;
    let reps = [tau_block.phi1().minimal_stinespring(), tau_block.phi2().minimal_stinespring()];
    let (_, report) = extract_with_reps(tau_block.psi(), &reps[0], &reps[1], tol)?;
    let l11 = corner_map(gen, 0, 0);
    let l12 = corner_map(gen, 0, 1);
    let l21 = corner_map(gen, 1, 0);
    let l22 = corner_map(gen, 1, 1);
    let mut relation_residual = 0.0_f64;
    let mut adjoint_residual = 0.0_f64;
    for u in 0..d * d {
        let a = matrix_unit(d, u / d, u % d);
        let coupling = reps[0].v.adjoint() * reps[0].pi(&a) * &report.t * &reps[1].v;
        let model = &a * &gen.beta2 + gen.beta1.adjoint() * &a + coupling;
        relation_residual = relation_residual.max(max_abs(&(l12.apply(&a) - model)));
        adjoint_residual = adjoint_residual.max(max_abs(&(l21.apply(&a) - l12.apply(&a.adjoint()).adjoint())));
    }
    Ok(GeneratorCorners { l11, l12, l21, l22, reps, report, relation_residual, adjoint_residual })
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    /// `max |L12(a) - <z1, a eta_w> - a gamma_w - beta1* a|` with
    /// `gamma_w = beta2`, `eta_w = T [z2]`.
    pub identity_residual: f64,
    /// `(t, max |(psi_t(a) - a)/t - L12(a)|)` for decreasing `t`.
    pub finite_differences: Vec<(f64, f64)>,
    /// Ratios of consecutive finite-difference errors.
    pub convergence_ratios: Vec<f64>,
}

pub fn unit_derivative_check(gen: &BlockGenerator, tol: f64) -> Result<DerivativeReport> {
    let d = gen.d;
    let corners = generator_corners(gen, tol)?;
    let eta = &corners.report.t * &corners.reps[1].v;
    let gamma = gen.beta2.clone();
    let mut identity_residual = 0.0_f64;
    for u in 0..d * d {
        let a = matrix_unit(d, u / d, u % d);
        let model = corners.reps[0].v.adjoint() * corners.reps[0].pi(&a) * &eta + &a * &gamma + gen.beta1.adjoint() * &a;
        identity_residual = identity_residual.max(max_abs(&(corners.l12.apply(&a) - model)));
    }
    let steps = [1e-2, 1e-3, 1e-4];
    let sup = gen.superoperator();
    let mut finite_differences = Vec::with_capacity(steps.len());
    for &t in &steps {
        let phi = map_of_superoperator(&expm(&sup.scale(t)), 2 * d);
        let mut worst = 0.0_f64;
        for u in 0..d * d {
            let a = matrix_unit(d, u / d, u % d);
            let psi_t = block(&phi.apply(&lift(0, 1, &a)), 0, 1, d, d);
            let quotient = (psi_t - &a).scale(1.0 / t);
            worst = worst.max(max_abs(&(quotient - corners.l12.apply(&a))));
        }
        finite_differences.push((t, worst));
    }
    let convergence_ratios = finite_differences.windows(2).map(|w| w[0].1 / w[1].1.max(f64::MIN_POSITIVE)).collect();
    Ok(DerivativeReport { identity_residual, finite_differences, convergence_ratios })
}

/// Runs the discrete pipeline on the time-one map and recovers the
/// generator-level contraction from its morphism: `psi_1` is rebuilt from
/// `T_1`, its logarithm gives `L12`, the drift terms are removed, and the
/// remaining coupling corner is factored through the minimal coupling
/// modules. Returns the distance from the contraction of
/// [`generator_corners`].
pub fn skeleton_consistency(gen: &BlockGenerator, tol: f64) -> Result<f64> {
    let d = gen.d;
    let step = semigroup_at(gen, 1.0, tol)?;
    let qds = DiscreteQds::new(step, 1, tol.max(1e-9))?;
    let ex = extract_morphism(&qds, tol)?;
    let g1 = ex.incl1.unit(1);
    let g2 = ex.incl2.unit(1);
    let t1 = ex.morphism.get(1).op().clone();
    let psi1 = LinearMap::from_fn(d, |a| g1.xi.adjoint() * &t1 * g2.module.left_action(a, &g2.xi));
    let l12 = map_of_superoperator(&logm(&superoperator_of(&psi1))?, d);
    let tau12 = LinearMap::from_fn(d, |a| l12.apply(a) - a * &gen.beta2 - gen.beta1.adjoint() * a);
    let corners = generator_corners(gen, tol)?;
    let (_, recovered) = extract_with_reps(&tau12, &corners.reps[0], &corners.reps[1], tol.max(1e-7))?;
    Ok(max_abs(&(recovered.t - corners.report.t)))
}

/// Random generator with `count` couplings. With `unital` the drift is
/// `beta_i = i H_i - (1/2) sum Z^i* Z^i`, so that `L(1) = 0`.
pub fn random_generator(rng: &mut impl Rng, d: usize, count: usize, unital: bool) -> BlockGenerator {
    let scale = 0.6 / (count.max(1) as f64 * d as f64).sqrt();
    let zetas: Vec<(CMatrix, CMatrix)> =
        (0..count).map(|_| (ginibre(rng, d, d).scale(scale), ginibre(rng, d, d).scale(scale))).collect();
    let mut betas = Vec::with_capacity(2);
    for side in 0..2 {
        let h = random_hermitian(rng, d).scale(0.5) * c(0.0, 1.0);
        let drift = if unital {
            zetas.iter().fold(zeros(d, d), |acc, z| {
                let zi = if side == 0 { &z.0 } else { &z.1 };
                acc + zi.adjoint() * zi
            })
        } else {
            ginibre(rng, d, d).scale(0.3)
        };
        betas.push(h - drift.scale(0.5));
    }
    let beta2 = betas.pop().expect("two drifts");
    let beta1 = betas.pop().expect("two drifts");
    BlockGenerator { d, beta1, beta2, zetas }
}

/// Generator with `Z^1 = Z^2` and `beta1 = beta2`.
pub fn symmetric_generator(rng: &mut impl Rng, d: usize, count: usize) -> BlockGenerator {
    let mut g = random_generator(rng, d, count, true);
    g.zetas = g.zetas.iter().map(|(a, _)| (a.clone(), a.clone())).collect();
    let drift = g.zetas.iter().fold(zeros(d, d), |acc, (z, _)| acc + z.adjoint() * z);
    let h = random_hermitian(rng, d).scale(0.5) * c(0.0, 1.0);
    g.beta1 = h - drift.scale(0.5);
    g.beta2 = g.beta1.clone();
    g
}

/// `L(1)`, which vanishes for Markov generators.
pub fn unit_defect(gen: &BlockGenerator) -> f64 {
    max_abs(&gen.apply(&identity(2 * gen.d)))
}

/// Generator with zero drift and no couplings.
pub fn zero_generator(d: usize) -> BlockGenerator {
    BlockGenerator { d, beta1: zeros(d, d), beta2: zeros(d, d), zetas: Vec::new() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{matrix_units, BUILD_TOL};
    use crate::random::seeded;

    #[test]
    fn zero_generator_is_trivial() {
        let g = zero_generator(2);
        assert_eq!(max_abs(&g.superoperator()), 0.0);
        for t in [0.0, 0.7] {
            let phi = semigroup_at(&g, t, BUILD_TOL).unwrap();
            assert!(phi.to_linear().distance(&CpMap::identity(4).to_linear()) < 1e-12);
        }
        let corners = generator_corners(&g, BUILD_TOL).unwrap();
        assert!(corners.relation_residual < 1e-14);
    }

    #[test]
    fn superoperator_matches_direct_evaluation() {
        let g = random_generator(&mut seeded(1), 2, 2, false);
        let map = map_of_superoperator(&g.superoperator(), 4);
        for e in matrix_units(4) {
            assert!(max_abs(&(map.apply(&e) - g.apply(&e))) < 1e-12);
        }
        assert!(g.hermiticity_residual() < 1e-10);
    }

    #[test]
    fn unital_generator_kills_identity() {
        let g = random_generator(&mut seeded(2), 2, 2, true);
        assert!(unit_defect(&g) < 1e-12);
    }

    #[test]
    fn semigroup_law_and_block_structure() {
        let g = random_generator(&mut seeded(3), 2, 2, true);
        let half = semigroup_at(&g, 0.5, BUILD_TOL).unwrap();
        let one = semigroup_at(&g, 1.0, BUILD_TOL).unwrap();
        let composed = half.compose(&half).unwrap();
        assert!(composed.to_linear().distance(&one.to_linear()) < 1e-8);
        assert!(verify_block(&one, BUILD_TOL).is_ok());
        assert!(cp_margins(&g, &TIME_GRID).unwrap().iter().all(|&(_, m)| m > -1e-9));
    }

    #[test]
    fn corner_relation_and_derivative() {
        let g = random_generator(&mut seeded(4), 2, 2, true);
        let corners = generator_corners(&g, BUILD_TOL).unwrap();
        assert!(corners.relation_residual < 1e-8);
        assert!(corners.adjoint_residual < 1e-12);
        let r = unit_derivative_check(&g, BUILD_TOL).unwrap();
        assert!(r.identity_residual < 1e-8);
        assert!(r.finite_differences.last().unwrap().1 < 1e-3);
        assert!(r.convergence_ratios.iter().all(|&q| q > 5.0 && q < 20.0), "{:?}", r.convergence_ratios);
    }

    #[test]
    fn symmetric_coupling_gives_identity() {
        let g = symmetric_generator(&mut seeded(5), 2, 2);
        let corners = generator_corners(&g, BUILD_TOL).unwrap();
        assert!(max_abs(&(&corners.report.t - identity(corners.report.t.nrows()))) < 1e-8);
        assert!(corners.l12.distance(&corners.l11) < 1e-12);
    }

    #[test]
    fn skeleton_matches_generator() {
        let g = random_generator(&mut seeded(6), 2, 2, true);
        assert!(skeleton_consistency(&g, 1e-8).unwrap() < 1e-6);
    }

    #[test]
    fn overscaled_coupling_breaks_positivity() {
        let g = symmetric_generator(&mut seeded(7), 2, 1);
        let w = boundary_witness(&g, 1.5, 0.1).unwrap();
        assert!(!w.is_psd && w.min_eigenvalue < 0.0);
        assert!(boundary_witness(&g, 1.0, 0.1).unwrap().is_psd);
    }
}
