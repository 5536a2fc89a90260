//! Finite-horizon realization of the endomorphism dilation of a unital
//! block semigroup.
//!
//! Operators on the limit module are represented at a level `s` as
//! operators on `E_s`; `theta_t(a) = a (.) id_{E_t}` moves them to level
//! `s + t`, and `j0(b) = |xi_s> b <xi_s|`. Every identity is checked at
//! matched levels `s + t <= N`.

use rand::Rng;
use serde::Serialize;

use crate::blockcp::general_block_leakage;
use crate::error::{Error, Result};
use crate::numerics::{identity, kron, max_abs, psd_check, CMatrix};
use crate::prodsys::{generate, ProductSystem};
use crate::random::ginibre;
use crate::semigroup::{inclusion_system, DiscreteQds};
use crate::vnmodule::tensor_vectors;

/// Product system of a unital block semigroup together with a projection
/// `p` of the base algebra that the step respects.
#[derive(Debug, Clone)]
pub struct DilationHorizon {
    qds: DiscreteQds,
    ps: ProductSystem,
    p: CMatrix,
}

impl DilationHorizon {
    pub fn new(qds: &DiscreteQds, p: &CMatrix, tol: f64) -> Result<Self> {
        let m = qds.dim();
        if p.shape() != (m, m) {
            return Err(Error::ShapeMismatch(format!("projection must be {m}x{m}")));
        }
        let proj_residual = max_abs(&(p * p - p)).max(max_abs(&(p.adjoint() - p)));
        if proj_residual > tol {
            return Err(Error::Invalid(format!("p is not a projection (residual {proj_residual:.3e})")));
        }
        let unital = max_abs(&(qds.step().apply(&identity(m)) - identity(m)));
        if unital > tol {
            return Err(Error::NotUnital { residual: unital });
        }
        let leakage = general_block_leakage(qds.step(), p, p);
        if leakage > tol {
            return Err(Error::NotBlock { leakage });
        }
        let incl = inclusion_system(qds, tol)?;
        let ps = generate(&incl)?;
        Ok(DilationHorizon { qds: qds.clone(), ps, p: p.clone() })
    }

    pub fn horizon(&self) -> usize {
        self.ps.horizon()
    }

    pub fn product_system(&self) -> &ProductSystem {
        &self.ps
    }

    pub fn projection(&self) -> &CMatrix {
        &self.p
    }

    pub fn complement(&self) -> CMatrix {
        identity(self.p.nrows()) - &self.p
    }

    fn guard(&self, level: usize) -> Result<()> {
        if level > self.horizon() {
            return Err(Error::HorizonExceeded { needed: level, available: self.horizon() });
        }
        Ok(())
    }

    /// `theta_t(a)` for an operator `a` on `E_s`, as an operator on `E_{s+t}`.
    pub fn theta(&self, a: &CMatrix, s: usize, t: usize) -> Result<CMatrix> {
        self.guard(s + t)?;
        let k = self.ps.fiber(s).ambient();
        if a.shape() != (k, k) {
            return Err(Error::ShapeMismatch(format!("operator on E_{s} must be {k}x{k}")));
        }
        Ok(kron(a, &identity(self.ps.fiber(t).multiplicity())))
    }

    /// `|xi_s> b <xi_s|` on `E_s`.
    pub fn j0(&self, b: &CMatrix, s: usize) -> Result<CMatrix> {
        self.guard(s)?;
        let xi = self.ps.unit(s);
        Ok(xi * b * xi.adjoint())
    }

    /// `k_{s->t}(x) = xi_{t-s} (.) x`.
    pub fn embed(&self, x: &CMatrix, s: usize, t: usize) -> Result<CMatrix> {
        self.guard(t)?;
        if s > t {
            return Err(Error::Invalid(format!("cannot embed level {s} into level {t}")));
        }
        Ok(tensor_vectors(self.ps.fiber(s), self.ps.unit(t - s), x))
    }

    /// Left action of `b` on `E_s`, the level-`s` picture of `Q_0(b)`.
    pub fn left(&self, b: &CMatrix, s: usize) -> CMatrix {
        self.ps.fiber(s).left_rep().matrix(b)
    }

    /// Random element of `E_s`.
    pub fn random_vector(&self, rng: &mut impl Rng, s: usize) -> CMatrix {
        let f = self.ps.fiber(s);
        f.project(&ginibre(rng, f.ambient(), f.right_dim()))
    }

    /// Random operator on `E_s`.
    pub fn random_operator(&self, rng: &mut impl Rng, s: usize) -> CMatrix {
        let k = self.ps.fiber(s).ambient();
        ginibre(rng, k, k)
    }

    /// `|j0(1) theta_t(j0(x)) j0(1) - j0(phi_t(x))|` at level `s + t`.
    pub fn markov_residual(&self, x: &CMatrix, s: usize, t: usize) -> Result<f64> {
        self.guard(s + t)?;
        let one = identity(self.p.nrows());
        let j1 = self.j0(&one, s + t)?;
        let lhs = &j1 * self.theta(&self.j0(x, s)?, s, t)? * &j1;
        let rhs = self.j0(&self.ps.inclusion_system().map(t).apply(x), s + t)?;
        Ok(max_abs(&(lhs - rhs)))
    }

    /// Largest Markov residual over random `x` and all `s + t <= N`.
    pub fn markov_sweep(&self, rng: &mut impl Rng, samples: usize) -> Result<Vec<MarkovEntry>> {
        let m = self.p.nrows();
        let n = self.horizon();
        let mut out = Vec::new();
        for s in 0..=n {
            for t in 0..=n - s {
                let mut worst = 0.0_f64;
                for _ in 0..samples {
                    worst = worst.max(self.markov_residual(&ginibre(rng, m, m), s, t)?);
                }
                out.push(MarkovEntry { s, t, residual: worst });
            }
        }
        Ok(out)
    }

    /// Unitality, multiplicativity, *-preservation and the semigroup law of
    /// `theta` on random operators.
    pub fn theta_report(&self, rng: &mut impl Rng, samples: usize) -> Result<ThetaReport> {
        let n = self.horizon();
        let mut out = ThetaReport::default();
        for s in 0..=n {
            let k = self.ps.fiber(s).ambient();
            for t in 0..=n - s {
                out.unital = out.unital.max(max_abs(&(self.theta(&identity(k), s, t)? - identity(self.ps.fiber(s + t).ambient()))));
                for _ in 0..samples {
                    let a = self.random_operator(rng, s);
                    let b = self.random_operator(rng, s);
                    let ta = self.theta(&a, s, t)?;
                    let tb = self.theta(&b, s, t)?;
                    out.multiplicative = out.multiplicative.max(max_abs(&(self.theta(&(&a * &b), s, t)? - &ta * &tb)));
                    out.adjoint = out.adjoint.max(max_abs(&(self.theta(&a.adjoint(), s, t)? - ta.adjoint())));
                    for u in 0..=n - s - t {
                        let twice = self.theta(&ta, s + t, u)?;
                        out.semigroup = out.semigroup.max(max_abs(&(twice - self.theta(&a, s, t + u)?)));
                    }
                }
            }
        }
        Ok(out)
    }

    /// `Q_s(q) = theta_{N-s}(j0(q, s))` on `E_N` for `s = N, ..., 0`.
    pub fn chain(&self, q: &CMatrix) -> Result<Vec<CMatrix>> {
        let n = self.horizon();
        (0..=n).rev().map(|s| self.theta(&self.j0(q, s)?, s, n - s)).collect()
    }

    pub fn increasing_projections(&self, q: &CMatrix) -> Result<ChainReport> {
        let chain = self.chain(q)?;
        let mut projection_residual = 0.0_f64;
        for c in &chain {
            projection_residual = projection_residual.max(max_abs(&(c * c - c))).max(max_abs(&(c.adjoint() - c)));
        }
        let mut margins = Vec::with_capacity(chain.len().saturating_sub(1));
        for w in chain.windows(2) {
            margins.push(psd_check(&(&w[1] - &w[0]), 1e-9)?.min_eigenvalue);
        }
        let terminal = chain.last().expect("chain has N+1 entries");
        let terminal_residual = max_abs(&(terminal - self.left(q, self.horizon())));
        Ok(ChainReport { margins, projection_residual, terminal_residual })
    }

    /// `Q_s(p) + Q_s(p') = Q_s(1)` for every `s`, and `P P' = 0`, `P + P' = 1`
    /// for `P = Q_0(p)`.
    pub fn complementarity_residual(&self) -> Result<f64> {
        let m = self.p.nrows();
        let cp = self.chain(&self.p)?;
        let cq = self.chain(&self.complement())?;
        let c1 = self.chain(&identity(m))?;
        let mut worst = 0.0_f64;
        for ((a, b), c) in cp.iter().zip(&cq).zip(&c1) {
            worst = worst.max(max_abs(&(a + b - c)));
        }
        let big_p = cp.last().expect("nonempty");
        let big_q = cq.last().expect("nonempty");
        worst = worst.max(max_abs(&(big_p * big_q)));
        worst = worst.max(max_abs(&(big_p + big_q - identity(big_p.nrows()))));
        Ok(worst)
    }

    /// Max deviation of `Q_s(q) k_{t->N}(x)` over `s <= N - t` from `q x`.
    pub fn stabilization_residual(&self, q: &CMatrix, x: &CMatrix, t: usize) -> Result<f64> {
        let n = self.horizon();
        self.guard(t)?;
        let y = self.embed(x, t, n)?;
        let reference = self.left(q, n) * &y;
        let mut worst = 0.0_f64;
        for s in 0..=n - t {
            let qs = self.theta(&self.j0(q, s)?, s, n - s)?;
            worst = worst.max(max_abs(&(qs * &y - &reference)));
        }
        Ok(worst)
    }

    /// `p xi_t = xi_t p = p xi_t p` at every level, for `q` in `{p, p'}`.
    pub fn unit_identity_residual(&self) -> f64 {
        let mut worst = 0.0_f64;
        for q in [self.p.clone(), self.complement()] {
            for t in 0..=self.horizon() {
                let xi = self.ps.unit(t);
                let left = self.ps.fiber(t).left_action(&q, xi);
                let right = xi * &q;
                let both = self.ps.fiber(t).left_action(&q, &right);
                worst = worst.max(max_abs(&(&left - &right))).max(max_abs(&(&left - both)));
            }
        }
        worst
    }

    /// `<k x, k x'> = <x, x'>` and `k_{t->u} k_{s->t} = k_{s->u}` on random vectors.
    pub fn embedding_residual(&self, rng: &mut impl Rng) -> Result<f64> {
        let n = self.horizon();
        let mut worst = 0.0_f64;
        for t in 0..=n {
            let xi = self.ps.unit(t);
            worst = worst.max(max_abs(&(xi.adjoint() * xi - identity(xi.ncols()))));
        }
        for s in 0..=n {
            let x = self.random_vector(rng, s);
            let y = self.random_vector(rng, s);
            for t in s..=n {
                let kx = self.embed(&x, s, t)?;
                let ky = self.embed(&y, s, t)?;
                worst = worst.max(max_abs(&(kx.adjoint() * &ky - x.adjoint() * &y)));
                for u in t..=n {
                    worst = worst.max(max_abs(&(self.embed(&kx, t, u)? - self.embed(&x, s, u)?)));
                }
            }
        }
        Ok(worst)
    }

    /// Corner leakage of `theta_t` with respect to `P = Q_0(p)` on random
    /// operators, plus the check that `theta_t(j0(p))` stays in the `(1,1)` corner.
    pub fn block_endomorphism_check(&self, rng: &mut impl Rng, samples: usize) -> Result<BlockEndoReport> {
        let n = self.horizon();
        let p = self.p.clone();
        let pc = self.complement();
        let mut report = BlockEndoReport::default();
        for s in 0..=n {
            let corners = [self.left(&p, s), self.left(&pc, s)];
            for t in 0..=n - s {
                let big = [self.left(&p, s + t), self.left(&pc, s + t)];
                for _ in 0..samples {
                    let a = self.random_operator(rng, s);
                    for i in 0..2 {
                        for j in 0..2 {
                            let img = self.theta(&(&corners[i] * &a * &corners[j]), s, t)?;
                            let inside = &big[i] * &img * &big[j];
                            report.corner_leakage = report.corner_leakage.max(max_abs(&(img - inside)));
                        }
                    }
                }
                let jp = self.theta(&self.j0(&p, s)?, s, t)?;
                let inside = &big[0] * &jp * &big[0];
                report.unit_corner_leakage = report.unit_corner_leakage.max(max_abs(&(jp - inside)));
            }
        }
        report.u_identity = self.u_identity_residual(rng)?;
        Ok(report)
    }

    /// `u_t(theta_s(j0(q)) k_s(x) (.) y) = theta_{s+t}(j0(q)) k_{s+t}(x (.) y)`,
    /// with the limit module represented at level `h` and `h + t <= N`.
    pub fn u_identity_residual(&self, rng: &mut impl Rng) -> Result<f64> {
        let n = self.horizon();
        let mut worst = 0.0_f64;
        for q in [self.p.clone(), self.complement()] {
            for h in 0..=n {
                for t in 0..=n - h {
                    for s in 0..=h {
                        let x = self.random_vector(rng, s);
                        let y = self.random_vector(rng, t);
                        let jq = self.j0(&q, h - s)?;
                        let left_vec = self.theta(&jq, h - s, s)? * self.embed(&x, s, h)?;
                        let lhs = tensor_vectors(self.ps.fiber(t), &left_vec, &y);
                        let xy = tensor_vectors(self.ps.fiber(t), &x, &y);
                        let rhs = self.theta(&jq, h - s, s + t)? * self.embed(&xy, s + t, h + t)?;
                        worst = worst.max(max_abs(&(lhs - rhs)));
                    }
                }
            }
        }
        Ok(worst)
    }

    /// `step(q) = q` for `q` in `{p, p'}`.
    pub fn fixed_projection_residual(&self) -> f64 {
        [self.p.clone(), self.complement()]
            .iter()
            .map(|q| max_abs(&(self.qds.step().apply(q) - q)))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarkovEntry {
    pub s: usize,
    pub t: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ThetaReport {
    pub unital: f64,
    pub multiplicative: f64,
    pub adjoint: f64,
    pub semigroup: f64,
}

impl ThetaReport {
    pub fn max_residual(&self) -> f64 {
        self.unital.max(self.multiplicative).max(self.adjoint).max(self.semigroup)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    /// Minimal eigenvalue of `Q_{s-1} - Q_s`, for `s = N, ..., 1`.
    pub margins: Vec<f64>,
    pub projection_residual: f64,
    /// `|Q_0(q) - q|` with `q` acting on the left.
    pub terminal_residual: f64,
}

impl ChainReport {
    pub fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct BlockEndoReport {
    pub corner_leakage: f64,
    pub unit_corner_leakage: f64,
    pub u_identity: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockcp::lift;
    use crate::cpmap::CpMap;
    use crate::numerics::{direct_sum, BUILD_TOL};
    use crate::random::{random_unitary, seeded};
    use crate::semigroup::random_block_step;

    fn horizon(seed: u64, n: usize) -> DilationHorizon {
        let step = random_block_step(&mut seeded(seed), 2, 2).unwrap();
        let qds = DiscreteQds::new(step, n, BUILD_TOL).unwrap();
        DilationHorizon::new(&qds, &lift(0, 0, &identity(2)), BUILD_TOL).unwrap()
    }

    #[test]
    fn markov_property_on_examples() {
        let h = horizon(1, 3);
        let one = identity(4);
        let p = h.projection().clone();
        assert!(h.markov_residual(&one, 1, 2).unwrap() < 1e-10);
        assert!(h.markov_residual(&p, 2, 1).unwrap() < 1e-10);
        let sweep = h.markov_sweep(&mut seeded(2), 3).unwrap();
        assert!(sweep.iter().all(|e| e.residual < 1e-8));
        assert!(matches!(h.markov_residual(&one, 2, 2), Err(Error::HorizonExceeded { .. })));
    }

    #[test]
    fn theta_is_an_endomorphism_semigroup() {
        let h = horizon(3, 3);
        let r = h.theta_report(&mut seeded(4), 2).unwrap();
        assert!(r.max_residual() < 1e-9, "{r:?}");
    }

    #[test]
    fn projection_chain_increases_to_left_action() {
        let h = horizon(5, 3);
        for q in [h.projection().clone(), h.complement(), identity(4)] {
            let r = h.increasing_projections(&q).unwrap();
            assert!(r.min_margin() > -1e-9, "{r:?}");
            assert!(r.projection_residual < 1e-9 && r.terminal_residual < 1e-9);
        }
        assert!(h.complementarity_residual().unwrap() < 1e-9);
        assert!(h.fixed_projection_residual() < 1e-9);
        assert!(h.unit_identity_residual() < 1e-9);
    }

    #[test]
    fn stabilization_and_embeddings() {
        let h = horizon(6, 3);
        let mut rng = seeded(7);
        let p = h.projection().clone();
        let xi = h.product_system().unit(3).clone();
        assert!(h.stabilization_residual(&p, &xi, 3).unwrap() < 1e-9);
        let b = ginibre(&mut rng, 4, 4);
        let x = h.product_system().unit(1) * b;
        assert!(h.stabilization_residual(&p, &x, 1).unwrap() < 1e-9);
        assert!(h.embedding_residual(&mut rng).unwrap() < 1e-9);
    }

    #[test]
    fn corners_are_preserved() {
        let h = horizon(8, 2);
        let r = h.block_endomorphism_check(&mut seeded(9), 2).unwrap();
        assert!(r.corner_leakage < 1e-9 && r.unit_corner_leakage < 1e-9 && r.u_identity < 1e-9, "{r:?}");
    }

    #[test]
    fn automorphism_chain_is_constant() {
        let mut rng = seeded(10);
        let u = direct_sum(&random_unitary(&mut rng, 2), &random_unitary(&mut rng, 2));
        let qds = DiscreteQds::new(CpMap::conjugation(&u), 3, BUILD_TOL).unwrap();
        let h = DilationHorizon::new(&qds, &lift(0, 0, &identity(2)), BUILD_TOL).unwrap();
        let chain = h.chain(h.projection()).unwrap();
        for c in &chain[1..] {
            assert!(max_abs(&(c - &chain[0])) < 1e-9);
        }
    }

    #[test]
    fn non_unital_semigroup_is_rejected() {
        let step = CpMap::conjugation(&identity(4).scale(0.5));
        let qds = DiscreteQds::new(step, 2, BUILD_TOL).unwrap();
        let err = DilationHorizon::new(&qds, &lift(0, 0, &identity(2)), BUILD_TOL).unwrap_err();
        assert!(matches!(err, Error::NotUnital { .. }));
    }
}
