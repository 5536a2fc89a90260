//! Discrete-time dynamical semigroups, their inclusion systems, and the
//! correspondence between block semigroups and contractive morphisms.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::blockcp::{assemble, extract_with_reps, lift, uniqueness_probe, verify_block, BlockCpMap, ContractionReport};
use crate::cpmap::{CpMap, LinearMap, StinespringRep};
use crate::error::{Error, Result};
use crate::numerics::{
    direct_sum, identity, kron, matrix_unit, matrix_units, max_abs, psd_check, singular_values, CMatrix,
    RANK_TOL,
};
use crate::random::random_unital_kraus;
use crate::vnmodule::{
    apply_tensor_maps, gns_module, tensor, tensor_vectors, BilinearMap, Gns, Module, VnBimodule,
};

/// Largest ambient dimension any construction may allocate.
pub const SIZE_LIMIT: usize = 100_000;

pub const DEFAULT_HORIZON: usize = 4;

/// A CP semigroup `phi_t = step^t` on `M_m`, truncated at `horizon`.
#[derive(Debug, Clone)]
pub struct DiscreteQds {
    step: CpMap,
    horizon: usize,
    unital: bool,
    contractive: bool,
}

impl DiscreteQds {
    /// Requires `step(1) <= 1`; records whether `step(1) = 1`.
    pub fn new(step: CpMap, horizon: usize, tol: f64) -> Result<Self> {
        let m = step.in_dim();
        if step.out_dim() != m {
            return Err(Error::DimMismatch("a semigroup step must map an algebra into itself".into()));
        }
        let one = step.apply(&identity(m));
        let slack = psd_check(&(identity(m) - &one), tol)?;
        if !slack.is_psd {
            return Err(Error::Invalid(format!(
                "step is not contractive: 1 - step(1) has eigenvalue {:.3e}",
                slack.min_eigenvalue
            )));
        }
        let unital = max_abs(&(one - identity(m))) <= tol;
        Ok(DiscreteQds { step, horizon, unital, contractive: true })
    }

    pub fn step(&self) -> &CpMap {
        &self.step
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.step.in_dim()
    }

    pub fn is_unital(&self) -> bool {
        self.unital
    }

    pub fn is_contractive(&self) -> bool {
        self.contractive
    }

    /// `phi_0, ..., phi_N`.
    pub fn powers(&self) -> Result<Vec<CpMap>> {
        let mut out = vec![CpMap::identity(self.dim())];
        for t in 1..=self.horizon {
            out.push(out[t - 1].compose(&self.step)?);
        }
        Ok(out)
    }
}

/// Stinespring triple underlying a GNS module with amplified left action.
pub fn stinespring_of(g: &Gns) -> StinespringRep {
    let n = g.module.left_dim();
    StinespringRep { n, d: g.module.right_dim(), r: g.module.ambient() / n.max(1), v: g.xi.clone() }
}

/// Modules `E_t` with units `xi_t` and isometries `beta_{s,t}: E_{s+t} -> E_s (.) E_t`.
#[derive(Debug, Clone)]
pub struct InclusionSystem {
    horizon: usize,
    maps: Vec<CpMap>,
    units: Vec<Gns>,
    products: BTreeMap<(usize, usize), Module>,
    betas: BTreeMap<(usize, usize), BilinearMap>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct InclusionReport {
    pub isometry: f64,
    pub unit: f64,
    pub coassociativity: f64,
    /// Largest gap between module dimension and the dimension of the cyclic span.
    pub cyclicity_gap: usize,
}

impl InclusionReport {
    pub fn max_residual(&self) -> f64 {
        self.isometry.max(self.unit).max(self.coassociativity)
    }
}

/// The inclusion system of a semigroup, with each `beta` solved from the
/// prescription `a xi_{s+t} b -> a (xi_s (.) xi_t) b` and certified isometric.
pub fn inclusion_system(qds: &DiscreteQds, tol: f64) -> Result<InclusionSystem> {
    let maps = qds.powers()?;
    let m = qds.dim();
    let mut units = Vec::with_capacity(maps.len());
    units.push(Gns { module: Arc::new(VnBimodule::trivial(m)), xi: identity(m) });
    for phi in &maps[1..] {
        let g = gns_module(phi);
        let triple = g.module.ambient() * g.module.multiplicity() * g.module.multiplicity().max(1);
        if triple > SIZE_LIMIT {
            return Err(Error::SizeExceeded { dim: triple, limit: SIZE_LIMIT });
        }
        units.push(g);
    }
    let n = qds.horizon;
    let mut products = BTreeMap::new();
    let mut betas = BTreeMap::new();
    for s in 0..=n {
        for t in 0..=n - s {
            let prod = Arc::new(tensor(&units[s].module, &units[t].module)?);
            if prod.ambient() > SIZE_LIMIT {
                return Err(Error::SizeExceeded { dim: prod.ambient(), limit: SIZE_LIMIT });
            }
            let joint = tensor_vectors(&units[t].module, &units[s].xi, &units[t].xi);
            let mut xs = Vec::with_capacity(m * m);
            let mut ys = Vec::with_capacity(m * m);
            for e in matrix_units(m) {
                xs.push(units[s + t].module.left_action(&e, &units[s + t].xi));
                ys.push(prod.left_action(&e, &joint));
            }
            let beta = BilinearMap::solve(units[s + t].module.clone(), prod.clone(), &xs, &ys, tol)?;
            let iso = beta.isometry_residual();
            if iso > tol.max(1e-9) * 10.0 {
                return Err(Error::Inconsistent { residual: iso });
            }
            products.insert((s, t), prod);
            betas.insert((s, t), beta);
        }
    }
    Ok(InclusionSystem { horizon: n, maps, units, products, betas })
}

impl InclusionSystem {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn algebra_dim(&self) -> usize {
        self.units[0].module.left_dim()
    }

    pub fn module(&self, t: usize) -> &Module {
        &self.units[t].module
    }

    pub fn unit(&self, t: usize) -> &Gns {
        &self.units[t]
    }

    pub fn map(&self, t: usize) -> &CpMap {
        &self.maps[t]
    }

    pub fn product(&self, s: usize, t: usize) -> &Module {
        &self.products[&(s, t)]
    }

    pub fn beta(&self, s: usize, t: usize) -> &BilinearMap {
        &self.betas[&(s, t)]
    }

    /// `phi_t(b) = <xi_t, b xi_t>` for `t = 0..=N`.
    pub fn semigroup_from_unit(&self) -> Vec<LinearMap> {
        let m = self.algebra_dim();
        self.units.iter().map(|g| LinearMap::from_fn(m, |a| g.apply(a))).collect()
    }

    /// Largest residual of `phi_s o phi_t = phi_{s+t}` over matrix units.
    pub fn semigroup_law_residual(&self) -> f64 {
        let phis = self.semigroup_from_unit();
        let mut worst = 0.0_f64;
        for s in 0..=self.horizon {
            for t in 0..=self.horizon - s {
                for e in matrix_units(self.algebra_dim()) {
                    let lhs = phis[s].apply(&phis[t].apply(&e));
                    worst = worst.max(max_abs(&(lhs - phis[s + t].apply(&e))));
                }
            }
        }
        worst
    }

    pub fn report(&self) -> InclusionReport {
        let mut out = InclusionReport::default();
        let n = self.horizon;
        for ((s, t), beta) in &self.betas {
            out.isometry = out.isometry.max(beta.isometry_residual());
            let joint = tensor_vectors(&self.units[*t].module, &self.units[*s].xi, &self.units[*t].xi);
            out.unit = out.unit.max(max_abs(&(beta.apply(&self.units[s + t].xi) - joint)));
        }
        for g in &self.units {
            out.cyclicity_gap = out.cyclicity_gap.max(g.module.dim() - g.cyclic_dim().min(g.module.dim()));
        }
        for r in 0..=n {
            for s in 0..=n - r {
                for t in 0..=n - r - s {
                    out.coassociativity = out.coassociativity.max(self.coassociativity_residual(r, s, t));
                }
            }
        }
        out
    }

    /// `(beta_{r,s} (.) id) beta_{r+s,t}` against `(id (.) beta_{s,t}) beta_{r,s+t}`
    /// on an orthonormal basis of `E_{r+s+t}`.
    pub fn coassociativity_residual(&self, r: usize, s: usize, t: usize) -> f64 {
        let q = self.units[r + s + t].module.range();
        let id_t = BilinearMap::identity(self.units[t].module.clone());
        let lhs = apply_tensor_maps(self.beta(r, s).op(), &id_t, &self.beta(r + s, t).apply(q));
        let id_r = identity(self.units[r].module.ambient());
        let rhs = apply_tensor_maps(&id_r, self.beta(s, t), &self.beta(r, s + t).apply(q));
        max_abs(&(lhs - rhs))
    }

    /// Module dimensions against `m * m * rank(Choi(phi_t))` computed from
    /// singular values independently of the GNS construction.
    pub fn dimension_mismatch(&self) -> usize {
        let m = self.algebra_dim();
        self.maps
            .iter()
            .zip(&self.units)
            .map(|(phi, g)| {
                let sv = singular_values(phi.choi());
                let top = sv.first().copied().unwrap_or(0.0);
                let r = sv.iter().filter(|&&x| x > RANK_TOL * top).count();
                g.module.dim().abs_diff(m * m * r)
            })
            .max()
            .unwrap_or(0)
    }
}

/// A family `T_t: E^2_t -> E^1_t` for `t = 0..=N`, with `T_0` the identity
/// of the algebra.
#[derive(Debug, Clone)]
pub struct Morphism {
    maps: Vec<BilinearMap>,
}

impl Morphism {
    pub fn new(maps: Vec<BilinearMap>) -> Self {
        Morphism { maps }
    }

    pub fn identity(incl: &InclusionSystem) -> Self {
        Morphism { maps: incl.units.iter().map(|g| BilinearMap::identity(g.module.clone())).collect() }
    }

    /// `T_t = 0` for `t >= 1`.
    pub fn zero(incl1: &InclusionSystem, incl2: &InclusionSystem) -> Self {
        let mut maps = vec![BilinearMap::identity(incl1.units[0].module.clone())];
        for t in 1..=incl1.horizon {
            maps.push(BilinearMap::zero(incl2.units[t].module.clone(), incl1.units[t].module.clone()));
        }
        Morphism { maps }
    }

    pub fn get(&self, t: usize) -> &BilinearMap {
        &self.maps[t]
    }

    pub fn horizon(&self) -> usize {
        self.maps.len() - 1
    }

    /// `c^t T_t`.
    pub fn scaled(&self, c: f64) -> Morphism {
        Morphism { maps: self.maps.iter().enumerate().map(|(t, m)| m.scale(c.powi(t as i32))).collect() }
    }

    pub fn norms(&self) -> Vec<f64> {
        self.maps.iter().map(|m| m.norm()).collect()
    }

    /// Smallest `k >= 0` with `|T_t| <= e^{t k}`.
    pub fn growth_bound(&self) -> f64 {
        self.maps
            .iter()
            .enumerate()
            .skip(1)
            .map(|(t, m)| if m.norm() > 0.0 { m.norm().ln() / t as f64 } else { 0.0 })
            .fold(0.0, f64::max)
    }

    pub fn bilinearity_residual(&self) -> f64 {
        self.maps.iter().map(|m| m.left_linearity_residual()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MorphismMode {
    /// `T_{s+t} = beta1* (T_s (.) T_t) beta2`.
    Weak,
    /// `beta1 T_{s+t} = (T_s (.) T_t) beta2`.
    Strong,
}

/// Largest residual of the chosen morphism identity over `s, t >= 1`,
/// `s + t <= N`, evaluated on an orthonormal basis of `E^2_{s+t}`.
pub fn verify_morphism(t: &Morphism, incl1: &InclusionSystem, incl2: &InclusionSystem, mode: MorphismMode) -> f64 {
    let n = t.horizon().min(incl1.horizon).min(incl2.horizon);
    let mut worst = 0.0_f64;
    for s in 1..=n {
        for u in 1..=n - s {
            let q = incl2.units[s + u].module.range();
            let rhs = apply_tensor_maps(t.get(s).op(), t.get(u), &incl2.beta(s, u).apply(q));
            let residual = match mode {
                MorphismMode::Weak => {
                    let lhs = t.get(s + u).apply(q);
                    max_abs(&(lhs - incl1.beta(s, u).adjoint().apply(&rhs)))
                }
                MorphismMode::Strong => {
                    let lhs = incl1.beta(s, u).apply(&t.get(s + u).apply(q));
                    max_abs(&(lhs - rhs))
                }
            };
            worst = worst.max(residual);
        }
    }
    worst
}

/// The block semigroup `Phi_t = (phi1_t psi_t; psi_t* phi2_t)` of a morphism.
#[derive(Debug, Clone)]
pub struct BlockSemigroup {
    pub maps: Vec<CpMap>,
    pub qds: DiscreteQds,
    pub law_residual: f64,
    pub morphism_residual: f64,
}

pub fn block_semigroup_from_morphism(
    incl1: &InclusionSystem,
    incl2: &InclusionSystem,
    t: &Morphism,
    tol: f64,
) -> Result<BlockSemigroup> {
    let morphism_residual = verify_morphism(t, incl1, incl2, MorphismMode::Weak);
    if morphism_residual > tol {
        return Err(Error::NotMorphism { residual: morphism_residual });
    }
    let n = t.horizon().min(incl1.horizon).min(incl2.horizon);
    let d = incl1.algebra_dim();
    let mut maps = Vec::with_capacity(n + 1);
    for s in 0..=n {
        let norm = t.get(s).norm();
        if norm > 1.0 + tol {
            return Err(Error::NotContraction { norm });
        }
        let (g1, g2) = (&incl1.units[s], &incl2.units[s]);
        let op = t.get(s).op().clone();
        let psi = LinearMap::from_fn(d, |a| g1.xi.adjoint() * &op * g2.module.left_action(a, &g2.xi));
        let full = assemble(&incl1.maps[s].to_linear(), &incl2.maps[s].to_linear(), &psi);
        maps.push(CpMap::from_choi(2 * d, 2 * d, &full.choi(), tol)?);
    }
    let mut law_residual = 0.0_f64;
    for s in 0..=n {
        for u in 0..=n - s {
            for e in matrix_units(2 * d) {
                let lhs = maps[s].apply(&maps[u].apply(&e));
                law_residual = law_residual.max(max_abs(&(lhs - maps[s + u].apply(&e))));
            }
        }
    }
    let step = if n >= 1 { maps[1].clone() } else { CpMap::identity(2 * d) };
    let qds = DiscreteQds::new(step, n, tol.max(1e-9))?;
    Ok(BlockSemigroup { maps, qds, law_residual, morphism_residual })
}

/// Everything produced by [`extract_morphism`].
#[derive(Debug, Clone)]
pub struct MorphismExtraction {
    pub incl1: InclusionSystem,
    pub incl2: InclusionSystem,
    pub full: InclusionSystem,
    pub morphism: Morphism,
    pub blocks: Vec<BlockCpMap>,
    pub reports: Vec<ContractionReport>,
    pub weak_residual: f64,
    pub strong_residual: f64,
    pub consistency_residual: f64,
    pub corner_law_residual: f64,
}

/// Extracts the contractive morphism of a block semigroup.
///
/// The corner systems are the inclusion systems of the diagonal components
/// of the step; each `T_t` is solved relative to their units, so all `T_t`
/// live on the same modules as the `beta`s used in the morphism identity.
pub fn extract_morphism(qds: &DiscreteQds, tol: f64) -> Result<MorphismExtraction> {
    let horizon = qds.horizon();
    let step_block = verify_block(qds.step(), tol)?;
    let corner1 = DiscreteQds::new(step_block.phi1().clone(), horizon, tol.max(1e-9))?;
    let corner2 = DiscreteQds::new(step_block.phi2().clone(), horizon, tol.max(1e-9))?;
    let incl1 = inclusion_system(&corner1, tol)?;
    let incl2 = inclusion_system(&corner2, tol)?;
    let full = inclusion_system(qds, tol)?;
    let d = incl1.algebra_dim();

    let mut blocks = Vec::with_capacity(horizon + 1);
    let mut reports = Vec::with_capacity(horizon + 1);
    let mut maps = Vec::with_capacity(horizon + 1);
    for t in 0..=horizon {
        let block = verify_block(full.map(t), tol)?;
        let rep1 = stinespring_of(incl1.unit(t));
        let rep2 = stinespring_of(incl2.unit(t));
        let (_, report) = extract_with_reps(block.psi(), &rep1, &rep2, tol)?;
        maps.push(BilinearMap::new(incl2.module(t).clone(), incl1.module(t).clone(), report.t.clone())?);
        blocks.push(block);
        reports.push(report);
    }
    let morphism = Morphism::new(maps);
    let weak_residual = verify_morphism(&morphism, &incl1, &incl2, MorphismMode::Weak);
    let strong_residual = verify_morphism(&morphism, &incl1, &incl2, MorphismMode::Strong);

    let mut corner_law_residual = 0.0_f64;
    for s in 0..=horizon {
        for u in 0..=horizon - s {
            for e in matrix_units(d) {
                let psi = max_abs(&(blocks[s].psi().apply(&blocks[u].psi().apply(&e)) - blocks[s + u].psi().apply(&e)));
                let p1 = max_abs(&(blocks[s].phi1().apply(&blocks[u].phi1().apply(&e)) - blocks[s + u].phi1().apply(&e)));
                let p2 = max_abs(&(blocks[s].phi2().apply(&blocks[u].phi2().apply(&e)) - blocks[s + u].phi2().apply(&e)));
                corner_law_residual = corner_law_residual.max(psi).max(p1).max(p2);
            }
        }
    }

    Ok(MorphismExtraction {
        consistency_residual: consistency_residual(&full),
        incl1,
        incl2,
        full,
        morphism,
        blocks,
        reports,
        weak_residual,
        strong_residual,
        corner_law_residual,
    })
}

/// Residual of `beta_{s,t}(eta^i_{s+t}) = eta^i_s (.) eta^i_t` for the corner
/// units `eta^i_t = pi(E_ii) eta_t E_ii` of a block system.
pub fn consistency_residual(full: &InclusionSystem) -> f64 {
    let d = full.algebra_dim() / 2;
    let corner_unit = |i: usize, t: usize| {
        let g = full.unit(t);
        let p = lift(i, i, &identity(d));
        g.module.left_action(&p, &g.xi) * p
    };
    let mut worst = 0.0_f64;
    for s in 0..=full.horizon {
        for t in 0..=full.horizon - s {
            for i in 0..2 {
                let lhs = full.beta(s, t).apply(&corner_unit(i, s + t));
                let rhs = tensor_vectors(full.module(t), &corner_unit(i, s), &corner_unit(i, t));
                worst = worst.max(max_abs(&(lhs - rhs)));
            }
        }
    }
    worst
}

/// Largest deviation of each `T_t` under rotated multiplicity spaces and
/// permuted equation orders.
pub fn morphism_uniqueness(ex: &MorphismExtraction, trials: usize, rng: &mut impl Rng, tol: f64) -> Result<f64> {
    let mut worst = 0.0_f64;
    for b in &ex.blocks[1..] {
        worst = worst.max(uniqueness_probe(b, trials, rng, tol)?);
    }
    Ok(worst)
}

/// Unital block step on `M_2(M_d)` with Kraus operators `diag(K_i, L_i)`,
/// where `{K_i}` and `{L_i}` are independent unital families.
pub fn random_block_step(rng: &mut impl Rng, d: usize, kraus: usize) -> Result<CpMap> {
    let k = random_unital_kraus(rng, d, kraus);
    let l = random_unital_kraus(rng, d, kraus);
    let ops: Vec<CMatrix> = k.iter().zip(&l).map(|(a, b)| direct_sum(a, b)).collect();
    CpMap::from_kraus(&ops)
}

/// Inclusion system of a block semigroup's corner, exposed for callers that
/// already hold a verified step.
pub fn corner_systems(step: &CpMap, horizon: usize, tol: f64) -> Result<(InclusionSystem, InclusionSystem)> {
    let b = verify_block(step, tol)?;
    let c1 = DiscreteQds::new(b.phi1().clone(), horizon, tol.max(1e-9))?;
    let c2 = DiscreteQds::new(b.phi2().clone(), horizon, tol.max(1e-9))?;
    Ok((inclusion_system(&c1, tol)?, inclusion_system(&c2, tol)?))
}

/// `E_ij (x) 1` as an element of `M_2(M_d)`.
pub fn block_unit(i: usize, j: usize, d: usize) -> CMatrix {
    kron(&matrix_unit(2, i, j), &identity(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::BUILD_TOL;
    use crate::random::{random_unitary, seeded};

    #[test]
    fn automorphism_semigroup_has_rank_one_modules() {
        let u = random_unitary(&mut seeded(1), 3);
        let qds = DiscreteQds::new(CpMap::conjugation(&u), 3, BUILD_TOL).unwrap();
        let incl = inclusion_system(&qds, BUILD_TOL).unwrap();
        for t in 0..=3 {
            assert_eq!(incl.module(t).multiplicity(), 1);
        }
        let report = incl.report();
        assert!(report.max_residual() < 1e-9, "{report:?}");
        assert_eq!(incl.dimension_mismatch(), 0);
    }

    #[test]
    fn random_unital_system_axioms() {
        let mut rng = seeded(2);
        let step = CpMap::from_kraus(&random_unital_kraus(&mut rng, 2, 2)).unwrap();
        let qds = DiscreteQds::new(step, 4, BUILD_TOL).unwrap();
        assert!(qds.is_unital());
        let incl = inclusion_system(&qds, BUILD_TOL).unwrap();
        let report = incl.report();
        assert!(report.unit < 1e-9 && report.isometry < 1e-9 && report.coassociativity < 1e-8, "{report:?}");
        assert_eq!(report.cyclicity_gap, 0);
        assert!(incl.semigroup_law_residual() < 1e-9);
        let phis = incl.semigroup_from_unit();
        for t in 0..=4 {
            assert!(phis[t].distance(&qds.powers().unwrap()[t].to_linear()) < 1e-10);
            assert!(max_abs(&(phis[t].apply(&identity(2)) - identity(2))) < 1e-10);
        }
    }

    #[test]
    fn identity_and_zero_morphisms_verify() {
        let mut rng = seeded(3);
        let step = CpMap::from_kraus(&random_unital_kraus(&mut rng, 2, 2)).unwrap();
        let incl = inclusion_system(&DiscreteQds::new(step, 3, BUILD_TOL).unwrap(), BUILD_TOL).unwrap();
        let id = Morphism::identity(&incl);
        let zero = Morphism::zero(&incl, &incl);
        for m in [&id, &zero] {
            assert!(verify_morphism(m, &incl, &incl, MorphismMode::Weak) < 1e-9);
            assert!(verify_morphism(m, &incl, &incl, MorphismMode::Strong) < 1e-9);
        }
        let semi = block_semigroup_from_morphism(&incl, &incl, &id, 1e-8).unwrap();
        assert!(semi.law_residual < 1e-8);
        let b = verify_block(&semi.maps[2], BUILD_TOL).unwrap();
        assert!(b.psi().distance(&incl.map(2).to_linear()) < 1e-9);
    }

    #[test]
    fn extraction_round_trip() {
        let mut rng = seeded(4);
        let step = random_block_step(&mut rng, 2, 2).unwrap();
        let qds = DiscreteQds::new(step, 3, BUILD_TOL).unwrap();
        let ex = extract_morphism(&qds, 1e-8).unwrap();
        assert!(ex.weak_residual < 1e-7, "weak {}", ex.weak_residual);
        assert!(ex.consistency_residual < 1e-8);
        assert!(ex.corner_law_residual < 1e-8);
        assert!(ex.reports.iter().all(|r| r.operator_norm <= 1.0 + 1e-7));
        let semi = block_semigroup_from_morphism(&ex.incl1, &ex.incl2, &ex.morphism, 1e-7).unwrap();
        for t in 0..=3 {
            let lhs = semi.maps[t].to_linear();
            assert!(lhs.distance(&ex.full.map(t).to_linear()) < 1e-8);
        }
    }
}
