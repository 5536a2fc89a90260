//! The product system generated by a discrete-time inclusion system, and
//! lifting of weak morphisms to morphisms of product systems.
//!
//! For `t` fixed the partitions of `t` form a finite lattice whose maximum
//! is `(1, ..., 1)`, so the inductive limit over partitions is attained at
//! `E_(1,...,1) = E_1^{(.) t}`. The identification `B_{s,t}` of
//! `E_s (.) E_t` with `E_{s+t}` is then literally the identity, because the
//! concrete tensor product is strictly associative.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{identity, kron, max_abs, op_norm, pinv, psd_check, zeros, CMatrix, RANK_TOL};
use crate::random::{ginibre, seeded};
use crate::semigroup::{verify_morphism, InclusionSystem, Morphism, MorphismMode, SIZE_LIMIT};
use crate::vnmodule::{multiplicity_part, tensor, tensor_vectors, BilinearMap, Module, VnBimodule};

/// A composition `(t_n, ..., t_1)` of a positive integer, written left to
/// right as the factors of `E_{t_n} (.) ... (.) E_{t_1}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Partition(Vec<usize>);

impl Partition {
    pub fn new(parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() || parts.contains(&0) {
            return Err(Error::Invalid(format!("{parts:?} is not a composition into positive parts")));
        }
        Ok(Partition(parts))
    }

    /// `(t)`.
    pub fn single(t: usize) -> Self {
        Partition(vec![t])
    }

    /// `(1, ..., 1)`.
    pub fn finest(t: usize) -> Self {
        Partition(vec![1; t])
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Concatenation `self ⌣ other`.
    pub fn joint(&self, other: &Partition) -> Partition {
        Partition(self.0.iter().chain(&other.0).copied().collect())
    }

    /// Splits `self` into consecutive compositions of the parts of `coarser`,
    /// or returns `None` when `self` does not refine `coarser`.
    pub fn split_over(&self, coarser: &Partition) -> Option<Vec<Partition>> {
        if self.total() != coarser.total() {
            return None;
        }
        let mut out = Vec::with_capacity(coarser.0.len());
        let mut parts = self.0.iter();
        for &target in &coarser.0 {
            let mut acc = 0;
            let mut piece = Vec::new();
            while acc < target {
                let &p = parts.next()?;
                acc += p;
                piece.push(p);
            }
            if acc != target {
                return None;
            }
            out.push(Partition(piece));
        }
        Some(out)
    }

    /// `self >= coarser` in the refinement order.
    pub fn refines(&self, coarser: &Partition) -> bool {
        self.split_over(coarser).is_some()
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let inner: Vec<String> = self.0.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", inner.join(","))
    }
}

/// All `2^{t-1}` compositions of `t`, coarsest first.
pub fn partitions(t: usize) -> Vec<Partition> {
    if t == 0 {
        return Vec::new();
    }
    let mut out: Vec<Partition> = (0..1usize << (t - 1))
        .map(|mask| {
            let mut parts = Vec::new();
            let mut run = 1;
            for gap in 0..t - 1 {
                if mask >> gap & 1 == 1 {
                    parts.push(run);
                    run = 1;
                } else {
                    run += 1;
                }
            }
            parts.push(run);
            Partition(parts)
        })
        .collect();
    out.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| b.0.cmp(&a.0)));
    out
}

/// `E_p = E_{p_n} (.) ... (.) E_{p_1}`.
pub fn fiber(incl: &InclusionSystem, p: &Partition) -> Result<VnBimodule> {
    let mut acc = (**incl.module(p.0[0])).clone();
    for &part in &p.0[1..] {
        acc = tensor(&acc, incl.module(part))?;
        if acc.ambient() > SIZE_LIMIT {
            return Err(Error::SizeExceeded { dim: acc.ambient(), limit: SIZE_LIMIT });
        }
    }
    Ok(acc)
}

/// Ambient operator of `beta_p: E_s -> E_p` for a composition `p` of `s`,
/// built as `(beta_{p'} (.) id) beta_{s - p_1, p_1}`.
fn split_op(incl: &InclusionSystem, p: &Partition) -> CMatrix {
    let s = p.total();
    if p.0.len() == 1 {
        return incl.module(s).projector();
    }
    let last = *p.0.last().expect("nonempty");
    let prefix = Partition(p.0[..p.0.len() - 1].to_vec());
    let head = split_op(incl, &prefix);
    let m = incl.module(last).multiplicity();
    kron(&head, &identity(m)) * incl.beta(s - last, last).op()
}

/// `beta_{t s}: E_s -> E_t` for `t >= s`, the tensor product of the splits of
/// each part of `s`.
pub fn refinement_map(incl: &InclusionSystem, finer: &Partition, coarser: &Partition) -> Result<BilinearMap> {
    let pieces = finer.split_over(coarser).ok_or_else(|| Error::NotRefinement {
        finer: finer.to_string(),
        coarser: coarser.to_string(),
    })?;
    let mut op = split_op(incl, &pieces[0]);
    for (k, piece) in pieces.iter().enumerate().skip(1) {
        let src = incl.module(coarser.0[k]).clone();
        let tgt = Arc::new(fiber(incl, piece)?);
        let map = BilinearMap::new(src, tgt, split_op(incl, piece))?;
        op = kron(&op, &multiplicity_part(&map));
    }
    BilinearMap::new(Arc::new(fiber(incl, coarser)?), Arc::new(fiber(incl, finer)?), op)
}

/// The generated product system up to the horizon of `incl`.
#[derive(Debug, Clone)]
pub struct ProductSystem {
    incl: InclusionSystem,
    fibers: Vec<Module>,
    units: Vec<CMatrix>,
    partition_fibers: BTreeMap<Partition, Module>,
    inclusions: BTreeMap<Partition, BilinearMap>,
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ProductReport {
    pub inclusion_isometry: f64,
    pub inclusion_bilinearity: f64,
    pub compatibility: f64,
    pub product_identity: f64,
    pub associativity: f64,
    pub product_unitarity: f64,
    pub unit_coherence: f64,
}

impl ProductReport {
    pub fn max_residual(&self) -> f64 {
        [
            self.inclusion_isometry,
            self.inclusion_bilinearity,
            self.compatibility,
            self.product_identity,
            self.associativity,
            self.product_unitarity,
            self.unit_coherence,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn generate(incl: &InclusionSystem) -> Result<ProductSystem> {
    let n = incl.horizon();
    let m = incl.algebra_dim();
    let e1 = incl.module(1.min(n));
    let r = e1.multiplicity() as f64;
    let projected = e1.ambient() as f64 * r.powi(n.saturating_sub(1) as i32);
    if projected > SIZE_LIMIT as f64 {
        return Err(Error::SizeExceeded { dim: projected.min(usize::MAX as f64) as usize, limit: SIZE_LIMIT });
    }
    let mut fibers: Vec<Module> = vec![Arc::new(VnBimodule::trivial(m))];
    let mut units = vec![identity(m)];
    let mut partition_fibers = BTreeMap::new();
    let mut inclusions = BTreeMap::new();
    for t in 1..=n {
        let top = Arc::new(fiber(incl, &Partition::finest(t))?);
        let unit = if t == 1 {
            incl.unit(1).xi.clone()
        } else {
            tensor_vectors(incl.module(1), &units[t - 1], &incl.unit(1).xi)
        };
        for p in partitions(t) {
            partition_fibers.insert(p.clone(), Arc::new(fiber(incl, &p)?));
            inclusions.insert(p.clone(), refinement_map(incl, &Partition::finest(t), &p)?);
        }
        fibers.push(top);
        units.push(unit);
    }
    Ok(ProductSystem { incl: incl.clone(), fibers, units, partition_fibers, inclusions })
}

impl ProductSystem {
    pub fn horizon(&self) -> usize {
        self.fibers.len() - 1
    }

    pub fn inclusion_system(&self) -> &InclusionSystem {
        &self.incl
    }

    pub fn fiber(&self, t: usize) -> &Module {
        &self.fibers[t]
    }

    /// `xi_1^{(.) t}`.
    pub fn unit(&self, t: usize) -> &CMatrix {
        &self.units[t]
    }

    pub fn partition_fiber(&self, p: &Partition) -> &Module {
        &self.partition_fibers[p]
    }

    /// `i_p: E_p -> E_|p|`.
    pub fn inclusion(&self, p: &Partition) -> &BilinearMap {
        &self.inclusions[p]
    }

    /// `B_{s,t}: E_s (.) E_t -> E_{s+t}`.
    pub fn product_map(&self, s: usize, t: usize) -> Result<BilinearMap> {
        let src = Arc::new(tensor(&self.fibers[s], &self.fibers[t])?);
        let tgt = self.fibers[s + t].clone();
        let k = tgt.ambient();
        if src.ambient() != k {
            return Err(Error::DimMismatch("tensor product of fibers has the wrong ambient space".into()));
        }
        BilinearMap::new(src, tgt, identity(k))
    }

    pub fn report(&self) -> Result<ProductReport> {
        let mut out = ProductReport::default();
        let n = self.horizon();
        let mut rng = seeded(0x5eed);
        for (p, i) in &self.inclusions {
            out.inclusion_isometry = out.inclusion_isometry.max(i.isometry_residual());
            out.inclusion_bilinearity = out.inclusion_bilinearity.max(i.left_linearity_residual());
            for u in partitions(p.total()).iter().filter(|u| u.refines(p)) {
                let beta = refinement_map(&self.incl, u, p)?;
                let composite = self.inclusions[u].compose(&beta);
                out.compatibility = out.compatibility.max(composite.distance(i));
            }
            if p.0.len() == 1 {
                let t = p.total();
                out.unit_coherence = out.unit_coherence.max(max_abs(&(i.apply(&self.incl.unit(t).xi) - &self.units[t])));
            }
        }
        for s in 1..=n {
            for t in 1..=n - s {
                let b = self.product_map(s, t)?;
                out.product_unitarity = out.product_unitarity.max(b.isometry_residual());
                for ps in partitions(s) {
                    for pt in partitions(t) {
                        let (es, et) = (&self.partition_fibers[&ps], &self.partition_fibers[&pt]);
                        let x = es.project(&ginibre(&mut rng, es.ambient(), es.right_dim()));
                        let y = et.project(&ginibre(&mut rng, et.ambient(), et.right_dim()));
                        let lhs = b.apply(&tensor_vectors(&self.fibers[t], &self.inclusions[&ps].apply(&x), &self.inclusions[&pt].apply(&y)));
                        let rhs = self.inclusions[&ps.joint(&pt)].apply(&tensor_vectors(et, &x, &y));
                        out.product_identity = out.product_identity.max(max_abs(&(lhs - rhs)));
                    }
                }
            }
        }
        for r in 1..=n {
            for s in 1..=n - r {
                for t in 1..=n - r - s {
                    let q = self.fibers[r + s + t].range();
                    let brs = self.product_map(r, s)?;
                    let bst = self.product_map(s, t)?;
                    let id_t = BilinearMap::identity(self.fibers[t].clone());
                    let id_r = identity(self.fibers[r].ambient());
                    let lhs = self.product_map(r + s, t)?.op() * crate::vnmodule::apply_tensor_maps(brs.op(), &id_t, q);
                    let rhs = self.product_map(r, s + t)?.op() * crate::vnmodule::apply_tensor_maps(&id_r, &bst, q);
                    out.associativity = out.associativity.max(max_abs(&(lhs - rhs)));
                }
            }
        }
        Ok(out)
    }

    /// Largest violation of `Q_r <= Q_s` for `r <= s` among partitions of `t`.
    pub fn projection_monotonicity(&self, t: usize) -> Result<f64> {
        let mut worst = 0.0_f64;
        let ps = partitions(t);
        for r in &ps {
            for s in ps.iter().filter(|s| s.refines(r)) {
                let qr = self.projection(r);
                let qs = self.projection(s);
                let w = psd_check(&(qs - qr), 1e-9)?;
                worst = worst.max(-w.min_eigenvalue);
            }
        }
        Ok(worst)
    }

    /// `Q_p = i_p i_p*` on the fiber.
    pub fn projection(&self, p: &Partition) -> CMatrix {
        let i = self.inclusions[p].op();
        i * i.adjoint()
    }
}

/// `T_p = T_{p_n} (.) ... (.) T_{p_1}` as an ambient operator `E^2_p -> E^1_p`.
pub fn morphism_on_partition(t: &Morphism, p: &Partition) -> CMatrix {
    let mut op = t.get(p.0[0]).op().clone();
    for &part in &p.0[1..] {
        op = kron(&op, &multiplicity_part(t.get(part)));
    }
    op
}

/// Lifted maps `T^_t: E^2_t -> E^1_t`.
#[derive(Debug, Clone)]
pub struct LiftedMorphism {
    maps: Vec<BilinearMap>,
}

impl LiftedMorphism {
    pub fn get(&self, t: usize) -> &BilinearMap {
        &self.maps[t]
    }

    pub fn horizon(&self) -> usize {
        self.maps.len() - 1
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct LiftReport {
    /// `max |T_p - j_p* T^ i_p|` over all partitions.
    pub compression: f64,
    /// `max |T^_{s+t} B2 - B1 (T^_s (.) T^_t)|`.
    pub multiplicativity: f64,
    /// `max (|T^_t| - e^{k t})^+`.
    pub growth_violation: f64,
    /// `max (|T^_t| - |T_1|^t)^+`.
    pub power_law_violation: f64,
}

impl LiftReport {
    pub fn max_residual(&self) -> f64 {
        self.compression.max(self.multiplicativity).max(self.growth_violation).max(self.power_law_violation)
    }
}

/// Lifts a weak morphism between the generating inclusion systems of `ps2`
/// (source) and `ps1` (target) to `T^_t = T_1^{(.) t}`.
pub fn lift_morphism(t: &Morphism, ps1: &ProductSystem, ps2: &ProductSystem, tol: f64) -> Result<(LiftedMorphism, LiftReport)> {
    let weak = verify_morphism(t, &ps1.incl, &ps2.incl, MorphismMode::Weak);
    if weak > tol {
        return Err(Error::NotMorphism { residual: weak });
    }
    let n = ps1.horizon().min(ps2.horizon()).min(t.horizon());
    let mut maps = vec![BilinearMap::identity(ps1.fibers[0].clone())];
    for s in 1..=n {
        let op = morphism_on_partition(t, &Partition::finest(s));
        maps.push(BilinearMap::new(ps2.fibers[s].clone(), ps1.fibers[s].clone(), op)?);
    }
    let lifted = LiftedMorphism { maps };
    let mut report = LiftReport::default();
    let k = t.growth_bound();
    let t1 = t.get(1.min(n)).norm();
    for s in 1..=n {
        for p in partitions(s) {
            let compressed = ps1.inclusions[&p].adjoint().compose(lifted.get(s)).compose(&ps2.inclusions[&p]);
            let direct = morphism_on_partition(t, &p);
            report.compression = report.compression.max(max_abs(&(compressed.op() - direct)));
        }
        let norm = lifted.get(s).norm();
        report.growth_violation = report.growth_violation.max(norm - (k * s as f64).exp()).max(0.0);
        report.power_law_violation = report.power_law_violation.max(norm - t1.powi(s as i32) - 1e-12).max(0.0);
        for u in 1..=n - s {
            let b1 = ps1.product_map(s, u)?;
            let b2 = ps2.product_map(s, u)?;
            let lhs = lifted.get(s + u).op() * b2.op();
            let rhs = b1.op() * kron(lifted.get(s).op(), &multiplicity_part(lifted.get(u)));
            report.multiplicativity = report.multiplicativity.max(max_abs(&(lhs - rhs)));
        }
    }
    Ok((lifted, report))
}

/// Reconstructs `T^_t` from all compressions `j_p* X i_p = T_p` by least
/// squares and returns its distance from the lift.
pub fn lift_uniqueness(t: &Morphism, lifted: &LiftedMorphism, ps1: &ProductSystem, ps2: &ProductSystem, s: usize) -> f64 {
    let (k1, k2) = (ps1.fibers[s].ambient(), ps2.fibers[s].ambient());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for p in partitions(s) {
        let j = ps1.inclusions[&p].op().adjoint();
        let i = ps2.inclusions[&p].op().clone();
        let target = morphism_on_partition(t, &p);
        // vec_rowmajor(j X i) = (j (x) i^T) vec_rowmajor(X)
        rows.push(kron(&j, &i.transpose()));
        rhs.push(crate::numerics::flatten(&target));
    }
    let a = crate::numerics::vstack(&rows);
    let b = crate::numerics::vstack(&rhs);
    let x = pinv(&a, RANK_TOL) * b;
    let rebuilt = crate::numerics::unflatten(&x, k1, k2);
    let q1 = ps1.fibers[s].projector();
    let q2 = ps2.fibers[s].projector();
    max_abs(&(&q1 * rebuilt * &q2 - lifted.get(s).op()))
}

/// Norms `|Phi_s Q_{r0}(x) g|` along a refinement chain starting at `r0`.
#[derive(Debug, Clone, Serialize)]
pub struct NetTrace {
    pub chain: Vec<String>,
    pub values: Vec<f64>,
    pub monotone: bool,
    /// `|T^ Q_{r0}(x) g|`.
    pub lifted_value: f64,
}

/// Evaluates the net `Phi_s = j_s T_s i_s*` on `Q_{r0} x` with `r0 = chain[0]`
/// and checks that the norms never decrease along the chain.
pub fn monotone_net_check(
    t: &Morphism,
    lifted: &LiftedMorphism,
    ps1: &ProductSystem,
    ps2: &ProductSystem,
    chain: &[Partition],
    x: &CMatrix,
    g: &CMatrix,
) -> Result<NetTrace> {
    let first = chain.first().ok_or_else(|| Error::Invalid("empty refinement chain".into()))?;
    for w in chain.windows(2) {
        if !w[1].refines(&w[0]) {
            return Err(Error::NotRefinement { finer: w[1].to_string(), coarser: w[0].to_string() });
        }
    }
    let s = first.total();
    let q = ps2.projection(first);
    let xq = q * x;
    let values: Vec<f64> = chain
        .iter()
        .map(|p| {
            let i = ps2.inclusions[p].op();
            let j = ps1.inclusions[p].op();
            let img = j * morphism_on_partition(t, p) * (i.adjoint() * &xq) * g;
            crate::numerics::fro_norm(&img)
        })
        .collect();
    let monotone = values.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    let lifted_value = crate::numerics::fro_norm(&(lifted.get(s).op() * &xq * g));
    Ok(NetTrace { chain: chain.iter().map(|p| p.to_string()).collect(), values, monotone, lifted_value })
}

/// `P_r Phi_s Q_r = Phi_r` for all `r <= s` among partitions of `t`.
pub fn net_compression_residual(t: &Morphism, ps1: &ProductSystem, ps2: &ProductSystem, total: usize) -> f64 {
    let phi = |p: &Partition| {
        ps1.inclusions[p].op() * morphism_on_partition(t, p) * ps2.inclusions[p].op().adjoint()
    };
    let mut worst = 0.0_f64;
    let ps = partitions(total);
    for r in &ps {
        for s in ps.iter().filter(|s| s.refines(r)) {
            let lhs = ps1.projection(r) * phi(s) * ps2.projection(r);
            worst = worst.max(max_abs(&(lhs - phi(r))));
        }
    }
    worst
}

/// Operator norm helper exposed for reports.
pub fn lifted_norms(lifted: &LiftedMorphism) -> Vec<f64> {
    lifted.maps.iter().map(|m| op_norm(m.op())).collect()
}

/// Zero operator between two fibers, used to build the zero morphism lift
/// in tests.
pub fn zero_between(ps1: &ProductSystem, ps2: &ProductSystem, t: usize) -> CMatrix {
    zeros(ps1.fibers[t].ambient(), ps2.fibers[t].ambient())
}
