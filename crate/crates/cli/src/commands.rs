use blockcp::blockcp::{
    assemble, extract_contraction_module, extract_contraction_stinespring, lift as lift_block, random_block_instance, verify_block,
};
use blockcp::dilation::DilationHorizon;
use blockcp::json::{
    block_to_value, cpmap_from_value, cpmap_to_value, generator_from_value, generator_to_value, matrices_to_value,
    matrix_from_value, matrix_to_value, CONVENTION,
};
use blockcp::lindblad::{
    cp_margins, generator_corners, random_generator, semigroup_at, skeleton_consistency, unit_defect,
    unit_derivative_check, TIME_GRID,
};
use blockcp::numerics::{identity, max_abs, op_norm, psd_check};
use blockcp::prodsys::{generate, lift_morphism, lift_uniqueness, lifted_norms, monotone_net_check, net_compression_residual, Partition};
use blockcp::random::{ginibre, random_unital_kraus, seeded};
use blockcp::semigroup::{block_semigroup_from_morphism, extract_morphism, random_block_step, DiscreteQds, DEFAULT_HORIZON};
use blockcp::{cpmap::CpMap, numerics::direct_sum, CMatrix, Error};
use serde_json::{json, Value};

use crate::error::CliError;
use crate::{GenArgs, Kind, RunConfig};

/// A finished command: its report, whether every check passed, and whether
/// the report is itself the product (instances are printed in full).
pub struct Outcome {
    pub report: Value,
    pub pass: bool,
    pub raw: bool,
}

impl Outcome {
    fn report(report: Value, pass: bool) -> Self {
        Outcome { report, pass, raw: false }
    }
}

fn config_value(cfg: &RunConfig) -> Value {
    json!({ "seed": cfg.seed, "tolerances": { "build": cfg.tol_build, "verify": cfg.tol_verify } })
}

pub fn read_instance(cfg: &RunConfig) -> Result<Value, CliError> {
    let path = cfg.input.as_ref().ok_or_else(|| CliError::Config("--in FILE is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
    Ok(serde_json::from_str(&text)?)
}

fn field<'a>(v: &'a Value, key: &str) -> Result<&'a Value, CliError> {
    v.get(key).ok_or_else(|| CliError::Config(format!("instance lacks `{key}`")))
}

fn expect_kind(v: &Value, kind: &str) -> Result<(), CliError> {
    match v.get("kind").and_then(Value::as_str) {
        Some(k) if k == kind => Ok(()),
        other => Err(CliError::Config(format!("expected a `{kind}` instance, found {other:?}"))),
    }
}

pub fn gen(cfg: &RunConfig, args: &GenArgs) -> Result<Outcome, CliError> {
    let mut rng = seeded(cfg.seed);
    let report = match args.kind {
        Kind::Blockcp => {
            if !(args.norm.is_finite() && (0.0..=1.0).contains(&args.norm)) || !(args.scale.is_finite() && args.scale >= 0.0) {
                return Err(CliError::Config("--norm must lie in [0, 1] and --scale must be nonnegative".into()));
            }
            let inst = random_block_instance(&mut rng, cfg.n, cfg.d, args.kraus, args.norm, cfg.tol_build)?;
            let b = inst.block();
            let full = if args.scale == 1.0 {
                cpmap_to_value(b.full())
            } else {
                let lm = assemble(&b.phi1().to_linear(), &b.phi2().to_linear(), &b.psi().scale(args.scale));
                let choi = lm.choi();
                let mut record = json!({ "n": 2 * cfg.n, "d": 2 * cfg.d, "convention": CONVENTION, "choi": matrix_to_value(&choi) });
                if let Ok(phi) = CpMap::from_choi(2 * cfg.n, 2 * cfg.d, &choi, cfg.tol_build) {
                    record["kraus"] = matrices_to_value(phi.kraus());
                }
                record
            };
            let t = inst.true_t().scale(args.scale);
            json!({
                "kind": "blockcp",
                "seed": cfg.seed,
                "n": cfg.n,
                "d": cfg.d,
                "scale": args.scale,
                "full": full,
                "ground_truth": { "s": matrix_to_value(&inst.s.scale(args.scale)), "t": matrix_to_value(&t), "norm": op_norm(&t) },
            })
        }
        Kind::Qds => {
            let horizon = cfg.horizon.unwrap_or(DEFAULT_HORIZON);
            let step = if args.diagonal {
                let z = CMatrix::zeros(cfg.d, cfg.d);
                let mut ops: Vec<CMatrix> =
                    random_unital_kraus(&mut rng, cfg.d, args.kraus).iter().map(|k| direct_sum(k, &z)).collect();
                ops.extend(random_unital_kraus(&mut rng, cfg.d, args.kraus).iter().map(|k| direct_sum(&z, k)));
                CpMap::from_kraus(&ops)?
            } else {
                random_block_step(&mut rng, cfg.d, args.kraus)?
            };
            json!({
                "kind": "qds",
                "seed": cfg.seed,
                "N": horizon,
                "diagonal": args.diagonal,
                "tolerances": { "build": cfg.tol_build, "verify": cfg.tol_verify },
                "step": cpmap_to_value(&step),
            })
        }
        Kind::Generator => {
            let g = random_generator(&mut rng, cfg.d, args.kraus, !args.non_unital);
            json!({
                "kind": "generator",
                "seed": cfg.seed,
                "unital": !args.non_unital,
                "unit_defect": unit_defect(&g),
                "generator": generator_to_value(&g),
            })
        }
    };
    Ok(Outcome { report, pass: true, raw: true })
}

pub fn extract(cfg: &RunConfig, inst: &Value) -> Result<Outcome, CliError> {
    expect_kind(inst, "blockcp")?;
    let full = cpmap_from_value(field(inst, "full")?, cfg.tol_build)?;
    let block = verify_block(&full, cfg.tol_build)?;
    let st = extract_contraction_stinespring(&block, cfg.tol_build)?;
    let (md, trace) = extract_contraction_module(&block, cfg.tol_build.max(1e-8))?;
    let cross = st.distance(&md);
    let truth = match inst.get("ground_truth").and_then(|g| g.get("t")) {
        Some(t) => {
            let t = matrix_from_value(t)?;
            Some(if t.shape() == st.t.shape() { max_abs(&(&t - &st.t)) } else { f64::INFINITY })
        }
        None => None,
    };
    let tol = cfg.tol_verify;
    let residuals = [
        st.intertwining_residual,
        st.reconstruction_residual,
        st.solve_residual,
        md.intertwining_residual,
        md.reconstruction_residual,
        md.solve_residual,
        trace.split_residual,
        trace.unitary_residual,
        trace.isometry_residual,
        trace.identification_residual,
        cross,
        block.leakage(),
        truth.unwrap_or(0.0),
    ];
    let pass = residuals.iter().all(|&r| r <= tol) && st.operator_norm <= 1.0 + tol;
    let report = json!({
        "command": "extract",
        "config": config_value(cfg),
        "block": block_to_value(&block),
        "leakage": block.leakage(),
        "stinespring": st,
        "module": md,
        "module_trace": trace,
        "cross_validation": cross,
        "ground_truth_deviation": truth,
        "operator_norm": st.operator_norm,
        "pass": pass,
    });
    Ok(Outcome::report(report, pass))
}

fn read_qds(cfg: &RunConfig, inst: &Value) -> Result<DiscreteQds, CliError> {
    expect_kind(inst, "qds")?;
    let step = cpmap_from_value(field(inst, "step")?, cfg.tol_build)?;
    let horizon = match cfg.horizon {
        Some(h) => h,
        None => field(inst, "N")?.as_u64().ok_or_else(|| CliError::Config("`N` must be a positive integer".into()))? as usize,
    };
    if horizon == 0 {
        return Err(CliError::Config("horizon must be at least 1".into()));
    }
    Ok(DiscreteQds::new(step, horizon, cfg.tol_build.max(1e-9))?)
}

pub fn semigroup(cfg: &RunConfig, inst: &Value) -> Result<Outcome, CliError> {
    let qds = read_qds(cfg, inst)?;
    let ex = extract_morphism(&qds, cfg.tol_build)?;
    let bs = block_semigroup_from_morphism(&ex.incl1, &ex.incl2, &ex.morphism, cfg.tol_verify)?;
    let round_trip = (0..=qds.horizon())
        .map(|t| bs.maps[t].to_linear().distance(&ex.full.map(t).to_linear()))
        .fold(0.0, f64::max);
    let per_t: Vec<Value> = ex
        .reports
        .iter()
        .enumerate()
        .map(|(t, r)| {
            json!({
                "t": t,
                "norm": ex.morphism.get(t).norm(),
                "module_dims": [ex.incl1.module(t).dim(), ex.incl2.module(t).dim()],
                "reconstruction_residual": r.reconstruction_residual,
                "intertwining_residual": r.intertwining_residual,
                "solve_residual": r.solve_residual,
                "op": matrix_to_value(ex.morphism.get(t).op()),
            })
        })
        .collect();
    let reconstruction = ex.reports.iter().map(|r| r.reconstruction_residual).fold(0.0, f64::max);
    let inclusion = [ex.incl1.report(), ex.incl2.report(), ex.full.report()];
    let tol = cfg.tol_verify;
    let checks = [
        ex.weak_residual,
        reconstruction,
        ex.consistency_residual,
        ex.corner_law_residual,
        round_trip,
        bs.law_residual,
        ex.morphism.bilinearity_residual(),
    ];
    let pass = checks.iter().all(|&r| r <= tol) && inclusion.iter().all(|r| r.max_residual() <= tol);
    let report = json!({
        "command": "semigroup",
        "config": config_value(cfg),
        "N": qds.horizon(),
        "unital": qds.is_unital(),
        "inclusion": { "corner1": inclusion[0], "corner2": inclusion[1], "full": inclusion[2] },
        "morphism": per_t,
        "norms": ex.morphism.norms(),
        "growth_bound": ex.morphism.growth_bound(),
        "weak_residual": ex.weak_residual,
        "strong_residual": ex.strong_residual,
        "reconstruction_residual": reconstruction,
        "consistency_residual": ex.consistency_residual,
        "corner_law_residual": ex.corner_law_residual,
        "round_trip_residual": round_trip,
        "round_trip_law_residual": bs.law_residual,
        "pass": pass,
    });
    Ok(Outcome::report(report, pass))
}

pub fn lift(cfg: &RunConfig, inst: &Value) -> Result<Outcome, CliError> {
    let qds = read_qds(cfg, inst)?;
    let n = qds.horizon();
    let ex = extract_morphism(&qds, cfg.tol_build)?;
    let ps1 = generate(&ex.incl1)?;
    let ps2 = generate(&ex.incl2)?;
    let (lifted, rep) = lift_morphism(&ex.morphism, &ps1, &ps2, cfg.tol_verify)?;
    let chain: Vec<Partition> = (0..n)
        .map(|k| {
            let mut parts = vec![n - k];
            parts.extend(std::iter::repeat_n(1, k));
            Partition::new(parts)
        })
        .collect::<Result<_, Error>>()?;
    let mut rng = seeded(cfg.seed);
    let fiber = ps2.fiber(n);
    let x = fiber.project(&ginibre(&mut rng, fiber.ambient(), fiber.right_dim()));
    let g = ginibre(&mut rng, fiber.right_dim(), 1);
    let net = monotone_net_check(&ex.morphism, &lifted, &ps1, &ps2, &chain, &x, &g)?;
    let net_compression = net_compression_residual(&ex.morphism, &ps1, &ps2, n);
    let uniqueness = lift_uniqueness(&ex.morphism, &lifted, &ps1, &ps2, n.min(3));
    let products = [ps1.report()?, ps2.report()?];
    let tol = cfg.tol_verify;
    let pass = rep.max_residual() <= tol
        && net.monotone
        && net_compression <= tol
        && uniqueness <= tol
        && products.iter().all(|p| p.max_residual() <= tol);
    let report = json!({
        "command": "lift",
        "config": config_value(cfg),
        "N": n,
        "fiber_dims": (0..=n).map(|t| [ps1.fiber(t).dim(), ps2.fiber(t).dim()]).collect::<Vec<_>>(),
        "product_systems": { "corner1": products[0], "corner2": products[1] },
        "lift": rep,
        "lifted_norms": lifted_norms(&lifted),
        "net": net,
        "net_compression_residual": net_compression,
        "uniqueness_residual": uniqueness,
        "pass": pass,
    });
    Ok(Outcome::report(report, pass))
}

pub fn dilate(cfg: &RunConfig, inst: &Value) -> Result<Outcome, CliError> {
    let qds = read_qds(cfg, inst)?;
    let m = qds.dim();
    if m % 2 != 0 {
        return Err(Error::GradingMismatch(format!("M_{m} is not a 2x2 block algebra")).into());
    }
    let d = m / 2;
    let p = lift_block(0, 0, &identity(d));
    let h = DilationHorizon::new(&qds, &p, cfg.tol_build.max(1e-9))?;
    let n = h.horizon();
    let mut rng = seeded(cfg.seed);
    let markov = h.markov_sweep(&mut rng, 20)?;
    let markov_max = markov.iter().map(|e| e.residual).fold(0.0, f64::max);
    let theta = h.theta_report(&mut rng, 3)?;
    let mut chains = serde_json::Map::new();
    let mut min_margin = f64::INFINITY;
    let mut chain_residual = 0.0_f64;
    for (name, q) in [("p", p.clone()), ("complement", h.complement()), ("identity", identity(m))] {
        let r = h.increasing_projections(&q)?;
        min_margin = min_margin.min(r.min_margin());
        chain_residual = chain_residual.max(r.projection_residual).max(r.terminal_residual);
        chains.insert(name.into(), serde_json::to_value(&r)?);
    }
    let mut stabilization = 0.0_f64;
    for t in 1..=n {
        let b = ginibre(&mut rng, m, m);
        let x = h.product_system().unit(t) * b;
        stabilization = stabilization.max(h.stabilization_residual(&p, &x, t)?);
    }
    let endo = h.block_endomorphism_check(&mut rng, 3)?;
    let others = [
        ("complementarity_residual", h.complementarity_residual()?),
        ("fixed_projection_residual", h.fixed_projection_residual()),
        ("unit_identity_residual", h.unit_identity_residual()),
        ("embedding_residual", h.embedding_residual(&mut rng)?),
        ("u_identity_residual", h.u_identity_residual(&mut rng)?),
    ];
    let tol = cfg.tol_verify;
    let pass = markov_max <= tol
        && theta.max_residual() <= tol
        && min_margin >= -cfg.tol_build
        && chain_residual <= tol
        && stabilization <= tol
        && endo.corner_leakage <= tol
        && endo.unit_corner_leakage <= tol
        && endo.u_identity <= tol
        && others.iter().all(|(_, r)| *r <= tol);
    let mut report = json!({
        "command": "dilate",
        "config": config_value(cfg),
        "N": n,
        "markov": markov,
        "markov_max": markov_max,
        "theta": theta,
        "chains": chains,
        "min_margin": min_margin,
        "chain_residual": chain_residual,
        "stabilization_residual": stabilization,
        "corner_leakage": endo,
        "pass": pass,
    });
    for (k, v) in others {
        report[k] = json!(v);
    }
    Ok(Outcome::report(report, pass))
}

pub fn lindblad(cfg: &RunConfig, inst: &Value) -> Result<Outcome, CliError> {
    expect_kind(inst, "generator")?;
    let g = generator_from_value(field(inst, "generator")?)?;
    let tol = cfg.tol_verify;
    let margins = cp_margins(&g, &TIME_GRID)?;
    let min_margin = margins.iter().map(|&(_, m)| m).fold(f64::INFINITY, f64::min);
    let half = semigroup_at(&g, 0.5, cfg.tol_build)?;
    let one = semigroup_at(&g, 1.0, cfg.tol_build)?;
    let law = half.compose(&half)?.to_linear().distance(&one.to_linear());
    let leakage = TIME_GRID
        .iter()
        .map(|&t| Ok(verify_block(&semigroup_at(&g, t, cfg.tol_build)?, cfg.tol_build)?.leakage()))
        .collect::<Result<Vec<f64>, CliError>>()?;
    let corners = generator_corners(&g, cfg.tol_build)?;
    let derivative = unit_derivative_check(&g, cfg.tol_build)?;
    let m = 2 * g.inner_dim();
    let slack = psd_check(&(identity(m) - one.apply(&identity(m))), cfg.tol_build)?;
    let skeleton = if slack.is_psd { Some(skeleton_consistency(&g, 1e-8)?) } else { None };
    let fd_last = derivative.finite_differences.last().map_or(0.0, |&(_, e)| e);
    let pass = min_margin >= -cfg.tol_build
        && g.hermiticity_residual() <= tol
        && law <= tol
        && leakage.iter().all(|&l| l <= tol)
        && corners.relation_residual <= tol
        && corners.adjoint_residual <= tol
        && derivative.identity_residual <= tol
        && fd_last < 1e-3
        && skeleton.is_none_or(|s| s <= tol);
    let report = json!({
        "command": "lindblad",
        "config": config_value(cfg),
        "d": g.inner_dim(),
        "hermiticity_residual": g.hermiticity_residual(),
        "unit_defect": unit_defect(&g),
        "cp_margins": margins.iter().map(|&(t, m)| json!({ "t": t, "min_eigenvalue": m })).collect::<Vec<_>>(),
        "min_margin": min_margin,
        "semigroup_law_residual": law,
        "block_leakage": leakage,
        "contraction": corners.report,
        "relation_residual": corners.relation_residual,
        "adjoint_residual": corners.adjoint_residual,
        "derivative": derivative,
        "contractive": slack.is_psd,
        "skeleton_residual": skeleton,
        "pass": pass,
    });
    Ok(Outcome::report(report, pass))
}

fn gen_value(cfg: &RunConfig, args: GenArgs) -> Result<Value, CliError> {
    Ok(gen(cfg, &args)?.report)
}

fn gen_args(kind: Kind) -> GenArgs {
    GenArgs { kind, kraus: 2, norm: 0.9, scale: 1.0, diagonal: false, non_unital: false }
}

fn text(o: &Outcome) -> String {
    serde_json::to_string(&o.report).expect("reports serialize")
}

pub fn selftest(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut checks = serde_json::Map::new();
    let mut record = |name: &str, ok: bool| {
        checks.insert(name.into(), json!(ok));
        ok
    };
    let block = gen_value(cfg, gen_args(Kind::Blockcp))?;
    let first = extract(cfg, &block)?;
    record("extract", first.pass);
    record("extract_deterministic", text(&first) == text(&extract(cfg, &block)?));
    record("gen_deterministic", block == gen_value(cfg, gen_args(Kind::Blockcp))?);
    let scaled = gen_value(cfg, GenArgs { scale: 1.25, ..gen_args(Kind::Blockcp) })?;
    record("scaled_not_cp", matches!(extract(cfg, &scaled), Err(CliError::Core(Error::NotCp { .. }))));

    let qds_cfg = RunConfig { horizon: Some(cfg.horizon.unwrap_or(3)), ..cfg.clone() };
    let qds = gen_value(&qds_cfg, gen_args(Kind::Qds))?;
    record("semigroup", semigroup(&qds_cfg, &qds)?.pass);
    record("lift", lift(&qds_cfg, &qds)?.pass);
    record("dilate", dilate(&qds_cfg, &qds)?.pass);
    let diagonal = gen_value(&qds_cfg, GenArgs { diagonal: true, ..gen_args(Kind::Qds) })?;
    let diag = semigroup(&qds_cfg, &diagonal)?;
    let zero = diag.report["norms"].as_array().is_some_and(|ns| ns.iter().skip(1).all(|v| v.as_f64().is_some_and(|x| x <= 1e-12)));
    record("diagonal_zero_morphism", diag.pass && zero);
    let big = RunConfig { horizon: Some(16), ..cfg.clone() };
    record("size_guard", matches!(lift(&big, &qds), Err(CliError::Core(Error::SizeExceeded { .. }))));

    let generator = gen_value(cfg, gen_args(Kind::Generator))?;
    let lb = lindblad(cfg, &generator)?;
    record("lindblad", lb.pass);
    record("lindblad_deterministic", text(&lb) == text(&lindblad(cfg, &generator)?));

    let pass = checks.values().all(|v| v.as_bool() == Some(true));
    let report = json!({ "command": "selftest", "config": config_value(cfg), "checks": checks, "pass": pass });
    Ok(Outcome::report(report, pass))
}
