use blockcp::blockcp::{
    assembled_psd, build_from_contraction, extract_contraction_module, extract_contraction_stinespring, lift,
    random_block_instance, scaled_identity, verify_block,
};
use blockcp::cpmap::CpMap;
use blockcp::dilation::DilationHorizon;
use blockcp::lindblad::{build_generator, semigroup_at};
use blockcp::numerics::{c, direct_sum, expm, identity, matrix_units, max_abs};
use blockcp::prodsys::{generate, lift_morphism, partitions};
use blockcp::random::{ginibre, random_hermitian, random_kraus, random_unitary, seeded};
use blockcp::semigroup::{extract_morphism, inclusion_system, random_block_step, DiscreteQds};
use blockcp::vnmodule::gns_module;
use blockcp::Error;
use proptest::prelude::*;

#[test]
fn fifty_instance_round_trip() {
    for i in 0..50u64 {
        let (n, d) = (2 + (i % 2) as usize, 2 + ((i / 2) % 2) as usize);
        let inst = random_block_instance(&mut seeded(i), n, d, 2, 0.9, 1e-9).unwrap();
        let st = extract_contraction_stinespring(inst.block(), 1e-9).unwrap();
        let (md, _) = extract_contraction_module(inst.block(), 1e-8).unwrap();
        assert!(max_abs(&(&st.t - inst.true_t())) < 1e-7, "instance {i}");
        assert!(st.distance(&md) < 1e-7, "instance {i}");
    }
}

#[test]
fn expanding_map_is_refused() {
    let phi = CpMap::from_kraus(&random_kraus(&mut seeded(4), 2, 2, 2)).unwrap();
    let g = gns_module(&phi);
    let err = build_from_contraction(&g, &g, &scaled_identity(&g, 1.1), 1e-9).unwrap_err();
    assert!(matches!(err, Error::NotContraction { .. }));
    assert!(build_from_contraction(&g, &g, &scaled_identity(&g, 1.0), 1e-9).is_ok());
}

#[test]
fn automorphism_semigroup_is_rigid() {
    // Phi_t = Ad(u^t) with u = diag(u1, u2): every T_t is a scalar unitary
    // on rank-one modules, so |T_t| = 1.
    let mut rng = seeded(5);
    let u = direct_sum(&random_unitary(&mut rng, 2), &random_unitary(&mut rng, 2));
    let qds = DiscreteQds::new(CpMap::conjugation(&u), 3, 1e-9).unwrap();
    let ex = extract_morphism(&qds, 1e-9).unwrap();
    for t in 0..=3 {
        assert!((ex.morphism.get(t).norm() - 1.0).abs() < 1e-9);
        assert_eq!(ex.incl1.module(t).multiplicity(), 1);
    }
    assert!(ex.weak_residual < 1e-9 && ex.strong_residual < 1e-9);
}

#[test]
fn product_system_dimensions_follow_powers() {
    let step = random_block_step(&mut seeded(6), 2, 2).unwrap();
    let qds = DiscreteQds::new(step, 3, 1e-9).unwrap();
    let ex = extract_morphism(&qds, 1e-9).unwrap();
    let ps = generate(&ex.incl1).unwrap();
    let r = ex.incl1.module(1).multiplicity();
    for t in 1..=3 {
        assert_eq!(ps.fiber(t).multiplicity(), r.pow(t as u32));
        assert_eq!(partitions(t).len(), 1 << (t - 1));
    }
    let ps2 = generate(&ex.incl2).unwrap();
    let (_, report) = lift_morphism(&ex.morphism, &ps, &ps2, 1e-7).unwrap();
    assert!(report.max_residual() < 1e-8, "{report:?}");
}

#[test]
fn inner_generator_matches_conjugation() {
    // beta = iH, no couplings: e^{tL}(A) = e^{-itH} A e^{itH}
    let mut rng = seeded(7);
    let (h1, h2) = (random_hermitian(&mut rng, 2), random_hermitian(&mut rng, 2));
    let g = build_generator(&h1 * c(0.0, 1.0), &h2 * c(0.0, 1.0), Vec::new()).unwrap();
    let h = direct_sum(&h1, &h2);
    for t in [0.1, 0.5, 1.0] {
        let phi = semigroup_at(&g, t, 1e-9).unwrap();
        let u = expm(&(&h * c(0.0, t)));
        for e in matrix_units(4) {
            assert!(max_abs(&(phi.apply(&e) - u.adjoint() * &e * &u)) < 1e-10);
        }
    }
}

#[test]
fn dilation_of_automorphisms_is_exact() {
    let mut rng = seeded(8);
    let u = direct_sum(&random_unitary(&mut rng, 2), &random_unitary(&mut rng, 2));
    let qds = DiscreteQds::new(CpMap::conjugation(&u), 3, 1e-9).unwrap();
    let h = DilationHorizon::new(&qds, &lift(0, 0, &identity(2)), 1e-9).unwrap();
    let sweep = h.markov_sweep(&mut rng, 5).unwrap();
    assert!(sweep.iter().all(|e| e.residual < 1e-10));
    assert!(matches!(h.theta(&identity(4), 2, 2), Err(Error::HorizonExceeded { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn scaling_family_positivity(seed in 0u64..10_000, c in 0.0f64..2.0) {
        prop_assume!((c - 1.0).abs() > 0.02);
        let phi = CpMap::from_kraus(&random_kraus(&mut seeded(seed), 2, 2, 2)).unwrap().to_linear();
        let w = assembled_psd(&phi, &phi, &phi.scale(c), 1e-9).unwrap();
        prop_assert_eq!(w.is_psd, c <= 1.0);
    }

    #[test]
    fn block_round_trip(seed in 0u64..10_000, norm in 0.05f64..1.0) {
        let inst = random_block_instance(&mut seeded(seed), 2, 2, 2, norm, 1e-9).unwrap();
        let b = verify_block(inst.block().full(), 1e-9).unwrap();
        let st = extract_contraction_stinespring(&b, 1e-9).unwrap();
        prop_assert!(max_abs(&(&st.t - inst.true_t())) < 1e-7);
        prop_assert!((st.operator_norm - norm).abs() < 1e-7);
    }

    #[test]
    fn unital_inclusion_systems(seed in 0u64..10_000) {
        let step = random_block_step(&mut seeded(seed), 2, 2).unwrap();
        let incl = inclusion_system(&DiscreteQds::new(step, 3, 1e-9).unwrap(), 1e-9).unwrap();
        prop_assert!(incl.report().max_residual() < 1e-8);
        prop_assert!(incl.semigroup_law_residual() < 1e-8);
    }

    #[test]
    fn non_block_perturbation_is_detected(seed in 0u64..10_000) {
        let mut rng = seeded(seed);
        let k = random_block_step(&mut rng, 2, 1).unwrap().kraus()[0].clone() + ginibre(&mut rng, 4, 4).scale(0.1);
        let phi = CpMap::conjugation(&k);
        prop_assert!(
            matches!(verify_block(&phi, 1e-9), Err(Error::NotBlock { .. })),
            "block structure was not flagged"
        );
    }
}
