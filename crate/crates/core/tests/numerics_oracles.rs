use blockcp::numerics::{
    c, column_basis, cr, eig_hermitian, expm, flatten, identity, kron, logm, max_abs, pinv, psd_check, rank, unflatten,
    zeros, RANK_TOL,
};
use blockcp::random::{ginibre, random_hermitian, seeded};
use blockcp::CMatrix;
use proptest::prelude::*;

fn tridiagonal(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => cr(2.0),
        1 => cr(-1.0),
        _ => cr(0.0),
    })
}

#[test]
fn second_difference_spectrum() {
    // eigenvalues 2 - 2 cos(k pi / (n + 1))
    for n in [3, 6, 11] {
        let e = eig_hermitian(&tridiagonal(n), 1e-12).unwrap();
        let mut want: Vec<f64> =
            (1..=n).map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos()).collect();
        want.sort_by(|a, b| b.total_cmp(a));
        for (got, w) in e.values.iter().zip(&want) {
            assert!((got - w).abs() < 1e-12, "{got} vs {w}");
        }
        assert!(max_abs(&(e.reconstruct() - tridiagonal(n))) < 1e-12);
    }
}

#[test]
fn psd_witness_agrees_with_sampled_quadratic_forms() {
    let mut rng = seeded(10);
    for _ in 0..10 {
        let h = random_hermitian(&mut rng, 4);
        let w = psd_check(&h, 1e-12).unwrap();
        let mut smallest = f64::INFINITY;
        for _ in 0..2000 {
            let v = ginibre(&mut rng, 4, 1);
            let q = (v.adjoint() * &h * &v)[(0, 0)].re / (v.adjoint() * &v)[(0, 0)].re;
            smallest = smallest.min(q);
        }
        assert!(smallest >= w.min_eigenvalue - 1e-12);
        assert_eq!(w.is_psd, w.min_eigenvalue >= -1e-12);
        let g = ginibre(&mut rng, 4, 2);
        assert!(psd_check(&(&g * g.adjoint()), 1e-12).unwrap().is_psd);
    }
}

#[test]
fn exponential_closed_forms() {
    let n = CMatrix::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(0.0), cr(0.0)]);
    let want = CMatrix::from_row_slice(2, 2, &[cr(1.0), cr(1.0), cr(0.0), cr(1.0)]);
    assert!(max_abs(&(expm(&n) - want)) < 1e-14);
    // exp(i theta X) = cos(theta) I + i sin(theta) X
    let x = CMatrix::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)]);
    for theta in [0.3, 1.7, 6.0] {
        let got = expm(&(&x * c(0.0, theta)));
        let want = identity(2).scale(theta.cos()) + &x * c(0.0, theta.sin());
        assert!(max_abs(&(got - want)) < 1e-12);
    }
    let big = tridiagonal(3).scale(20.0);
    let e = eig_hermitian(&big, 1e-12).unwrap();
    let via_eig = &e.vectors * CMatrix::from_diagonal(&e.values.iter().map(|v| cr(v.exp())).collect::<Vec<_>>().into()) * e.vectors.adjoint();
    assert!(max_abs(&(expm(&big) - &via_eig)) / max_abs(&via_eig) < 1e-11);
}

#[test]
fn logarithm_inverts_exponential() {
    let mut rng = seeded(11);
    for _ in 0..5 {
        let x = ginibre(&mut rng, 3, 3).scale(0.4);
        assert!(max_abs(&(logm(&expm(&x)).unwrap() - &x)) < 1e-10);
    }
    assert!(logm(&zeros(2, 2)).is_err());
}

#[test]
fn penrose_identities() {
    let mut rng = seeded(12);
    for (r, k, cols) in [(5, 2, 4), (3, 3, 6), (6, 1, 2)] {
        let a = ginibre(&mut rng, r, k) * ginibre(&mut rng, k, cols);
        let p = pinv(&a, RANK_TOL);
        assert_eq!(rank(&a, RANK_TOL), k);
        assert!(max_abs(&(&a * &p * &a - &a)) < 1e-10);
        assert!(max_abs(&(&p * &a * &p - &p)) < 1e-10);
        let ap = &a * &p;
        let pa = &p * &a;
        assert!(max_abs(&(&ap - ap.adjoint())) < 1e-10);
        assert!(max_abs(&(&pa - pa.adjoint())) < 1e-10);
        let q = column_basis(&a, RANK_TOL);
        assert_eq!(q.ncols(), k);
        assert!(max_abs(&(&q * q.adjoint() - ap)) < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn kron_mixed_product(seed in 0u64..10_000) {
        let mut rng = seeded(seed);
        let (a, b) = (ginibre(&mut rng, 2, 3), ginibre(&mut rng, 3, 2));
        let (x, y) = (ginibre(&mut rng, 3, 2), ginibre(&mut rng, 2, 2));
        let lhs = kron(&a, &b) * kron(&x, &y);
        prop_assert!(max_abs(&(lhs - kron(&(&a * &x), &(&b * &y)))) < 1e-10);
    }

    #[test]
    fn flatten_round_trip(seed in 0u64..10_000, r in 1usize..5, k in 1usize..5) {
        let m = ginibre(&mut seeded(seed), r, k);
        prop_assert_eq!(unflatten(&flatten(&m), r, k), m);
    }

    #[test]
    fn exponential_group_law(seed in 0u64..10_000, s in 0.0f64..1.5, t in 0.0f64..1.5) {
        let a = ginibre(&mut seeded(seed), 3, 3).scale(0.7);
        let lhs = expm(&a.scale(s)) * expm(&a.scale(t));
        prop_assert!(max_abs(&(lhs - expm(&a.scale(s + t)))) < 1e-10);
    }
}
