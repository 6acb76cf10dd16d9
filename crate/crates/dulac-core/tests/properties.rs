//! Property tests of the algebraic laws and numeric round trips.

mod common;

use num_complex::Complex64;
use proptest::prelude::*;

use dulac_core::coeff::{c_real, q, qi, rat};
use dulac_core::numeric::SurfacePoint;
use dulac_core::transseries::{formal_flow, invert};
use dulac_core::{
    invariants_from_fatou, log_gevrey_order_estimate, parse_germ_str, parse_transseries, reduce_to_normal_form, serialize, solve_abel,
    CoefficientSequence, Monomial, NumericGerm, Transseries, TruncationBudget,
};

fn budget() -> TruncationBudget {
    TruncationBudget::new(qi(6), 4)
}

/// Small series with integer exponents in `1..=4` and `l` powers in `-1..=2`.
fn small_series() -> impl Strategy<Value = Transseries> {
    prop::collection::vec((1i64..=4, -1i64..=2, -3i64..=3, 1i64..=3), 1..5).prop_map(|terms| {
        let ms = terms.into_iter().map(|(e, k, p, d)| Monomial { coeff: c_real(rat(p, d)), zexp: qi(e), lexp: k, l2exp: 0 });
        Transseries::from_monomials(ms, budget())
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ring_laws(a in small_series(), b in small_series(), c in small_series()) {
        prop_assert!(a.mul(&b).sub(&b.mul(&a)).is_zero());
        prop_assert!(a.add(&b).mul(&c).sub(&a.mul(&c).add(&b.mul(&c))).is_zero());
        prop_assert!(a.mul(&b).mul(&c).sub(&a.mul(&b.mul(&c))).is_zero());
        prop_assert!(a.sub(&a).is_zero());
    }

    #[test]
    fn derivative_is_a_derivation(a in small_series(), b in small_series()) {
        let lhs = a.mul(&b).derive_z();
        let rhs = a.derive_z().mul(&b).add(&a.mul(&b.derive_z()));
        prop_assert!(lhs.sub(&rhs).is_zero());
    }

    #[test]
    fn inverse_law(seed in 0u64..10_000) {
        let f = common::random_parabolic(seed, 6);
        let id = Transseries::z(f.budget());
        let fi = invert(&f).unwrap();
        prop_assert!(fi.compose(&f).unwrap().sub(&id).is_zero());
        prop_assert!(f.compose(&fi).unwrap().sub(&id).is_zero());
    }

    #[test]
    fn flow_law(seed in 0u64..10_000, (cn, cd) in (-4i64..=4, 1i64..=3), (dn, dd) in (-4i64..=4, 1i64..=3)) {
        let f = common::random_parabolic(seed, 6);
        let xi = f.sub(&Transseries::z(f.budget()));
        let (c, d) = (q(cn, cd), q(dn, dd));
        let lhs = formal_flow(&xi, c).unwrap().compose(&formal_flow(&xi, d).unwrap()).unwrap();
        prop_assert!(lhs.sub(&formal_flow(&xi, c + d).unwrap()).is_zero());
    }

    #[test]
    fn germ_text_round_trip(a in small_series()) {
        let text = serialize(&a);
        let back = parse_transseries(&text).unwrap().with_budget(budget());
        prop_assert!(back.sub(&a).is_zero(), "{text}");
    }

    #[test]
    fn estimator_tracks_the_order(p in 1.5f64..6.0) {
        let est = log_gevrey_order_estimate(&CoefficientSequence::synthetic(200, p, 0.0, 1.0)).unwrap();
        prop_assert!((est.m_hat - p).abs() < 0.1 * p);
    }

    #[test]
    fn surface_points_round_trip(r in 1e-6f64..0.9, arg in -3.0f64..3.0, level in -5i64..=5) {
        let z = Complex64::from_polar(r, arg);
        let p = SurfacePoint::from_z(z, level);
        prop_assert_eq!(p.level(), level);
        prop_assert!((p.z() - z).norm() < 1e-12 * r.max(1e-300) + 1e-15);
    }

    #[test]
    fn step_then_inverse_step(r in 0.01f64..0.3, arg in -3.0f64..3.0) {
        let def = parse_germ_str("name=q\nbackend=series\nbody=z - z^2\nalpha=2\nm=0\na=1\nC=0\nR=0.5\n").unwrap();
        let g = NumericGerm::new(&def).unwrap();
        let p = SurfacePoint::from_polar(r, arg);
        let fp = g.step(&p).unwrap();
        let back = g.inverse_step(&fp).unwrap();
        prop_assert!((back.zeta - p.zeta).norm() < 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 8, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn reduction_agrees_with_fatou_and_is_idempotent(seed in 100u64..10_000) {
        let f = common::random_dulac(seed, 4);
        let r = reduce_to_normal_form(&f).unwrap();
        let psi = solve_abel(&r.normalized_input, r.normalized_input.budget()).unwrap();
        prop_assert_eq!(&invariants_from_fatou(&psi, r.invariants.alpha).unwrap(), &r.invariants);
        prop_assert_eq!(&reduce_to_normal_form(&r.normal).unwrap().invariants, &r.invariants);
    }
}
