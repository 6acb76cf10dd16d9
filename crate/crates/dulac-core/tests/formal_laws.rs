//! Exact algebraic laws on randomized series.

mod common;

use dulac_core::normal_form::StepKind;
use dulac_core::{invariants_from_fatou, reduce_to_normal_form, solve_abel};

#[test]
fn reduction_and_fatou_agree_on_random_series() {
    for seed in 0..20 {
        let f = common::random_dulac(seed, 6);
        let r = reduce_to_normal_form(&f).unwrap();
        let psi = solve_abel(&f, f.budget()).unwrap();
        let inv = invariants_from_fatou(&psi, r.invariants.alpha).unwrap();
        assert_eq!(r.invariants, inv, "seed {seed}: {f}");
        for s in r.steps.iter().filter(|s| s.kind != StepKind::FirstBlock) {
            assert!(s.bracket_residual(f.budget()).is_zero());
        }
    }
}
