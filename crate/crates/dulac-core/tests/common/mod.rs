//! Shared generators for the integration tests.

#![allow(dead_code)]

use dulac_core::coeff::{c_real, q, qi, rat};
use dulac_core::{Monomial, Transseries, TruncationBudget, Q};
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random rational `p/q`, `p` in `[-3, 3] \ {0}`, `q` in `[1, 4]`.
pub fn small_rational(rng: &mut ChaCha8Rng) -> num_rational::BigRational {
    let mut p = 0;
    while p == 0 {
        p = rng.random_range(-3..=3);
    }
    rat(p, rng.random_range(1..=4))
}

/// A random generalized Dulac series `z - z^alpha l^m + ...` with random
/// rational blocks on the lattice `alpha + k/2`, up to the residual block.
pub fn random_dulac(seed: u64, l_depth: i64) -> Transseries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = [q(3, 2), qi(2), q(5, 2), qi(3)][rng.random_range(0..4)];
    let m: i64 = rng.random_range(-1..=1);
    let z_order = Q::from_integer(2) * alpha - Q::one();
    let budget = TruncationBudget::new(z_order, l_depth);
    let mut ms = vec![
        Monomial { coeff: c_real(rat(1, 1)), zexp: Q::one(), lexp: 0, l2exp: 0 },
        Monomial { coeff: c_real(rat(-1, 1)), zexp: alpha, lexp: m, l2exp: 0 },
    ];
    for j in 1..=2 {
        if rng.random_bool(0.6) {
            ms.push(Monomial { coeff: c_real(small_rational(&mut rng)), zexp: alpha, lexp: m + j, l2exp: 0 });
        }
    }
    let mut b = alpha + q(1, 2);
    while b <= z_order {
        for _ in 0..rng.random_range(0..=2) {
            let k = rng.random_range(m - 1..=m + 2);
            ms.push(Monomial { coeff: c_real(small_rational(&mut rng)), zexp: b, lexp: k, l2exp: 0 });
        }
        b += q(1, 2);
    }
    Transseries::from_monomials(ms, budget)
}

/// A random parabolic power series `z + sum c_k z^k`, `k = 2..=order`.
pub fn random_parabolic(seed: u64, order: i64) -> Transseries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let budget = TruncationBudget::new(qi(order), 4);
    let mut ms = vec![Monomial { coeff: c_real(rat(1, 1)), zexp: Q::one(), lexp: 0, l2exp: 0 }];
    for k in 2..=order {
        if rng.random_bool(0.7) {
            ms.push(Monomial { coeff: c_real(small_rational(&mut rng)), zexp: qi(k), lexp: 0, l2exp: 0 });
        }
    }
    Transseries::from_monomials(ms, budget)
}
