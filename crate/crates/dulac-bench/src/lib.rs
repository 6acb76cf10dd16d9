//! Fixtures shared by the benchmark kernels.

use dulac_core::coeff::qi;
use dulac_core::{parse_germ_str, parse_transseries, NumericGerm, Transseries, TruncationBudget};

/// `z - z^2`, with the domain used by the numeric kernels.
pub fn quadratic() -> NumericGerm {
    let def = parse_germ_str("name=q\nbackend=series\nbody=z - z^2\nalpha=2\nm=0\na=1\nC=0\nR=0.5\nreal=true\n").unwrap();
    NumericGerm::new(&def).unwrap()
}

/// A parabolic series with logarithmic blocks up to `z^z_order`.
pub fn log_series(z_order: i64, l_depth: i64) -> Transseries {
    parse_transseries("z - z^2*l + 1/3*z^3 - 2*z^3*l^2 + 1/2*z^4*l")
        .unwrap()
        .with_budget(TruncationBudget::new(qi(z_order), l_depth))
}

/// A power series with rational coefficients up to `z^order`.
pub fn power_series(order: i64) -> Transseries {
    let body: Vec<String> = (2..=order).map(|k| format!("1/{k}*z^{k}")).collect();
    parse_transseries(&format!("z + {}", body.join(" + "))).unwrap().with_budget(TruncationBudget::new(qi(order), 2))
}
