//! Symbolic and numeric machinery for parabolic generalized Dulac germs.
//!
//! The formal layer ([`transseries`], [`normal_form`], [`fatou`]) works with
//! exact complex rational coefficients in the variables `z`,
//! `l = -1/log z` and `l2 = -1/log l`. The numeric layer ([`petals`],
//! [`horn`], [`gevrey`]) evaluates germs on the Riemann surface of the
//! logarithm through the chart `zeta = -log z`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coeff;
pub mod error;
pub mod fatou;
pub mod germ;
pub mod gevrey;
pub mod horn;
pub mod normal_form;
pub mod numeric;
pub mod petals;
pub mod transseries;

pub use coeff::{Coeff, Q};
pub use error::{Error, FormalError, NumericError, ParseError, Result};
pub use fatou::{abel_residual, invariants_from_fatou, solve_abel, FatouSeries};
pub use germ::{parse_germ_file, parse_germ_str, parse_transseries, serialize, Backend, Expr, GermDefinition};
pub use normal_form::{
    eliminate_first_block, eliminate_higher_block, formal_conjugacy, model_germ, reduce_to_normal_form,
    EliminationStep, FormalInvariants, ModelKind, Reduction, StepKind,
};
pub use numeric::{NumericGerm, SurfacePoint};
pub use transseries::{Basis, Block, Monomial, Transseries, TruncationBudget, ZExponent};
pub use petals::{
    build_petal, build_petals, check_invariance, fatou_inverse, numeric_fatou, opening_at, orbit_csv, petals_svg,
    verify_uniform_bound, Chart, FatouCoordinate, Petal, PetalSign, Sector, UniformBound,
};
pub use horn::{
    compare_moduli, compute_moduli, fit_radii, horn_map, rescale_to_alpha2, symmetry_check, Comparison, HornGrid,
    HornMapSample, Moduli, Pole, RadiiFit, SymmetryReport,
};
pub use gevrey::{
    flat_decay_check, log_gevrey_order_estimate, numeric_integral_sum, remainder_bound_check, CoefficientSequence, Cusp,
    GevreyEstimate,
};
