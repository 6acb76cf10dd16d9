//! Formal Fatou coordinate: the solution of `Psi(f) - Psi = 1`.
//!
//! With `f = z + z^alpha R1(l) + ...` the lowest unmatched block
//! `z^beta E_beta(l)` of the residual `E = Psi(f) - Psi - 1` is removed by
//! `dPsi = -∫ z^(beta - alpha) E_beta / R1 dz`, since the linear part of
//! `dPsi(f) - dPsi` is `dPsi' z^alpha R1`. Every other contribution lands
//! in strictly higher blocks, so the loop advances through the residual
//! block by block. Integration produces the `l^-1 = -log z` and
//! `l2^-1 = log(-log z)` monomials; the constant term is pinned to 0.

use num_traits::{One, Zero};

use crate::coeff::{c_q, Coeff, Q};
use crate::error::FormalError;
use crate::normal_form::FormalInvariants;
use crate::transseries::{Block, Transseries, TruncationBudget};

/// Iteration cap of the block loop.
const ABEL_CAP: usize = 10_000;

/// Extra `l`-depth used while solving.
const L_MARGIN: i64 = 4;

/// A formal Fatou coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct FatouSeries {
    /// `Psi` without constant term; blocks above `z^(Z - alpha + 1)` are
    /// unknown.
    pub body: Transseries,
    pub alpha: Q,
}

impl FatouSeries {
    pub fn budget(&self) -> TruncationBudget {
        self.body.budget()
    }

    /// Coefficient of `l2^-1`, if known.
    pub fn log_log_coeff(&self) -> Option<Coeff> {
        self.body.coeff(Q::zero(), 0, -1)
    }
}

/// `(alpha, R1)` with `f = z + z^alpha R1(l) + ...`.
fn first_block(f: &Transseries) -> Result<(Q, Block), FormalError> {
    let mut it = f.blocks();
    match it.next() {
        Some((b, blk)) if b.is_one() && blk.coeff(0, 0) == Some(Coeff::one()) && blk.terms().count() == 1 => {}
        _ => return Err(FormalError::NonParabolic("series does not start with z".into())),
    }
    let (alpha, blk) = it.find(|(_, b)| !b.is_empty()).ok_or_else(|| FormalError::BudgetTooSmall("no block after z within budget".into()))?;
    if blk.lead().is_some_and(|((_, n), _)| *n != 0) {
        return Err(FormalError::Malformed("leading block starts with an l2 monomial".into()));
    }
    Ok((*alpha, blk.clone()))
}

/// Solves the Abel equation of a parabolic series up to `budget`.
pub fn solve_abel(f: &Transseries, budget: TruncationBudget) -> Result<FatouSeries, FormalError> {
    let (alpha, r1) = first_block(f)?;
    let m = r1.min_order().unwrap_or(0);
    let work = budget.widen(Q::zero(), L_MARGIN + m.abs());
    let f = f.with_budget(work);
    let den = Transseries::from_blocks([(Q::zero(), r1)], None, work);
    let mut psi = Transseries::zero(work);
    let mut e = Transseries::constant(-Coeff::one(), work);
    let mut last: Option<Q> = None;
    for _ in 0..ABEL_CAP {
        let Some((beta, eb)) = e.blocks().find(|(b, blk)| **b <= budget.z_order && !blk.is_empty()).map(|(b, blk)| (*b, blk.clone())) else {
            let top = budget.z_order - alpha + Q::one();
            let body = psi.with_budget(budget).restrict(None, Some(top));
            return Ok(FatouSeries { body, alpha });
        };
        if last.is_some_and(|l| beta <= l) {
            return Err(FormalError::NoConvergence(format!("block z^{} reappeared in the Abel residual", crate::coeff::fmt_q(beta))));
        }
        last = Some(beta);
        let num = Transseries::from_blocks([(beta - alpha, eb)], None, work);
        let d = num.div(&den)?.integrate_z()?.neg();
        e = e.add(&d.compose_difference(&f)?);
        psi = psi.add(&d);
    }
    Err(FormalError::NoConvergence("Abel block loop exceeded its cap".into()))
}

/// `Psi(f) - Psi - 1`, evaluated through the Taylor operator so that the
/// unknown blocks of `Psi` only affect orders beyond the budget.
pub fn abel_residual(f: &Transseries, psi: &FatouSeries) -> Result<Transseries, FormalError> {
    let f = f.with_budget(TruncationBudget::new(f.budget().z_order.max(psi.budget().z_order), psi.budget().l_depth));
    let d = psi.body.compose_difference(&f)?;
    Ok(d.sub(&Transseries::constant(Coeff::one(), d.budget())))
}

/// Reads `(alpha, m, rho)` from the Fatou coordinate of a series with
/// leading part `z - z^alpha l^m`. The leading block is
/// `z^(1 - alpha) l^-m / (alpha - 1) + ...` and the `l2^-1` coefficient is
/// `rho - m/2`.
pub fn invariants_from_fatou(psi: &FatouSeries, alpha: Q) -> Result<FormalInvariants, FormalError> {
    let (b1, blk) = psi.body.blocks().find(|(_, b)| !b.is_empty()).ok_or(FormalError::ZeroSeries)?;
    let lead_alpha = Q::one() - *b1;
    if lead_alpha != alpha || lead_alpha != psi.alpha {
        return Err(FormalError::Malformed(format!("leading exponent {} does not match alpha", crate::coeff::fmt_q(*b1))));
    }
    let ((k, n), c) = blk.lead().unwrap();
    if *n != 0 {
        return Err(FormalError::Malformed("leading block starts with an l2 monomial".into()));
    }
    if *c != c_q((alpha - Q::one()).recip()) {
        return Err(FormalError::NotNormalized("leading coefficient is not 1/(alpha - 1)".into()));
    }
    let m = -k;
    let rho = psi
        .log_log_coeff()
        .map(|c| c + c_q(Q::new(m, 2)))
        .ok_or_else(|| FormalError::BudgetTooSmall("the l2^-1 monomial lies beyond the budget".into()))?;
    Ok(FormalInvariants::new(alpha, m, rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{c_int, q, qi};
    use crate::germ::parse_transseries;
    use crate::normal_form::{model_germ, ModelKind};

    fn b(z: i64, l: i64) -> TruncationBudget {
        TruncationBudget::new(qi(z), l)
    }

    #[test]
    fn quadratic_germ() {
        let f = parse_transseries("z - z^2").unwrap().with_budget(b(4, 4));
        let psi = solve_abel(&f, b(4, 4)).unwrap();
        assert_eq!(psi.body.coeff(qi(-1), 0, 0), Some(c_int(1)));
        assert_eq!(psi.body.coeff(qi(0), -1, 0), Some(c_int(-1)));
        assert!(abel_residual(&f, &psi).unwrap().is_zero());
    }

    #[test]
    fn residual_detects_perturbation() {
        let f = parse_transseries("z - z^2").unwrap().with_budget(b(4, 4));
        let psi = solve_abel(&f, b(4, 4)).unwrap();
        let mut bad = psi.clone();
        bad.body = bad.body.add(&Transseries::monomial(c_int(1), qi(1), 0, 0, bad.budget()));
        let r = abel_residual(&f, &bad).unwrap();
        assert_eq!(r.coeff(qi(2), 0, 0), Some(c_int(-1)));
        let mut shifted = psi.clone();
        shifted.body = shifted.body.add(&Transseries::constant(c_int(7), psi.budget()));
        assert_eq!(abel_residual(&f, &shifted).unwrap(), abel_residual(&f, &psi).unwrap());
    }

    #[test]
    fn log_germ_leading_block() {
        let f = parse_transseries("z - z^2*l").unwrap().with_budget(b(3, 5));
        let psi = solve_abel(&f, b(3, 5)).unwrap();
        assert_eq!(psi.body.coeff(qi(-1), -1, 0), Some(c_int(1)));
        assert_eq!(psi.body.coeff(qi(-1), 0, 0), Some(c_int(-1)));
        assert!(abel_residual(&f, &psi).unwrap().is_zero());
    }

    #[test]
    fn invariants_of_models() {
        for (alpha, m, rho) in [(qi(2), 0, q(1, 2)), (qi(2), 1, q(1, 3)), (qi(3), -1, qi(0))] {
            let inv = FormalInvariants::new(alpha, m, c_q(rho));
            let bud = TruncationBudget::new(Q::from_integer(2) * alpha, 6);
            let f = model_germ(&inv, ModelKind::F, None, bud).unwrap();
            let psi = solve_abel(&f, bud).unwrap();
            assert!(abel_residual(&f, &psi).unwrap().is_zero());
            assert_eq!(invariants_from_fatou(&psi, alpha).unwrap(), inv);
        }
    }
}
