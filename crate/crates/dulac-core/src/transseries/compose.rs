//! Composition, compositional inverse and formal flows.
//!
//! Composition with a parabolic germ `g = z (1 + u)` uses the Taylor
//! operator written with the Euler operator `D = z d/dz`:
//!
//! `f(z + z u) = sum_k P_k u^k`, `P_0 = f`, `P_k = (D - (k - 1)) P_(k-1) / k`,
//!
//! so that `P_k = z^k f^(k) / k!` stays block-preserving.

use std::collections::BTreeSet;

use num_traits::{One, Signed, Zero};

use super::{omin, Block, Transseries, TruncationBudget};
use crate::coeff::{c_q, c_real, is_real, rat_pow, Coeff, Q};
use crate::error::FormalError;

/// Iteration cap of the Neumann series in [`invert`].
const INVERT_CAP: usize = 10_000;

impl Transseries {
    /// Composition `self ∘ g` for `g = c z + o(z)` with `c > 0`.
    ///
    /// The result is truncated to the budget of `self`; unknown parts of
    /// `g` propagate into the precision of the result.
    pub fn compose(&self, g: &Transseries) -> Result<Transseries, FormalError> {
        let (c, g1) = split_homothety(g)?;
        let f = if c.is_one() { self.clone() } else { homothety(self, &c)? };
        let tail = taylor_tail(&f, &g1)?;
        Ok(f.add(&tail))
    }

    /// `self ∘ g - self`, computed without forming `self ∘ g`.
    pub fn compose_difference(&self, g: &Transseries) -> Result<Transseries, FormalError> {
        let (c, g1) = split_homothety(g)?;
        if c.is_one() {
            taylor_tail(self, &g1)
        } else {
            Ok(self.compose(g)?.sub(self))
        }
    }
}

/// Lie bracket of the vector fields `x d/dz` and `y d/dz`: `x' y - x y'`.
pub fn lie_bracket(x: &Transseries, y: &Transseries) -> Transseries {
    x.derive_z().mul(y).sub(&x.mul(&y.derive_z()))
}

/// Splits `g = c g1` with `g1 = z + o(z)`; `c` is a positive rational.
fn split_homothety(g: &Transseries) -> Result<(num_rational::BigRational, Transseries), FormalError> {
    let (b, blk) = g.blocks.iter().next().ok_or_else(|| FormalError::NonParabolic("zero germ".into()))?;
    if !b.is_one() {
        return Err(FormalError::NonParabolic(format!("leading exponent {} is not 1", crate::coeff::fmt_q(*b))));
    }
    if blk.min_order().is_some_and(|k| k < 0) || blk.terms.keys().any(|(k, n)| *k == 0 && *n != 0) {
        return Err(FormalError::NonParabolic("leading block is not constant".into()));
    }
    let c = blk.coeff(0, 0).ok_or_else(|| FormalError::NonParabolic("leading coefficient unknown".into()))?;
    if !is_real(&c) || !c.re.is_positive() {
        return Err(FormalError::NonParabolic("leading coefficient must be real and positive".into()));
    }
    let c = c.re;
    if c.is_one() {
        return Ok((c, g.clone()));
    }
    let inv = c_real(c.recip());
    Ok((c, g.scale(&inv)))
}

/// `f(c z)` for `l`-free series with integer exponents.
fn homothety(f: &Transseries, c: &num_rational::BigRational) -> Result<Transseries, FormalError> {
    let mut out = f.clone();
    for (b, blk) in out.blocks.iter_mut() {
        if *b.denom() != 1 || blk.terms.keys().any(|key| *key != (0, 0)) || blk.prec.is_some() {
            return Err(FormalError::UnsupportedHomothety);
        }
        let factor = rat_pow(c, b.to_integer()).ok_or(FormalError::UnsupportedHomothety)?;
        *blk = blk.scale(&c_real(factor));
    }
    Ok(out)
}

/// Product computed in a window large enough for both operands, then
/// truncated to `target`.
fn mul_within(a: &Transseries, b: &Transseries, target: TruncationBudget) -> Transseries {
    let wide = TruncationBudget::new(
        a.budget.z_order.max(b.budget.z_order).max(target.z_order),
        a.budget.l_depth.max(b.budget.l_depth).max(target.l_depth),
    );
    a.with_budget(wide).mul(&b.with_budget(wide)).with_budget(target)
}

/// `sum_(k >= 1) P_k u^k` for `g1 = z (1 + u)`.
fn taylor_tail(f: &Transseries, g1: &Transseries) -> Result<Transseries, FormalError> {
    let budget = f.budget;
    let zero = || {
        let mut t = Transseries::zero(budget);
        t.zprec = f.zprec;
        t.basis = f.basis.clone();
        t
    };
    let (vz_f, vf) = match (f.min_zexp(), f.min_lorder()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Ok(zero()),
    };
    let z_order = budget.z_order;
    let l_depth = budget.l_depth;
    let ub = TruncationBudget::new((z_order - vz_f).max(Q::zero()), l_depth - vf.min(0));
    let u = g1.shift(-Q::one(), 0).sub(&Transseries::one(g1.budget)).with_budget(ub);
    if u.zprec.is_some_and(|z| z < Q::zero()) || u.min_zexp().is_some_and(|b| b < Q::zero()) {
        return Err(FormalError::NonParabolic("g/z - 1 is not o(1)".into()));
    }
    let v0 = u.blocks.get(&Q::zero()).and_then(Block::min_order);
    if v0.is_some_and(|v| v <= 0) {
        return Err(FormalError::NonParabolic("g/z - 1 has a non-decaying l-part".into()));
    }
    let positive: Vec<(Q, Option<i64>)> = u.blocks.iter().filter(|(b, _)| b.is_positive()).map(|(b, blk)| (*b, blk.min_order())).collect();
    // every term with k >= 1 carries the unknown part of f shifted by at
    // least the smallest positive exponent of u
    let mut zeff = z_order;
    if let Some(zp) = u.zprec {
        zeff = zeff.min(vz_f + zp);
    }
    if let (Some(zp), Some((d, _))) = (f.zprec, positive.first()) {
        zeff = zeff.min(zp + *d);
    }
    let zrange = zeff - vz_f;
    let n = match positive.first() {
        Some((d, _)) if zrange >= Q::zero() => (zrange / *d).floor().to_integer(),
        _ => 0,
    };
    let vplus = positive.iter().filter_map(|(_, v)| *v).min();
    let k_max = match v0 {
        None => n,
        Some(v) => {
            let drift = n * vplus.map_or(0, |vp| (vp - v).min(0));
            let mut k = n;
            while vf + k * v + drift <= l_depth {
                k += 1;
            }
            k
        }
    };
    if k_max <= 0 || u.is_zero() && u.zprec.is_none() {
        let mut t = zero();
        t.zprec = super::omin_q(t.zprec, u.zprec.map(|zp| vz_f + zp));
        return Ok(t);
    }
    let lu_min = k_max * u.min_lorder().unwrap_or(0).min(0);
    let pb = TruncationBudget::new(z_order, l_depth - lu_min);
    let mut p = f.with_budget(pb);
    let mut upow = Transseries::one(ub);
    let mut acc = zero();
    acc.zprec = None;
    for k in 1..=k_max {
        let kq = Q::from_integer(k);
        p = p.euler().sub(&p.scale_q(kq - Q::one())).scale_q(kq.recip());
        upow = upow.mul(&u);
        let term = mul_within(&p, &upow, budget);
        acc = acc.add(&term);
    }
    if v0.is_some() {
        mark_l_tail(&mut acc, f, &positive, zeff, l_depth);
    }
    acc.basis = acc.basis.union(&f.basis);
    Ok(acc)
}

/// Records the dropped infinite `l`-tail of a composition whose `u` has a
/// block at `z^0`: every reachable block loses precision beyond `l_depth`.
fn mark_l_tail(acc: &mut Transseries, f: &Transseries, positive: &[(Q, Option<i64>)], zeff: Q, l_depth: i64) {
    let mut offsets: BTreeSet<Q> = BTreeSet::from([Q::zero()]);
    let mut frontier = vec![Q::zero()];
    let span = zeff - f.min_zexp().unwrap_or_else(Q::zero);
    while let Some(o) = frontier.pop() {
        for (d, _) in positive {
            let next = o + *d;
            if next <= span && offsets.insert(next) {
                frontier.push(next);
            }
        }
    }
    let mut touched = false;
    for b in f.blocks.keys() {
        for o in &offsets {
            let beta = *b + *o;
            if beta > zeff {
                continue;
            }
            let blk = acc.blocks.entry(beta).or_insert_with(Block::exact);
            blk.prec = omin(blk.prec, Some(l_depth + 1));
            blk.normalize();
            touched = true;
        }
    }
    acc.clipped |= touched;
}

/// Compositional inverse of a parabolic germ by the Neumann series
/// `S_0 = z - f`, `S_(n+1) = S_n - S_n ∘ f`, `f^-1 = z + sum S_n`.
pub fn invert(f: &Transseries) -> Result<Transseries, FormalError> {
    let (c, _) = split_homothety(f)?;
    if !c.is_one() {
        return Err(FormalError::NonParabolic("leading coefficient must be 1".into()));
    }
    let id = Transseries::z(f.budget);
    let mut s = id.sub(f);
    let mut acc = id.add(&s);
    for _ in 0..INVERT_CAP {
        if s.is_zero() {
            return Ok(acc);
        }
        s = s.compose_difference(f)?.neg();
        acc = acc.add(&s);
    }
    Err(FormalError::NoConvergence("inverse series did not terminate within budget".into()))
}

/// Time-`c` flow of the vector field `xi d/dz`: `sum_k c^k xi^[k] / k!`
/// with `xi^[0] = z` and `xi^[k+1] = xi (xi^[k])'`.
pub fn formal_flow(xi: &Transseries, c: Q) -> Result<Transseries, FormalError> {
    let budget = xi.budget;
    let id = Transseries::z(budget);
    let Some(v) = xi.min_zexp() else {
        return Ok(id);
    };
    if v <= Q::one() {
        return Err(FormalError::NonParabolic("vector field must have z-order > 1".into()));
    }
    if c.is_zero() {
        return Ok(id);
    }
    let steps = ((budget.z_order - Q::one()) / (v - Q::one())).floor().to_integer().max(0) + 1;
    let extra = steps * (1 + (-xi.min_lorder().unwrap_or(0)).max(0));
    let work = budget.widen(Q::zero(), extra);
    let xi_w = xi.with_budget(work);
    let mut term = Transseries::z(work);
    let mut acc = term.clone();
    let mut coef = Coeff::one();
    for k in 1..=steps {
        term = xi_w.mul(&term.derive_z());
        coef *= c_q(c / Q::from_integer(k));
        if term.blocks.is_empty() && term.zprec.is_none_or(|z| z > budget.z_order) {
            break;
        }
        acc = acc.add(&term.scale(&coef));
    }
    let mut out = acc.with_budget(budget);
    out.basis = out.basis.union(&xi.basis);
    Ok(out)
}

/// Homothety helper for germs given by their blocks: `t(z)` with every
/// block `z^b` multiplied by `s^b`, `s` rational and exponents integer.
pub(crate) fn scale_argument(t: &Transseries, s: &num_rational::BigRational) -> Result<Transseries, FormalError> {
    homothety(t, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{c_int, qi};
    use crate::transseries::Monomial;

    fn b(z: i64, l: i64) -> TruncationBudget {
        TruncationBudget::new(qi(z), l)
    }

    fn ts(ms: &[(i64, i64, i64)], budget: TruncationBudget) -> Transseries {
        Transseries::from_monomials(ms.iter().map(|(c, z, k)| Monomial { coeff: c_int(*c), zexp: qi(*z), lexp: *k, l2exp: 0 }), budget)
    }

    #[test]
    fn polynomial_composition() {
        let f = ts(&[(1, 1, 0), (-1, 2, 0)], b(8, 4));
        let g = ts(&[(1, 1, 0), (1, 3, 0)], b(8, 4));
        let expect = ts(&[(1, 1, 0), (-1, 2, 0), (1, 3, 0), (-2, 4, 0), (-1, 6, 0)], b(8, 4));
        assert_eq!(f.compose(&g).unwrap(), expect);
    }

    #[test]
    fn composition_with_identity() {
        let f = ts(&[(1, 1, 0), (3, 2, -1), (1, 3, 2)], b(6, 4));
        assert_eq!(f.compose(&Transseries::z(b(6, 4))).unwrap(), f);
    }

    #[test]
    fn inverse_z_composed_with_parabolic() {
        let f = ts(&[(1, -1, 0)], b(4, 4));
        let g = ts(&[(1, 1, 0), (-1, 2, 0)], b(4, 4));
        let r = f.compose(&g).unwrap();
        let expect = ts(&[(1, -1, 0), (1, 0, 0), (1, 1, 0), (1, 2, 0), (1, 3, 0), (1, 4, 0)], b(4, 4));
        assert_eq!(r.monomials().collect::<Vec<_>>(), expect.monomials().collect::<Vec<_>>());
    }

    #[test]
    fn inverse_of_z_minus_z2_is_catalan() {
        let f = ts(&[(1, 1, 0), (-1, 2, 0)], b(5, 4));
        let inv = invert(&f).unwrap();
        let expect = ts(&[(1, 1, 0), (1, 2, 0), (2, 3, 0), (5, 4, 0), (14, 5, 0)], b(5, 4));
        assert_eq!(inv.monomials().collect::<Vec<_>>(), expect.monomials().collect::<Vec<_>>());
    }

    #[test]
    fn inverse_round_trip_with_l() {
        let f = ts(&[(1, 1, 0), (-1, 2, 1)], b(6, 6));
        let inv = invert(&f).unwrap();
        let id = inv.compose(&f).unwrap();
        let diff = id.sub(&Transseries::z(b(6, 6)));
        assert!(diff.is_zero(), "{:?}", diff.monomials().collect::<Vec<_>>());
        let id2 = f.compose(&inv).unwrap().sub(&Transseries::z(b(6, 6)));
        assert!(id2.is_zero());
    }

    #[test]
    fn flow_of_minus_z2_is_moebius() {
        let xi = ts(&[(-1, 2, 0)], b(6, 4));
        let f = formal_flow(&xi, qi(1)).unwrap();
        let expect = ts(&[(1, 1, 0), (-1, 2, 0), (1, 3, 0), (-1, 4, 0), (1, 5, 0), (-1, 6, 0)], b(6, 4));
        assert_eq!(f.monomials().collect::<Vec<_>>(), expect.monomials().collect::<Vec<_>>());
        assert_eq!(formal_flow(&xi, qi(0)).unwrap(), Transseries::z(b(6, 4)));
    }

    #[test]
    fn flow_law_with_logs() {
        let xi = ts(&[(-1, 2, 1), (1, 3, 0)], b(5, 5));
        let f1 = formal_flow(&xi, qi(1)).unwrap();
        let f2 = formal_flow(&xi, qi(2)).unwrap();
        let f3 = formal_flow(&xi, qi(3)).unwrap();
        assert!(f1.compose(&f2).unwrap().sub(&f3).is_zero());
    }

    #[test]
    fn first_block_change_is_invertible() {
        let phi = ts(&[(1, 1, 0), (2, 1, 1)], b(4, 6));
        let inv = invert(&phi).unwrap();
        assert!(inv.compose(&phi).unwrap().sub(&Transseries::z(b(4, 6))).is_zero());
        let f = ts(&[(1, 1, 0), (-1, 2, 0)], b(4, 6));
        let c = f.compose(&phi).unwrap();
        assert_eq!(c.coeff(qi(1), 1, 0), Some(c_int(2)));
        assert_eq!(c.coeff(qi(2), 7, 0), None);
    }

    #[test]
    fn homothety_on_polynomials() {
        let f = ts(&[(1, 1, 0), (-1, 2, 0)], b(4, 4));
        let g = ts(&[(2, 1, 0)], b(4, 4));
        assert_eq!(f.compose(&g).unwrap(), ts(&[(2, 1, 0), (-4, 2, 0)], b(4, 4)));
        let fl = ts(&[(1, 1, 1)], b(4, 4));
        assert_eq!(fl.compose(&g).unwrap_err(), FormalError::UnsupportedHomothety);
    }

    #[test]
    fn bracket_sign_convention() {
        let x = ts(&[(-1, 2, 0)], b(6, 4));
        let y = Transseries::monomial(c_int(2), crate::coeff::q(3, 2), 0, 0, b(6, 4));
        let br = lie_bracket(&x, &y);
        assert_eq!(br, Transseries::monomial(c_int(-1), crate::coeff::q(5, 2), 0, 0, b(6, 4)));
    }
}
