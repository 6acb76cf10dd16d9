//! Differentiation, formal integration and division.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};

use super::{omin, Block, Transseries};
use crate::coeff::{big, c_inv, c_real, Coeff, Q};
use crate::error::FormalError;

fn cq(x: Q) -> Coeff {
    c_real(big(x))
}

impl Transseries {
    /// Termwise `d/dz`, using `dl/dz = l^2/z` and `dl2/dz = l l2^2 / z`.
    pub fn derive_z(&self) -> Transseries {
        let mut out = self.euler();
        out = out.shift(-Q::one(), 0);
        out.canonicalize();
        out
    }

    /// The Euler operator `z d/dz`, which preserves blocks.
    pub fn euler(&self) -> Transseries {
        let mut out = self.clone();
        out.blocks = self
            .blocks
            .iter()
            .map(|(b, blk)| {
                let mut nb = Block { terms: BTreeMap::new(), prec: blk.prec };
                let cb = cq(*b);
                for ((k, n), c) in &blk.terms {
                    if !b.is_zero() {
                        nb.add_term((*k, *n), c * &cb);
                    }
                    if *k != 0 {
                        nb.add_term((k + 1, *n), c * crate::coeff::c_int(*k));
                    }
                    if *n != 0 {
                        nb.add_term((k + 1, n + 1), c * crate::coeff::c_int(*n));
                    }
                }
                if b.is_zero() {
                    nb.prec = blk.prec.map(|p| p + 1);
                    nb.normalize();
                }
                (*b, nb)
            })
            .collect();
        out.canonicalize();
        out
    }

    /// Formal antiderivative with integration constant 0.
    pub fn integrate_z(&self) -> Result<Transseries, FormalError> {
        let mut out = self.clone();
        out.blocks = BTreeMap::new();
        let depth = self.budget.l_depth;
        for (b, blk) in &self.blocks {
            let (nb, blk_out) = if *b == -Q::one() { (Q::zero(), integrate_log_block(blk)?) } else { (*b + Q::one(), integrate_power_block(*b, blk, depth)) };
            out.blocks.entry(nb).or_insert_with(Block::exact).add_assign(&blk_out);
        }
        out.zprec = self.zprec.map(|z| z + Q::one());
        out.canonicalize();
        Ok(out)
    }

    /// Multiplicative inverse. The leading block must have a single
    /// monomial of lowest `l`-degree.
    pub fn recip(&self) -> Result<Transseries, FormalError> {
        let (b0, blk0) = self.blocks.iter().next().ok_or_else(|| FormalError::NotInvertible("zero series".into()))?;
        let ((k0, n0), c0) = blk0.lead().ok_or_else(|| FormalError::NotInvertible("leading block has no known monomial".into()))?;
        if blk0.terms.keys().any(|(k, n)| *k == *k0 && n != n0) {
            return Err(FormalError::NotInvertible("leading l-degree mixes l2 powers".into()));
        }
        let (b0, k0, n0) = (*b0, *k0, *n0);
        let c0inv = c_inv(c0).unwrap();
        // normalized: self = c0 z^b0 l^k0 l2^n0 (1 + u)
        let src = self.with_budget(self.budget.widen(b0.abs(), k0.abs()));
        let u = src.shift(-b0, -k0).scale(&c0inv).sub(&Transseries::one(src.budget));
        let u = shift_l2(&u, -n0);
        let (steps, extra) = steps_needed(&u, &self.budget, b0, k0);
        let work = super::TruncationBudget::new(self.budget.z_order + b0, self.budget.l_depth + k0 + extra);
        let u = u.with_budget(work);
        let mut acc = Transseries::one(work);
        let mut power = Transseries::one(work);
        let neg_u = u.neg();
        let mut finished = false;
        for _ in 0..steps {
            power = power.mul(&neg_u);
            acc = acc.add(&power);
            if power.blocks.is_empty() {
                finished = true;
                break;
            }
        }
        if !finished {
            acc = acc.add(&power.mul(&neg_u).shadow());
        }
        let acc = acc.with_budget(acc.budget.widen(b0.abs(), k0.abs()));
        let out = shift_l2(&acc, -n0).shift(-b0, -k0).scale(&c0inv);
        Ok(out.with_budget(self.budget))
    }

    pub fn div(&self, other: &Transseries) -> Result<Transseries, FormalError> {
        Ok(self.mul(&other.recip()?))
    }
}

fn shift_l2(t: &Transseries, dn: i64) -> Transseries {
    if dn == 0 {
        return t.clone();
    }
    let mut out = t.clone();
    for blk in out.blocks.values_mut() {
        blk.terms = blk.terms.iter().map(|((k, n), c)| ((*k, n + dn), c.clone())).collect();
    }
    out
}

/// Number of geometric steps and the extra `l`-depth needed so that
/// `sum (-u)^j` is complete up to the budget of the final result.
fn steps_needed(u: &Transseries, budget: &super::TruncationBudget, b0: Q, k0: i64) -> (usize, i64) {
    let zrange = budget.z_order + b0;
    let v0 = u.blocks.get(&Q::zero()).and_then(Block::min_order);
    let pos: Vec<(&Q, &Block)> = u.blocks.iter().filter(|(b, _)| **b > Q::zero()).collect();
    let delta = pos.first().map(|(b, _)| **b);
    let vplus = pos.iter().filter_map(|(_, blk)| blk.min_order()).min().unwrap_or(0);
    let nz = match delta {
        Some(d) if zrange >= Q::zero() => (zrange / d).floor().to_integer().max(0),
        _ => 0,
    };
    let extra = nz * (-vplus).max(0);
    let ldepth = budget.l_depth + k0 + extra;
    let steps = match v0 {
        Some(v) if v > 0 => nz + (ldepth + 1).max(0) / v + 2,
        _ => nz + 1,
    };
    (steps.max(1) as usize, extra)
}

fn integrate_power_block(b: Q, blk: &Block, depth: i64) -> Block {
    let inv = c_inv(&cq(b + Q::one())).unwrap();
    let cut = omin(blk.prec, Some(depth + 1)).unwrap();
    let mut queue: BTreeMap<(i64, i64), Coeff> = blk.terms.clone();
    let mut out = Block { terms: BTreeMap::new(), prec: blk.prec };
    let mut dropped = false;
    while let Some((&(k, n), _)) = queue.iter().next() {
        let c = queue.remove(&(k, n)).unwrap();
        if c.is_zero() {
            continue;
        }
        if k >= cut {
            dropped = true;
            continue;
        }
        let a = &c * &inv;
        out.add_term((k, n), a.clone());
        if k != 0 {
            *queue.entry((k + 1, n)).or_insert_with(Coeff::zero) -= &a * crate::coeff::c_int(k);
        }
        if n != 0 {
            *queue.entry((k + 1, n + 1)).or_insert_with(Coeff::zero) -= &a * crate::coeff::c_int(n);
        }
    }
    if dropped {
        out.prec = omin(out.prec, Some(cut));
    }
    out.normalize();
    out
}

fn integrate_log_block(blk: &Block) -> Result<Block, FormalError> {
    let mut out = Block { terms: BTreeMap::new(), prec: blk.prec.map(|p| p - 1) };
    for ((k, n), c) in &blk.terms {
        if *n != 0 {
            return Err(FormalError::L2AtMinusOne);
        }
        match *k {
            0 => out.add_term((-1, 0), -c.clone()),
            1 => out.add_term((0, -1), -c.clone()),
            k => out.add_term((k - 1, 0), c * c_inv(&crate::coeff::c_int(k - 1)).unwrap()),
        }
    }
    out.normalize();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{c_int, q, qi};
    use crate::transseries::{Monomial, TruncationBudget};

    fn b() -> TruncationBudget {
        TruncationBudget::new(qi(6), 6)
    }

    fn ts(ms: &[(i64, Q, i64, i64)]) -> Transseries {
        Transseries::from_monomials(ms.iter().map(|(c, z, k, n)| Monomial { coeff: c_int(*c), zexp: *z, lexp: *k, l2exp: *n }), b())
    }

    #[test]
    fn derivative_of_z_l() {
        assert_eq!(ts(&[(1, qi(1), 1, 0)]).derive_z(), ts(&[(1, qi(0), 1, 0), (1, qi(0), 2, 0)]));
    }

    #[test]
    fn derivative_of_log_z() {
        assert_eq!(ts(&[(1, qi(0), -1, 0)]).derive_z(), ts(&[(-1, qi(-1), 0, 0)]));
    }

    #[test]
    fn derivative_of_log_log() {
        // l2^-1 = log(-log z), whose derivative is 1/(z log z) = -l/z
        assert_eq!(ts(&[(1, qi(0), 0, -1)]).derive_z(), ts(&[(-1, qi(-1), 1, 0)]));
    }

    #[test]
    fn integral_of_inverse_z() {
        assert_eq!(ts(&[(1, qi(-1), 0, 0)]).integrate_z().unwrap(), ts(&[(-1, qi(0), -1, 0)]));
    }

    #[test]
    fn integral_terminates_for_negative_l_power() {
        let i = ts(&[(1, qi(-2), -1, 0)]).integrate_z().unwrap();
        assert_eq!(i, ts(&[(-1, qi(-1), -1, 0), (1, qi(-1), 0, 0)]));
        assert!(i.is_exact());
        assert_eq!(i.derive_z(), ts(&[(1, qi(-2), -1, 0)]));
    }

    #[test]
    fn integral_of_l_over_z() {
        assert_eq!(ts(&[(1, qi(-1), 1, 0)]).integrate_z().unwrap(), ts(&[(-1, qi(0), 0, -1)]));
    }

    #[test]
    fn l2_at_minus_one_is_rejected() {
        assert_eq!(ts(&[(1, qi(-1), 0, -1)]).integrate_z().unwrap_err(), FormalError::L2AtMinusOne);
    }

    #[test]
    fn integral_with_infinite_l_tail_is_marked() {
        let i = ts(&[(1, qi(-2), 1, 0)]).integrate_z().unwrap();
        assert_eq!(i.block(qi(-1)).unwrap().prec(), Some(7));
        let back = i.derive_z();
        assert_eq!(back.coeff(qi(-2), 1, 0), Some(c_int(1)));
        for k in 2..7 {
            assert_eq!(back.coeff(qi(-2), k, 0), Some(c_int(0)));
        }
    }

    #[test]
    fn reciprocal_of_one_minus_z() {
        let r = ts(&[(1, qi(0), 0, 0), (-1, qi(1), 0, 0)]).recip().unwrap();
        let expect = ts(&(0..=6).map(|k| (1, qi(k), 0, 0)).collect::<Vec<_>>());
        assert_eq!(r.monomials().collect::<Vec<_>>(), expect.monomials().collect::<Vec<_>>());
        assert_eq!(r.zprec(), Some(qi(6)));
    }

    #[test]
    fn reciprocal_round_trip_with_l() {
        let a = ts(&[(2, q(1, 2), -1, 0), (1, q(1, 2), 1, 0), (3, qi(2), -2, 0)]);
        let r = a.recip().unwrap();
        let p = a.mul(&r);
        assert_eq!(p.coeff(qi(0), 0, 0), Some(c_int(1)));
        for m in p.monomials() {
            assert!(m.zexp == qi(0) && m.lexp == 0, "unexpected {:?}", m);
        }
    }
}
