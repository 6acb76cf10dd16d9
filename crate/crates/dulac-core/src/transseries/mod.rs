//! Power-logarithmic transseries in `z`, `l = -1/log z` and `l2 = -1/log l`.
//!
//! A [`Transseries`] is a finite sum of monomials `c z^b l^k l2^n` grouped
//! into blocks by the `z`-exponent `b`. Monomials are ordered by
//! `(b, k, n)` ascending, which is decreasing size as `z -> 0`.
//!
//! Every value carries a [`TruncationBudget`] and precision data:
//!
//! * `zprec`: blocks with exponent above it are unknown (`None`: all known).
//! * per block `prec`: monomials with `l`-exponent `>= prec` are unknown.
//!
//! A block absent from the map but below `zprec` is exactly zero. Empty
//! blocks with finite precision are kept, since multiplying them by
//! negative powers of `l` exposes their unknown tail. Claims of the form
//! "zero up to budget" are therefore checked against known coefficients only.

mod calculus;
mod compose;

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::coeff::{c_q, fmt_q, is_real, q_to_f64, to_c64, Coeff, Q};
use crate::error::FormalError;

pub use compose::{formal_flow, invert, lie_bracket};
pub(crate) use compose::scale_argument;

/// Finite computation window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationBudget {
    /// Monomials with a larger `z`-exponent are dropped.
    pub z_order: Q,
    /// Largest `l`-exponent kept in a block.
    pub l_depth: i64,
}

impl TruncationBudget {
    pub fn new(z_order: Q, l_depth: i64) -> Self {
        TruncationBudget { z_order, l_depth }
    }

    pub fn min(&self, other: &Self) -> Self {
        TruncationBudget { z_order: self.z_order.min(other.z_order), l_depth: self.l_depth.min(other.l_depth) }
    }

    pub fn widen(&self, dz: Q, dl: i64) -> Self {
        TruncationBudget { z_order: self.z_order + dz, l_depth: self.l_depth + dl }
    }
}

impl Default for TruncationBudget {
    fn default() -> Self {
        TruncationBudget { z_order: Q::from_integer(8), l_depth: 8 }
    }
}

/// Finitely generated exponent basis: the admissible `z`-exponents are
/// `sum n_i g_i + j` with `n_i >= 0` and integer offset `j`.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Basis {
    gens: Vec<Q>,
}

/// A `z`-exponent with its coordinates over a [`Basis`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ZExponent {
    pub value: Q,
    /// Non-negative coordinates over the basis generators.
    pub coeffs: Vec<u64>,
    /// Integer offset.
    pub offset: i64,
}

impl Basis {
    pub fn new(mut gens: Vec<Q>) -> Result<Self, FormalError> {
        if gens.iter().any(|g| *g <= Q::zero()) {
            return Err(FormalError::Malformed("generators must be positive".into()));
        }
        gens.sort();
        gens.dedup();
        Ok(Basis { gens })
    }

    pub fn integer() -> Self {
        Basis { gens: vec![] }
    }

    /// Smallest basis containing the given exponents.
    pub fn infer<'a>(exps: impl IntoIterator<Item = &'a Q>) -> Self {
        let mut gens: Vec<Q> = exps
            .into_iter()
            .filter(|e| *e.denom() != 1)
            .map(|e| Q::new(1, *e.denom()))
            .collect();
        gens.sort();
        gens.dedup();
        Basis { gens }
    }

    pub fn generators(&self) -> &[Q] {
        &self.gens
    }

    fn denominator(&self) -> i64 {
        self.gens.iter().fold(1i64, |acc, g| acc.lcm(g.denom()))
    }

    pub fn contains(&self, x: Q) -> bool {
        self.denominator() % x.denom() == 0
    }

    pub fn is_subset_of(&self, other: &Basis) -> bool {
        self.gens.iter().all(|g| other.contains(*g))
    }

    pub fn compatible(&self, other: &Basis) -> bool {
        self.is_subset_of(other) || other.is_subset_of(self)
    }

    pub fn union(&self, other: &Basis) -> Basis {
        let mut gens = self.gens.clone();
        gens.extend(other.gens.iter().copied());
        gens.sort();
        gens.dedup();
        Basis { gens }
    }

    /// Coordinates of `x`: small non-negative generator counts plus an
    /// integer offset, minimizing the total generator count.
    pub fn decompose(&self, x: Q) -> Option<ZExponent> {
        if !self.contains(x) {
            return None;
        }
        if *x.denom() == 1 || self.gens.is_empty() {
            return Some(ZExponent { value: x, coeffs: vec![0; self.gens.len()], offset: x.to_integer() });
        }
        let bound = self.denominator() as u64;
        let mut best: Option<(u64, Vec<u64>)> = None;
        let mut counts = vec![0u64; self.gens.len()];
        loop {
            let s: Q = counts.iter().zip(&self.gens).map(|(c, g)| *g * Q::from_integer(*c as i64)).sum();
            if *(x - s).denom() == 1 {
                let total: u64 = counts.iter().sum();
                if best.as_ref().is_none_or(|(t, _)| total < *t) {
                    best = Some((total, counts.clone()));
                }
            }
            let mut i = 0;
            loop {
                if i == counts.len() {
                    let (_, c) = best?;
                    let s: Q = c.iter().zip(&self.gens).map(|(c, g)| *g * Q::from_integer(*c as i64)).sum();
                    return Some(ZExponent { value: x, coeffs: c, offset: (x - s).to_integer() });
                }
                counts[i] += 1;
                if counts[i] < bound {
                    break;
                }
                counts[i] = 0;
                i += 1;
            }
        }
    }
}

/// Laurent polynomial in `l` (with an `l2` part) attached to one `z`-exponent.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Block {
    pub(crate) terms: BTreeMap<(i64, i64), Coeff>,
    /// Monomials with `l`-exponent `>= prec` are unknown; `None` means exact.
    pub(crate) prec: Option<i64>,
}

pub(crate) fn omin(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => Some(x.min(y)),
    }
}

fn oadd(a: Option<i64>, b: Option<i64>) -> Option<i64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x + y),
        _ => None,
    }
}

fn omin_q(a: Option<Q>, b: Option<Q>) -> Option<Q> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(x), Some(y)) => Some(x.min(y)),
    }
}

impl Block {
    pub fn exact() -> Self {
        Block { terms: BTreeMap::new(), prec: None }
    }

    pub fn unknown_from(prec: i64) -> Self {
        Block { terms: BTreeMap::new(), prec: Some(prec) }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = ((i64, i64), Coeff)>, prec: Option<i64>) -> Self {
        let mut b = Block { terms: BTreeMap::new(), prec };
        for (key, c) in terms {
            b.add_term(key, c);
        }
        b.normalize();
        b
    }

    /// Monomial `c l^k l2^n`, exact.
    pub fn monomial(k: i64, n: i64, c: Coeff) -> Self {
        Block::from_terms([((k, n), c)], None)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(i64, i64), &Coeff)> {
        self.terms.iter()
    }

    pub fn prec(&self) -> Option<i64> {
        self.prec
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, k: i64, n: i64) -> Option<Coeff> {
        if self.prec.is_some_and(|p| k >= p) {
            return None;
        }
        Some(self.terms.get(&(k, n)).cloned().unwrap_or_else(Coeff::zero))
    }

    /// Lower bound of the `l`-order including the unknown tail.
    pub fn min_order(&self) -> Option<i64> {
        let first = self.terms.keys().next().map(|(k, _)| *k);
        omin(first, self.prec)
    }

    pub fn lead(&self) -> Option<(&(i64, i64), &Coeff)> {
        self.terms.iter().next()
    }

    pub(crate) fn add_term(&mut self, key: (i64, i64), c: Coeff) {
        if self.prec.is_some_and(|p| key.0 >= p) || c.is_zero() {
            return;
        }
        let e = self.terms.entry(key).or_insert_with(Coeff::zero);
        *e += c;
        if e.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub(crate) fn normalize(&mut self) {
        if let Some(p) = self.prec {
            self.terms.retain(|(k, _), c| *k < p && !c.is_zero());
        } else {
            self.terms.retain(|_, c| !c.is_zero());
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Block) {
        self.prec = omin(self.prec, other.prec);
        for (key, c) in &other.terms {
            self.add_term(*key, c.clone());
        }
        self.normalize();
    }

    pub(crate) fn scale(&self, c: &Coeff) -> Block {
        if c.is_zero() {
            return Block { terms: BTreeMap::new(), prec: self.prec };
        }
        Block { terms: self.terms.iter().map(|(k, v)| (*k, v * c)).collect(), prec: self.prec }
    }

    pub(crate) fn shift_l(&self, dk: i64) -> Block {
        Block { terms: self.terms.iter().map(|((k, n), v)| ((k + dk, *n), v.clone())).collect(), prec: self.prec.map(|p| p + dk) }
    }

    /// Drops monomials beyond `l_depth`; returns whether anything was cut.
    pub(crate) fn truncate(&mut self, l_depth: i64) -> bool {
        let before = self.terms.len();
        self.terms.retain(|(k, _), _| *k <= l_depth);
        let cut = self.terms.len() != before;
        if cut {
            self.prec = omin(self.prec, Some(l_depth + 1));
        }
        cut
    }

    pub(crate) fn mul(&self, other: &Block, l_depth: i64) -> (Block, bool) {
        let prec = omin(oadd(self.prec, other.min_order()), oadd(other.prec, self.min_order()));
        let mut cut = omin(prec, Some(l_depth + 1)).unwrap();
        let mut dropped = false;
        let mut out = Block { terms: BTreeMap::new(), prec };
        for ((ka, na), ca) in &self.terms {
            for ((kb, nb), cb) in &other.terms {
                let k = ka + kb;
                if k >= cut {
                    if prec.is_none_or(|p| k < p) {
                        dropped = true;
                    }
                    continue;
                }
                out.add_term((k, na + nb), ca * cb);
            }
        }
        if dropped {
            out.prec = omin(out.prec, Some(l_depth + 1));
            cut = out.prec.unwrap();
            out.terms.retain(|(k, _), _| *k < cut);
        }
        (out, dropped)
    }

    /// True when every known coefficient is real.
    pub fn is_real(&self) -> bool {
        self.terms.values().all(is_real)
    }
}

/// One monomial `coeff * z^zexp * l^lexp * l2^l2exp`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub coeff: Coeff,
    pub zexp: Q,
    pub lexp: i64,
    pub l2exp: i64,
}

/// Exact truncated transseries.
#[derive(Clone, Debug)]
pub struct Transseries {
    pub(crate) blocks: BTreeMap<Q, Block>,
    pub(crate) zprec: Option<Q>,
    pub(crate) budget: TruncationBudget,
    pub(crate) basis: Basis,
    pub(crate) clipped: bool,
}

impl PartialEq for Transseries {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks && self.zprec == other.zprec
    }
}

impl Transseries {
    pub fn zero(budget: TruncationBudget) -> Self {
        Transseries { blocks: BTreeMap::new(), zprec: None, budget, basis: Basis::integer(), clipped: false }
    }

    pub fn constant(c: Coeff, budget: TruncationBudget) -> Self {
        Self::monomial(c, Q::zero(), 0, 0, budget)
    }

    pub fn one(budget: TruncationBudget) -> Self {
        Self::constant(Coeff::one(), budget)
    }

    /// The identity germ `z`.
    pub fn z(budget: TruncationBudget) -> Self {
        Self::monomial(Coeff::one(), Q::one(), 0, 0, budget)
    }

    pub fn monomial(c: Coeff, zexp: Q, lexp: i64, l2exp: i64, budget: TruncationBudget) -> Self {
        Self::from_monomials([Monomial { coeff: c, zexp, lexp, l2exp }], budget)
    }

    pub fn from_monomials(ms: impl IntoIterator<Item = Monomial>, budget: TruncationBudget) -> Self {
        let mut t = Transseries::zero(budget);
        for m in ms {
            t.blocks.entry(m.zexp).or_insert_with(Block::exact).add_term((m.lexp, m.l2exp), m.coeff);
        }
        t.basis = Basis::infer(t.blocks.keys());
        t.canonicalize();
        t
    }

    pub fn from_blocks(blocks: impl IntoIterator<Item = (Q, Block)>, zprec: Option<Q>, budget: TruncationBudget) -> Self {
        let mut t = Transseries::zero(budget);
        for (b, blk) in blocks {
            t.blocks.entry(b).or_insert_with(Block::exact).add_assign(&blk);
        }
        t.zprec = zprec;
        t.basis = Basis::infer(t.blocks.keys());
        t.canonicalize();
        t
    }

    pub fn budget(&self) -> TruncationBudget {
        self.budget
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn with_basis(mut self, basis: Basis) -> Result<Self, FormalError> {
        for b in self.blocks.keys() {
            if !basis.contains(*b) {
                return Err(FormalError::ExponentOutsideBasis(*b));
            }
        }
        self.basis = basis;
        Ok(self)
    }

    /// Re-truncates to a new budget. Enlarging a budget never adds precision.
    pub fn with_budget(&self, budget: TruncationBudget) -> Self {
        let mut t = self.clone();
        t.budget = budget;
        t.canonicalize();
        t
    }

    pub fn zprec(&self) -> Option<Q> {
        self.zprec
    }

    pub fn clipped(&self) -> bool {
        self.clipped
    }

    /// True when no monomial was ever dropped or left unknown.
    pub fn is_exact(&self) -> bool {
        self.zprec.is_none() && self.blocks.values().all(|b| b.prec.is_none())
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&Q, &Block)> {
        self.blocks.iter()
    }

    pub fn block(&self, zexp: Q) -> Option<&Block> {
        self.blocks.get(&zexp)
    }

    pub fn monomials(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.blocks.iter().flat_map(|(b, blk)| {
            blk.terms.iter().map(move |((k, n), c)| Monomial { coeff: c.clone(), zexp: *b, lexp: *k, l2exp: *n })
        })
    }

    /// Number of stored monomials.
    pub fn len(&self) -> usize {
        self.blocks.values().map(|b| b.terms.len()).sum()
    }

    /// No stored monomial.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// No known nonzero monomial.
    pub fn is_zero(&self) -> bool {
        self.blocks.values().all(|b| b.terms.is_empty())
    }

    pub fn is_real(&self) -> bool {
        self.blocks.values().all(Block::is_real)
    }

    /// Coefficient of `z^b l^k l2^n`, or `None` when it is unknown.
    pub fn coeff(&self, b: Q, k: i64, n: i64) -> Option<Coeff> {
        if self.zprec.is_some_and(|zp| b > zp) || b > self.budget.z_order {
            return None;
        }
        match self.blocks.get(&b) {
            Some(blk) => blk.coeff(k, n),
            None => Some(Coeff::zero()),
        }
    }

    /// Smallest `z`-exponent present (including empty imprecise blocks).
    pub fn min_zexp(&self) -> Option<Q> {
        self.blocks.keys().next().copied()
    }

    /// Smallest `l`-order over all blocks.
    pub fn min_lorder(&self) -> Option<i64> {
        self.blocks.values().filter_map(Block::min_order).min()
    }

    /// Leading block: smallest `z`-exponent carrying a known monomial.
    pub fn leading_block(&self) -> Result<(ZExponent, Block), FormalError> {
        let (b, blk) = self.blocks.iter().find(|(_, blk)| !blk.terms.is_empty()).ok_or(FormalError::ZeroSeries)?;
        let basis = self.basis.union(&Basis::infer([b]));
        let ze = basis.decompose(*b).ok_or(FormalError::ExponentOutsideBasis(*b))?;
        Ok((ze, blk.clone()))
    }

    pub fn leading_monomial(&self) -> Option<Monomial> {
        self.monomials().next()
    }

    /// Checks every exponent against the basis and the budget invariants.
    pub fn validate(&self) -> Result<(), FormalError> {
        for (b, blk) in &self.blocks {
            if !self.basis.contains(*b) {
                return Err(FormalError::ExponentOutsideBasis(*b));
            }
            if *b > self.budget.z_order {
                return Err(FormalError::Malformed(format!("block z^{} beyond budget", fmt_q(*b))));
            }
            if blk.terms.keys().any(|(k, _)| *k > self.budget.l_depth) {
                return Err(FormalError::Malformed("monomial beyond l_depth".into()));
            }
        }
        Ok(())
    }

    pub(crate) fn canonicalize(&mut self) {
        let zlim = omin_q(self.zprec, Some(self.budget.z_order)).unwrap();
        let beyond: Vec<Q> = self.blocks.range((std::ops::Bound::Excluded(zlim), std::ops::Bound::Unbounded)).map(|(b, _)| *b).collect();
        if !beyond.is_empty() {
            for b in beyond {
                self.blocks.remove(&b);
            }
            if self.zprec.is_none_or(|zp| zp > self.budget.z_order) {
                self.clipped = true;
            }
            self.zprec = Some(zlim);
        }
        let depth = self.budget.l_depth;
        let mut cut = false;
        for blk in self.blocks.values_mut() {
            blk.normalize();
            cut |= blk.truncate(depth);
        }
        self.clipped |= cut;
        self.blocks.retain(|_, blk| !(blk.terms.is_empty() && blk.prec.is_none()));
    }

    fn merged_meta(&self, other: &Self) -> (TruncationBudget, Basis, bool) {
        (self.budget.min(&other.budget), self.basis.union(&other.basis), self.clipped || other.clipped)
    }

    pub fn try_add(&self, other: &Self) -> Result<Self, FormalError> {
        if !self.basis.compatible(&other.basis) {
            return Err(FormalError::IncompatibleBasis);
        }
        Ok(self.add(other))
    }

    pub fn try_mul(&self, other: &Self) -> Result<Self, FormalError> {
        if !self.basis.compatible(&other.basis) {
            return Err(FormalError::IncompatibleBasis);
        }
        Ok(self.mul(other))
    }

    pub fn add(&self, other: &Self) -> Self {
        let (budget, basis, clipped) = self.merged_meta(other);
        let mut out = Transseries { blocks: self.blocks.clone(), zprec: omin_q(self.zprec, other.zprec), budget, basis, clipped };
        for (b, blk) in &other.blocks {
            out.blocks.entry(*b).or_insert_with(Block::exact).add_assign(blk);
        }
        out.canonicalize();
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Coeff::one())
    }

    pub fn scale(&self, c: &Coeff) -> Self {
        let mut out = self.clone();
        for blk in out.blocks.values_mut() {
            *blk = blk.scale(c);
        }
        out.canonicalize();
        out
    }

    pub fn scale_q(&self, x: Q) -> Self {
        self.scale(&c_q(x))
    }

    /// Multiplies by the monomial `z^b l^k` (exact, precision shifts with it).
    pub fn shift(&self, b: Q, k: i64) -> Self {
        let mut out = self.clone();
        out.blocks = self.blocks.iter().map(|(e, blk)| (*e + b, blk.shift_l(k))).collect();
        out.zprec = self.zprec.map(|z| z + b);
        out.basis = out.basis.union(&Basis::infer([&b]));
        out.canonicalize();
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let (budget, basis, mut clipped) = self.merged_meta(other);
        let zp_a = match (self.zprec, other.min_zexp()) {
            (Some(z), Some(v)) => Some(z + v),
            _ => None,
        };
        let zp_b = match (other.zprec, self.min_zexp()) {
            (Some(z), Some(v)) => Some(z + v),
            _ => None,
        };
        let mut zprec = omin_q(zp_a, zp_b);
        let zlim = omin_q(zprec, Some(budget.z_order)).unwrap();
        let mut blocks: BTreeMap<Q, Block> = BTreeMap::new();
        for (ba, a) in &self.blocks {
            for (bb, b) in &other.blocks {
                let beta = *ba + *bb;
                if beta > zlim {
                    if zprec.is_none_or(|zp| beta <= zp) {
                        clipped = true;
                        zprec = omin_q(zprec, Some(budget.z_order));
                    }
                    continue;
                }
                let (p, cut) = a.mul(b, budget.l_depth);
                clipped |= cut;
                blocks.entry(beta).or_insert_with(Block::exact).add_assign(&p);
            }
        }
        let mut out = Transseries { blocks, zprec, budget, basis, clipped };
        out.canonicalize();
        out
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Transseries::one(self.budget);
        acc.basis = self.basis.clone();
        for _ in 0..n {
            acc = acc.mul(self);
        }
        acc
    }

    /// Numeric value at `zeta = -log z` (so `z = e^-zeta`, `l = 1/zeta`,
    /// `l2 = 1/Log zeta`).
    pub fn eval_zeta(&self, zeta: Complex64) -> Complex64 {
        let inv_zeta = zeta.inv();
        let inv_log = zeta.ln().inv();
        let mut acc = Complex64::zero();
        for (b, blk) in &self.blocks {
            let zb = (-zeta * q_to_f64(*b)).exp();
            let mut s = Complex64::zero();
            for ((k, n), c) in &blk.terms {
                s += to_c64(c) * inv_zeta.powi(*k as i32) * inv_log.powi(*n as i32);
            }
            acc += zb * s;
        }
        acc
    }

    /// Numeric value at a point `z` of the principal sheet.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.eval_zeta(-z.ln())
    }

    /// Same blocks with every coefficient unknown from its order on; used to
    /// record the precision of a dropped remainder.
    pub(crate) fn shadow(&self) -> Self {
        let mut out = self.clone();
        for blk in out.blocks.values_mut() {
            blk.prec = blk.min_order();
            blk.terms.clear();
        }
        out.blocks.retain(|_, blk| blk.prec.is_some());
        out
    }

    /// Keeps only blocks with exponent in `[lo, hi]`.
    pub fn restrict(&self, lo: Option<Q>, hi: Option<Q>) -> Self {
        let mut out = self.clone();
        out.blocks.retain(|b, _| lo.is_none_or(|l| *b >= l) && hi.is_none_or(|h| *b <= h));
        out
    }
}

impl fmt::Display for Transseries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::germ::serialize_transseries(self))
    }
}
