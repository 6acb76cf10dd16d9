//! Blockwise reduction of parabolic transseries to the normal form
//! `z - z^alpha l^m + rho z^(2 alpha - 1) l^(2m + 1)`.
//!
//! Each elementary change is `phi(z) = z + z^gamma R(l)`. The first one
//! (`gamma = 1`) makes the leading block exactly `-l^m`; every later one
//! removes the block `z^beta`, `gamma = beta - alpha + 1`, by solving the
//! bracket equation `[-z^alpha l^m, z^gamma R] = -z^beta T` termwise. At
//! `beta = 2 alpha - 1` the monomial `z^beta l^(2m + 1)` cannot be removed
//! and its coefficient is `rho`.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::coeff::{c_q, c_real, fmt_coeff, fmt_q, Coeff, Q};
use crate::error::FormalError;
use crate::transseries::{formal_flow, scale_argument, invert, lie_bracket, Block, Monomial, Transseries, TruncationBudget};

/// Initial and largest extra `l`-depth used by [`reduce_to_normal_form`].
const L_MARGIN: i64 = 4;
const MAX_MARGIN: i64 = 64;

/// The formal class `(alpha, m, rho)`; `rho` is `None` when the residual
/// block lies beyond the budget.
#[derive(Clone, Debug, PartialEq)]
pub struct FormalInvariants {
    pub alpha: Q,
    pub m: i64,
    pub rho: Option<Coeff>,
}

impl FormalInvariants {
    pub fn new(alpha: Q, m: i64, rho: Coeff) -> Self {
        FormalInvariants { alpha, m, rho: Some(rho) }
    }
}

impl fmt::Display for FormalInvariants {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rho = self.rho.as_ref().map_or_else(|| "?".to_string(), fmt_coeff);
        write!(f, "(alpha, m, rho) = ({}, {}, {})", fmt_q(self.alpha), self.m, rho)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    FirstBlock,
    HigherBlock,
    ResidualBlock,
}

/// One elementary change `phi(z) = z + z^gamma R(l)`.
#[derive(Clone, Debug)]
pub struct EliminationStep {
    pub kind: StepKind,
    pub gamma: Q,
    /// Exponent of the block that was removed (`alpha` for the first step).
    pub beta: Q,
    pub alpha: Q,
    pub m: i64,
    /// The block `R(l)`.
    pub r: Block,
    /// The block `T(l)` of `z^beta` before the change.
    pub t: Block,
    /// Surviving coefficient of `l^(2m + 1)` in the residual case.
    pub residual: Option<Coeff>,
}

impl EliminationStep {
    /// The change of variables `z + z^gamma R`.
    pub fn change(&self, budget: TruncationBudget) -> Transseries {
        let mut phi = Transseries::z(budget);
        let part = Transseries::from_blocks([(self.gamma, self.r.clone())], None, budget);
        phi = phi.add(&part);
        phi
    }

    pub fn is_identity(&self) -> bool {
        self.r.is_empty()
    }

    /// `[-z^alpha l^m, z^gamma R] + z^beta (T - residual l^(2m+1))`, which
    /// vanishes up to budget for a valid higher-block step.
    pub fn bracket_residual(&self, budget: TruncationBudget) -> Transseries {
        let x = Transseries::monomial(-Coeff::one(), self.alpha, self.m, 0, budget);
        let y = Transseries::from_blocks([(self.gamma, self.r.clone())], None, budget);
        let mut t = self.t.clone();
        if let Some(rho) = &self.residual {
            t = sub_term(&t, (2 * self.m + 1, 0), rho);
        }
        let target = Transseries::from_blocks([(self.beta, t)], None, budget);
        lie_bracket(&x, &y).add(&target)
    }
}

fn sub_term(b: &Block, key: (i64, i64), c: &Coeff) -> Block {
    let mut out = b.clone();
    out.add_assign(&Block::monomial(key.0, key.1, -c.clone()));
    out
}

/// How the input was brought to leading coefficient `a = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    /// The compositional inverse was reduced (input had `a < 0`).
    pub inverse: bool,
    /// Conjugation by `z -> s z`.
    pub scale: Option<BigRational>,
}

/// Result of [`reduce_to_normal_form`].
#[derive(Clone, Debug)]
pub struct Reduction {
    pub invariants: FormalInvariants,
    pub steps: Vec<EliminationStep>,
    /// The reduced series.
    pub normal: Transseries,
    pub normalization: Normalization,
    /// The series the steps act on (after inversion and scaling).
    pub normalized_input: Transseries,
}

impl Reduction {
    /// `Phi = h ∘ phi_0 ∘ phi_1 ∘ ...` with `Phi^-1 ∘ f_n ∘ Phi = normal`,
    /// where `f_n` is the input, or its inverse when `normalization.inverse`.
    pub fn conjugacy(&self) -> Result<Transseries, FormalError> {
        let budget = self.normal.budget();
        let mut acc = match &self.normalization.scale {
            Some(s) => Transseries::monomial(c_real(s.clone()), Q::one(), 0, 0, budget),
            None => Transseries::z(budget),
        };
        for s in &self.steps {
            if !s.is_identity() {
                acc = acc.compose(&s.change(budget))?;
            }
        }
        Ok(acc)
    }
}

/// `phi^-1 ∘ f ∘ phi`.
pub fn conjugate(f: &Transseries, phi: &Transseries) -> Result<Transseries, FormalError> {
    let phi = phi.with_budget(f.budget());
    let inner = f.compose(&phi)?;
    invert(&phi)?.compose(&inner)
}

/// Leading data `(alpha, m, c)` of `f = z + c z^alpha l^m + ...`.
fn leading(f: &Transseries) -> Result<(Q, i64, Coeff), FormalError> {
    let mut it = f.blocks();
    let (b1, blk1) = it.next().ok_or(FormalError::ZeroSeries)?;
    if *b1 != Q::one() || blk1.coeff(0, 0) != Some(Coeff::one()) || blk1.terms().count() != 1 {
        return Err(FormalError::NonParabolic("series does not start with z".into()));
    }
    let (alpha, blk) = it
        .find(|(_, b)| !b.is_empty())
        .ok_or_else(|| FormalError::BudgetTooSmall("no block after z within budget".into()))?;
    let ((m, n), c) = blk.lead().unwrap();
    if *n != 0 {
        return Err(FormalError::NotNormalized("leading block carries l2".into()));
    }
    Ok((*alpha, *m, c.clone()))
}

fn rational_root(x: &BigRational, n: u32) -> Option<BigRational> {
    if x.is_negative() {
        return None;
    }
    let root = |v: &BigInt| {
        let r = v.nth_root(n);
        (num_traits::pow(r.clone(), n as usize) == *v).then_some(r)
    };
    Some(BigRational::new(root(x.numer())?, root(x.denom())?))
}

/// Brings `f` to leading coefficient `a = 1`.
fn normalize(f: &Transseries) -> Result<(Normalization, Transseries), FormalError> {
    let (alpha, _, c) = leading(f)?;
    if !c.im.is_zero() {
        return Err(FormalError::NotNormalized("complex leading coefficient".into()));
    }
    let mut norm = Normalization { inverse: false, scale: None };
    let mut g = f.clone();
    let mut a = -c.re;
    if a.is_negative() {
        g = invert(f)?;
        norm.inverse = true;
        a = -a;
    }
    if !a.is_one() {
        // s^(alpha - 1) a = 1 with alpha - 1 = p / q
        let e = alpha - Q::one();
        let (p, q) = (*e.numer() as u32, *e.denom() as i32);
        let s = rational_root(&num_traits::pow(a.recip(), q as usize), p)
            .ok_or_else(|| FormalError::NotNormalized("a^(-1/(alpha-1)) is not rational".into()))?;
        g = scale_argument(&g, &s)?.scale(&c_real(s.recip()));
        norm.scale = Some(s);
    }
    Ok((norm, g))
}

/// Removes the `l`-tail of the leading block: returns `phi_0 = z (1 + R_0)`
/// with `R_0` in `l Q[[l]]` and the conjugated series, whose `z^alpha`
/// block is exactly `-l^m` up to budget.
pub fn eliminate_first_block(f: &Transseries) -> Result<(EliminationStep, Transseries), FormalError> {
    let (alpha, m, c) = leading(f)?;
    if c != -Coeff::one() {
        return Err(FormalError::NotNormalized(format!("leading coefficient is {}, expected -1", fmt_coeff(&c))));
    }
    let budget = f.budget();
    let t0 = f.block(alpha).cloned().unwrap_or_default();
    if t0.terms().any(|((_, n), _)| *n != 0) {
        return Err(FormalError::NotNormalized("leading block carries l2".into()));
    }
    let inv_am1 = c_q((alpha - Q::one()).recip());
    let work = TruncationBudget::new(Q::zero(), budget.l_depth + m.abs() + 2);
    let t0s = Transseries::from_blocks([(Q::zero(), t0.clone())], None, work);
    let mut r0 = Block::exact();
    let step = |r: &Block| Transseries::from_blocks([(Q::one(), r.clone())], None, budget).add(&Transseries::z(budget));
    for j in 1..=(budget.l_depth - m) {
        let img = first_block_image(&t0s, &Transseries::from_blocks([(Q::zero(), r0.clone())], None, work), alpha)?;
        match img.coeff(Q::zero(), m + j, 0) {
            None => break,
            Some(c) if c.is_zero() => {}
            Some(c) => r0.add_assign(&Block::monomial(j, 0, c * &inv_am1)),
        }
    }
    let phi = step(&r0);
    let out = if r0.is_empty() { f.clone() } else { conjugate(f, &phi)? };
    let s = EliminationStep { kind: StepKind::FirstBlock, gamma: Q::one(), beta: alpha, alpha, m, r: r0, t: t0, residual: None };
    Ok((s, out))
}

/// Leading block of `phi^-1 ∘ (z + z^alpha T0) ∘ phi` for `phi = z (1 + R)`:
/// `(1 + R)^alpha T0(l / (1 - l log(1 + R))) / (1 + R + l^2 R')`, all series
/// in `l` held in the block `z^0`.
fn first_block_image(t0: &Transseries, r: &Transseries, alpha: Q) -> Result<Transseries, FormalError> {
    let budget = t0.budget();
    let one = Transseries::one(budget);
    let mut log1p = Transseries::zero(budget);
    let mut binom = one.clone();
    let mut power = one.clone();
    let mut coef = Q::one();
    for j in 1.. {
        power = power.mul(r);
        if power.is_zero() {
            break;
        }
        let sign = if j % 2 == 1 { Q::one() } else { -Q::one() };
        log1p = log1p.add(&power.scale_q(sign / Q::from_integer(j)));
        coef = coef * (alpha - Q::from_integer(j - 1)) / Q::from_integer(j);
        binom = binom.add(&power.scale_q(coef));
    }
    let base = one.sub(&log1p.shift(Q::zero(), 1));
    let inv_base = base.recip()?;
    let mut arg = Transseries::zero(budget);
    for ((k, _), c) in t0.block(Q::zero()).map(|b| b.terms().map(|(k, c)| (*k, c.clone())).collect::<Vec<_>>()).unwrap_or_default() {
        let factor = if k >= 0 { inv_base.pow(k as u32) } else { base.pow((-k) as u32) };
        arg = arg.add(&factor.shift(Q::zero(), k).scale(&c));
    }
    // l^2 dR/dl = z dR/dz for a series in l alone
    let den = one.add(r).add(&r.euler());
    binom.mul(&arg).div(&den)
}

/// Solves `(alpha - gamma) r_j + (m - j + 1) r_(j-1) = t_(j+m)` for the
/// coefficients of `R`; returns `R` and, in the residual case, the
/// coefficient that cannot be removed.
fn solve_bracket(t: &Block, alpha: Q, m: i64, gamma: Q, top: i64) -> Result<(Block, Option<Coeff>), FormalError> {
    let mut tt: BTreeMap<i64, Coeff> = BTreeMap::new();
    for ((k, n), c) in t.terms() {
        if *n != 0 {
            return Err(FormalError::Malformed("l2 monomials cannot be eliminated".into()));
        }
        tt.insert(k - m, c.clone());
    }
    let Some(&jmin) = tt.keys().next() else {
        return Ok((Block::exact(), None));
    };
    let jmax = top - m;
    let mut r: BTreeMap<i64, Coeff> = BTreeMap::new();
    let mut residual = None;
    let zero = Coeff::zero();
    if alpha != gamma {
        let dinv = c_q((alpha - gamma).recip());
        let mut prev = Coeff::zero();
        for j in jmin..=jmax {
            let tj = tt.get(&j).unwrap_or(&zero);
            let rj = (tj - prev * c_q(Q::from_integer(m - j + 1))) * &dinv;
            if !rj.is_zero() {
                r.insert(j, rj.clone());
            }
            prev = rj;
        }
    } else {
        for (j, tj) in tt.range(..=jmax) {
            if *j == m + 1 {
                residual = Some(tj.clone());
                continue;
            }
            r.insert(j - 1, tj * c_q(Q::new(1, m - j + 1)));
        }
        if residual.is_none() && m < jmax {
            residual = Some(Coeff::zero());
        }
    }
    Ok((Block::from_terms(r.into_iter().map(|(j, c)| ((j, 0), c)), None), residual))
}

/// Removes the block `z^beta` of `f = z - z^alpha l^m + ...`, assuming all
/// lower blocks are already in normal form.
pub fn eliminate_higher_block(f: &Transseries, alpha: Q, m: i64, beta: Q) -> Result<(EliminationStep, Transseries), FormalError> {
    if beta <= alpha {
        return Err(FormalError::Malformed(format!("block z^{} is not above z^{}", fmt_q(beta), fmt_q(alpha))));
    }
    let budget = f.budget();
    let gamma = beta - alpha + Q::one();
    let kind = if gamma == alpha { StepKind::ResidualBlock } else { StepKind::HigherBlock };
    let t = f.block(beta).cloned().unwrap_or_default();
    let known = t.prec().map_or(budget.l_depth, |p| (p - 1).min(budget.l_depth));
    let t_known = Block::from_terms(t.terms().map(|(k, c)| (*k, c.clone())), None);
    let (r, residual) = solve_bracket(&t_known, alpha, m, gamma, known)?;
    let step = EliminationStep { kind, gamma, beta, alpha, m, r, t: t_known, residual };
    if step.is_identity() {
        return Ok((step, f.clone()));
    }
    let out = conjugate(f, &step.change(budget))?;
    Ok((step, out))
}

/// Runs the first-block and all higher-block eliminations up to the
/// `z`-budget and reads off `(alpha, m, rho)`.
///
/// Conjugations by changes with negative powers of `l` move clipped
/// high-order terms down, so the work runs at a deeper `l`-depth that is
/// doubled until every block of the result is known to the requested depth.
pub fn reduce_to_normal_form(f: &Transseries) -> Result<Reduction, FormalError> {
    let target = f.budget();
    let mut extra = L_MARGIN;
    loop {
        let mut r = reduce_at(&f.with_budget(target.widen(Q::zero(), extra)))?;
        let (alpha, m) = (r.invariants.alpha, r.invariants.m);
        let reachable = Q::from_integer(2) * alpha - Q::one() <= target.z_order && 2 * m < target.l_depth;
        let known = r.normal.blocks().filter(|(b, _)| **b <= target.z_order).all(|(_, blk)| blk.prec().is_none_or(|p| p > target.l_depth));
        if (known && (r.invariants.rho.is_some() || !reachable)) || extra >= MAX_MARGIN {
            r.normal = r.normal.with_budget(target);
            r.normalized_input = r.normalized_input.with_budget(target);
            if !reachable {
                r.invariants.rho = None;
            }
            return Ok(r);
        }
        extra *= 2;
    }
}

fn reduce_at(f: &Transseries) -> Result<Reduction, FormalError> {
    let (normalization, g) = normalize(f)?;
    let (alpha, m, _) = leading(&g)?;
    let (s0, mut cur) = eliminate_first_block(&g)?;
    let mut steps = vec![s0];
    let res_beta = Q::from_integer(2) * alpha - Q::one();
    let mut cursor = alpha;
    loop {
        let next = cur
            .blocks()
            .find(|(b, blk)| **b > cursor && !blk.is_empty())
            .map(|(b, blk)| (*b, blk.terms().all(|(key, _)| *b == res_beta && *key == (2 * m + 1, 0))));
        let Some((beta, already_normal)) = next else { break };
        if already_normal {
            cursor = beta;
            continue;
        }
        let (step, out) = eliminate_higher_block(&cur, alpha, m, beta)?;
        steps.push(step);
        cur = out;
        cursor = beta;
    }
    let rho = cur.coeff(res_beta, 2 * m + 1, 0);
    Ok(Reduction { invariants: FormalInvariants { alpha, m, rho }, steps, normal: cur, normalization, normalized_input: g })
}

/// Which model germ [`model_germ`] builds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    /// `z - z^alpha l^m + rho z^(2 alpha - 1) l^(2m + 1)`.
    F,
    /// Time-one map of `-z^alpha l^m / (1 - (alpha/2) z^(alpha-1) l^m + (rho - m/2) z^(alpha-1) l^(m+1))`.
    /// The quadratic term of the exponential adds `m/2` to the residual
    /// coefficient, so the time-one map lies in the class `rho`.
    F1,
    /// Time-one map of `z^alpha T0 / (1 + (alpha/2) z^(alpha-1) T0 + b z^(alpha-1) T0 l)`.
    F2,
}

fn rho_of(inv: &FormalInvariants) -> Result<Coeff, FormalError> {
    inv.rho.clone().ok_or_else(|| FormalError::Malformed("model germ needs rho".into()))
}

/// Vector field of the second model for a given `b`.
fn f2_field(alpha: Q, t0: &Transseries, b: &Coeff, budget: TruncationBudget) -> Result<Transseries, FormalError> {
    let am1 = alpha - Q::one();
    let zt = t0.shift(am1, 0);
    let den = Transseries::one(budget).add(&zt.scale_q(alpha / Q::from_integer(2))).add(&zt.shift(Q::zero(), 1).scale(b));
    t0.shift(alpha, 0).div(&den)
}

/// Builds a model germ of the class `inv`.
pub fn model_germ(inv: &FormalInvariants, which: ModelKind, t0: Option<&Transseries>, budget: TruncationBudget) -> Result<Transseries, FormalError> {
    let (alpha, m) = (inv.alpha, inv.m);
    let am1 = alpha - Q::one();
    match which {
        ModelKind::F => {
            let rho = rho_of(inv)?;
            let ms = [
                Monomial { coeff: Coeff::one(), zexp: Q::one(), lexp: 0, l2exp: 0 },
                Monomial { coeff: -Coeff::one(), zexp: alpha, lexp: m, l2exp: 0 },
                Monomial { coeff: rho, zexp: alpha + am1, lexp: 2 * m + 1, l2exp: 0 },
            ];
            Ok(Transseries::from_monomials(ms, budget))
        }
        ModelKind::F1 => {
            let rho = rho_of(inv)?;
            let wide = budget.widen(Q::zero(), 2);
            let den = Transseries::from_monomials(
                [
                    Monomial { coeff: Coeff::one(), zexp: Q::zero(), lexp: 0, l2exp: 0 },
                    Monomial { coeff: -c_q(alpha / Q::from_integer(2)), zexp: am1, lexp: m, l2exp: 0 },
                    Monomial { coeff: rho - c_q(Q::new(m, 2)), zexp: am1, lexp: m + 1, l2exp: 0 },
                ],
                wide,
            );
            let num = Transseries::monomial(-Coeff::one(), alpha, m, 0, wide);
            let xi = num.div(&den)?.with_budget(budget);
            formal_flow(&xi, Q::one())
        }
        ModelKind::F2 => {
            let rho = rho_of(inv)?;
            let t0 = t0.ok_or_else(|| FormalError::Malformed("the second model needs T0".into()))?.with_budget(budget);
            let lead = t0.leading_monomial().ok_or(FormalError::ZeroSeries)?;
            if t0.min_zexp() != Some(Q::zero()) || lead.lexp != m || lead.l2exp != 0 || lead.coeff != -Coeff::one() {
                return Err(FormalError::Malformed(format!("T0 must start with -l^{m}")));
            }
            // rho is affine in b: solve from two trial values
            let rho_at = |b: &Coeff| -> Result<Coeff, FormalError> {
                let f = formal_flow(&f2_field(alpha, &t0, b, budget)?, Q::one())?;
                reduce_to_normal_form(&f)?.invariants.rho.ok_or_else(|| FormalError::BudgetTooSmall("residual block beyond budget".into()))
            };
            let r0 = rho_at(&Coeff::zero())?;
            let r1 = rho_at(&Coeff::one())?;
            let slope = &r1 - &r0;
            let inv_slope = crate::coeff::c_inv(&slope).ok_or_else(|| FormalError::Malformed("rho does not depend on b".into()))?;
            let b = (rho - r0) * inv_slope;
            formal_flow(&f2_field(alpha, &t0, &b, budget)?, Q::one())
        }
    }
}

/// `phi` with `phi^-1 ∘ f ∘ phi = g` up to budget, built from both
/// reductions as `Phi_f ∘ Phi_g^-1`.
pub fn formal_conjugacy(f: &Transseries, g: &Transseries) -> Result<Transseries, FormalError> {
    let rf = reduce_to_normal_form(f)?;
    let rg = reduce_to_normal_form(g)?;
    if rf.invariants != rg.invariants || rf.normalization.inverse != rg.normalization.inverse {
        return Err(FormalError::InvariantMismatch(rf.invariants.to_string(), rg.invariants.to_string()));
    }
    let pf = rf.conjugacy()?;
    let pg = rg.conjugacy()?;
    let pg_inv = invert_general(&pg)?;
    pf.compose(&pg_inv)
}

/// Inverse of `c z + o(z)` with rational `c > 0`.
fn invert_general(p: &Transseries) -> Result<Transseries, FormalError> {
    let c = p.coeff(Q::one(), 0, 0).ok_or_else(|| FormalError::NonParabolic("unknown linear part".into()))?;
    if c.is_one() {
        return invert(p);
    }
    let cinv = crate::coeff::c_inv(&c).ok_or_else(|| FormalError::NonParabolic("zero linear part".into()))?;
    // p = c q with q parabolic, p^-1(w) = q^-1(w / c)
    let q = p.scale(&cinv);
    let qinv = invert(&q)?;
    let lin = Transseries::monomial(cinv, Q::one(), 0, 0, p.budget());
    qinv.compose(&lin)
}
