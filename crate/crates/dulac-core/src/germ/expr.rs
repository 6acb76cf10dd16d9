//! Closed-form expressions in `z`, `l` and `l2`.
//!
//! Grammar with the usual precedence (`^` binds tightest, right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ['^' unary]
//! atom  := number | 'z' | 'l' | 'l2' | ('log' | 'exp') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Evaluation happens in the chart `zeta = -log z`, where `log z = -zeta`
//! and `log l = -Log zeta` are tracked exactly, so expressions are
//! single-valued on the Riemann surface of the logarithm.

use std::fmt;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use super::lexer::{tokenize, Cursor, Tok};
use crate::coeff::{c_real, fmt_rat, parse_rational, rat_to_f64, rat_to_q, Q};
use crate::error::{FormalError, ParseError};
use crate::transseries::{Transseries, TruncationBudget};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    Z,
    L,
    L2,
}

/// Expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(BigRational),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, Box<Expr>),
    Log(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ParseError> {
        let mut cur = Cursor::new(tokenize(text)?, text.len());
        let e = parse_expr(&mut cur)?;
        if !cur.done() {
            return Err(cur.error("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Exact value of a constant subexpression.
    pub fn constant(&self) -> Option<BigRational> {
        match self {
            Expr::Num(r) => Some(r.clone()),
            Expr::Var(_) | Expr::Log(_) | Expr::Exp(_) => None,
            Expr::Neg(a) => Some(-a.constant()?),
            Expr::Add(a, b) => Some(a.constant()? + b.constant()?),
            Expr::Sub(a, b) => Some(a.constant()? - b.constant()?),
            Expr::Mul(a, b) => Some(a.constant()? * b.constant()?),
            Expr::Div(a, b) => {
                let d = b.constant()?;
                if d.is_zero() {
                    None
                } else {
                    Some(a.constant()? / d)
                }
            }
            Expr::Pow(a, b) => {
                let e = b.constant()?;
                if !e.is_integer() {
                    return None;
                }
                crate::coeff::rat_pow(&a.constant()?, e.to_integer().to_i64()?)
            }
        }
    }

    /// Value at `zeta = -log z`.
    pub fn eval(&self, zeta: Complex64) -> Complex64 {
        match self {
            Expr::Num(r) => Complex64::new(rat_to_f64(r), 0.0),
            Expr::Var(Var::Z) => (-zeta).exp(),
            Expr::Var(Var::L) => zeta.inv(),
            Expr::Var(Var::L2) => zeta.ln().inv(),
            Expr::Neg(a) => -a.eval(zeta),
            Expr::Add(a, b) => a.eval(zeta) + b.eval(zeta),
            Expr::Sub(a, b) => a.eval(zeta) - b.eval(zeta),
            Expr::Mul(a, b) => a.eval(zeta) * b.eval(zeta),
            Expr::Div(a, b) => a.eval(zeta) / b.eval(zeta),
            Expr::Pow(a, b) => {
                if let Some(n) = b.constant().filter(|e| e.is_integer()).and_then(|e| e.to_integer().to_i32()) {
                    return a.eval(zeta).powi(n);
                }
                (b.eval(zeta) * a.eval_log(zeta)).exp()
            }
            Expr::Log(a) => a.eval_log(zeta),
            Expr::Exp(a) => a.eval(zeta).exp(),
        }
    }

    /// Logarithm of the value, continuous along the surface.
    fn eval_log(&self, zeta: Complex64) -> Complex64 {
        match self {
            Expr::Var(Var::Z) => -zeta,
            Expr::Var(Var::L) => -zeta.ln(),
            Expr::Var(Var::L2) => -zeta.ln().ln(),
            Expr::Mul(a, b) => a.eval_log(zeta) + b.eval_log(zeta),
            Expr::Div(a, b) => a.eval_log(zeta) - b.eval_log(zeta),
            Expr::Pow(a, b) => b.eval(zeta) * a.eval_log(zeta),
            Expr::Exp(a) => a.eval(zeta),
            Expr::Add(a, b) => log_of_sum(a, b, 1.0, zeta),
            Expr::Sub(a, b) => log_of_sum(a, b, -1.0, zeta),
            _ => self.eval(zeta).ln(),
        }
    }

    /// Replaces `z`, `l` and `l2` by the given expressions.
    pub fn substitute(&self, z: &Expr, l: &Expr, l2: &Expr) -> Expr {
        let go = |e: &Expr| Box::new(e.substitute(z, l, l2));
        match self {
            Expr::Num(_) => self.clone(),
            Expr::Var(Var::Z) => z.clone(),
            Expr::Var(Var::L) => l.clone(),
            Expr::Var(Var::L2) => l2.clone(),
            Expr::Neg(a) => Expr::Neg(go(a)),
            Expr::Add(a, b) => Expr::Add(go(a), go(b)),
            Expr::Sub(a, b) => Expr::Sub(go(a), go(b)),
            Expr::Mul(a, b) => Expr::Mul(go(a), go(b)),
            Expr::Div(a, b) => Expr::Div(go(a), go(b)),
            Expr::Pow(a, b) => Expr::Pow(go(a), b.clone()),
            Expr::Log(a) => Expr::Log(go(a)),
            Expr::Exp(a) => Expr::Exp(go(a)),
        }
    }
    /// Expansion as a transseries within `budget`.
    pub fn to_series(&self, budget: TruncationBudget) -> Result<Transseries, FormalError> {
        match self {
            Expr::Num(r) => Ok(Transseries::constant(c_real(r.clone()), budget)),
            Expr::Var(Var::Z) => Ok(Transseries::z(budget)),
            Expr::Var(Var::L) => Ok(Transseries::monomial(c_real(BigRational::one()), Q::zero(), 1, 0, budget)),
            Expr::Var(Var::L2) => Ok(Transseries::monomial(c_real(BigRational::one()), Q::zero(), 0, 1, budget)),
            Expr::Neg(a) => Ok(a.to_series(budget)?.neg()),
            Expr::Add(a, b) => Ok(a.to_series(budget)?.add(&b.to_series(budget)?)),
            Expr::Sub(a, b) => Ok(a.to_series(budget)?.sub(&b.to_series(budget)?)),
            Expr::Mul(a, b) => {
                let (x, y) = (a.to_series(budget)?, b.to_series(budget)?);
                Ok(mul_deep(&x, &y, budget))
            }
            Expr::Div(a, b) => {
                let y = b.to_series(budget)?;
                let lead = y.min_zexp().unwrap_or_else(Q::zero);
                let lo = y.min_lorder().unwrap_or(0);
                let wide = budget.widen(lead.abs() * Q::from_integer(2), lo.abs() * 2);
                let x = a.to_series(wide)?;
                let y = b.to_series(wide)?;
                Ok(x.div(&y)?.with_budget(budget))
            }
            Expr::Pow(a, b) => {
                let e = b.constant().ok_or_else(|| FormalError::Malformed("exponent must be constant".into()))?;
                power_series(a, &e, budget)
            }
            Expr::Log(a) => log_series(a, budget),
            Expr::Exp(a) => {
                let x = a.to_series(budget)?;
                if x.min_zexp().is_some_and(|v| v <= Q::zero()) {
                    return Err(FormalError::Malformed("exp of a non-small argument".into()));
                }
                let mut term = Transseries::one(budget);
                let mut acc = term.clone();
                let mut k = 1i64;
                while !term.is_zero() {
                    term = term.mul(&x).scale_q(Q::new(1, k));
                    acc = acc.add(&term);
                    k += 1;
                }
                Ok(acc)
            }
        }
    }
}

/// `log(a + s b)` continued from the log of the dominant summand, so that
/// germs like `z - z^2` keep the level of `z`.
fn log_of_sum(a: &Expr, b: &Expr, s: f64, zeta: Complex64) -> Complex64 {
    let (va, vb) = (a.eval(zeta), b.eval(zeta) * s);
    if va.norm() >= vb.norm() {
        a.eval_log(zeta) + crate::numeric::log1p(vb / va)
    } else {
        let lb = b.eval_log(zeta) + if s < 0.0 { Complex64::new(0.0, std::f64::consts::PI) } else { Complex64::new(0.0, 0.0) };
        lb + crate::numeric::log1p(va / vb)
    }
}

fn mul_deep(x: &Transseries, y: &Transseries, budget: TruncationBudget) -> Transseries {
    x.mul(y).with_budget(budget)
}

/// Splits `t = z^b (c + u)` where `c` is the constant coefficient of the
/// leading block and `u` has positive order.
fn split_leading(t: &Transseries) -> Result<(Q, BigRational, Transseries), FormalError> {
    let b = t.min_zexp().ok_or(FormalError::ZeroSeries)?;
    let lead = t.block(b).unwrap();
    let c = lead.coeff(0, 0).ok_or_else(|| FormalError::Malformed("leading coefficient unknown".into()))?;
    if c.is_zero() || !c.im.is_zero() || lead.min_order().is_some_and(|k| k < 0) {
        return Err(FormalError::Malformed("leading block must start with a real constant".into()));
    }
    let u = t.shift(-b, 0).scale(&c_real(c.re.recip())).sub(&Transseries::one(t.budget()));
    Ok((b, c.re, u))
}

fn power_series(a: &Expr, e: &BigRational, budget: TruncationBudget) -> Result<Transseries, FormalError> {
    if e.is_integer() {
        let n = e.to_integer().to_i64().ok_or_else(|| FormalError::Malformed("exponent too large".into()))?;
        let base = a.to_series(budget)?;
        if n >= 0 {
            return Ok(base.pow(n as u32));
        }
        let lead = base.min_zexp().unwrap_or_else(Q::zero);
        let wide = budget.widen(lead.abs() * Q::from_integer(-n + 1), base.min_lorder().unwrap_or(0).abs() * (-n + 1));
        let base = a.to_series(wide)?;
        return Ok(base.recip()?.pow((-n) as u32).with_budget(budget));
    }
    let eq = rat_to_q(e).ok_or_else(|| FormalError::Malformed("exponent too large".into()))?;
    let base = a.to_series(budget)?;
    let (b, c, u) = split_leading(&base)?;
    if !c.is_one() {
        return Err(FormalError::Malformed("fractional power of a leading coefficient other than 1".into()));
    }
    let shift = b * eq;
    let inner = budget.widen(-shift.min(Q::zero()), 0);
    let u = u.with_budget(inner);
    let mut term = Transseries::one(inner);
    let mut acc = term.clone();
    let mut k = 0i64;
    while !term.is_zero() {
        let coef = (eq - Q::from_integer(k)) / Q::from_integer(k + 1);
        term = term.mul(&u).scale_q(coef);
        acc = acc.add(&term);
        k += 1;
    }
    Ok(acc.shift(shift, 0).with_budget(budget))
}

fn log_series(a: &Expr, budget: TruncationBudget) -> Result<Transseries, FormalError> {
    // log(-log z) = 1/l2
    if let Expr::Neg(inner) = a {
        if let Expr::Log(x) = inner.as_ref() {
            if matches!(x.as_ref(), Expr::Var(Var::Z)) {
                return Ok(Transseries::monomial(c_real(BigRational::one()), Q::zero(), 0, -1, budget));
            }
        }
    }
    let base = a.to_series(budget)?;
    let (b, c, u) = split_leading(&base)?;
    if !c.is_one() {
        return Err(FormalError::Malformed("log of a leading coefficient other than 1".into()));
    }
    // log(z^b (1 + u)) = -b l^-1 + sum (-1)^(k+1) u^k / k
    let mut acc = Transseries::monomial(c_real(-crate::coeff::big(b)), Q::zero(), -1, 0, budget);
    let mut power = Transseries::one(budget);
    let mut k = 1i64;
    loop {
        power = power.mul(&u);
        if power.is_zero() {
            break;
        }
        let sign = if k % 2 == 1 { 1 } else { -1 };
        acc = acc.add(&power.scale_q(Q::new(sign, k)));
        k += 1;
    }
    Ok(acc)
}

fn parse_expr(cur: &mut Cursor) -> Result<Expr, ParseError> {
    let mut lhs = parse_mul(cur)?;
    loop {
        if cur.eat(&Tok::Plus) {
            lhs = Expr::Add(Box::new(lhs), Box::new(parse_mul(cur)?));
        } else if cur.eat(&Tok::Minus) {
            lhs = Expr::Sub(Box::new(lhs), Box::new(parse_mul(cur)?));
        } else {
            return Ok(lhs);
        }
    }
}

fn parse_mul(cur: &mut Cursor) -> Result<Expr, ParseError> {
    let mut lhs = parse_unary(cur)?;
    loop {
        if cur.eat(&Tok::Star) {
            lhs = Expr::Mul(Box::new(lhs), Box::new(parse_unary(cur)?));
        } else if cur.eat(&Tok::Slash) {
            lhs = Expr::Div(Box::new(lhs), Box::new(parse_unary(cur)?));
        } else {
            return Ok(lhs);
        }
    }
}

fn parse_unary(cur: &mut Cursor) -> Result<Expr, ParseError> {
    if cur.eat(&Tok::Minus) {
        return Ok(Expr::Neg(Box::new(parse_unary(cur)?)));
    }
    if cur.eat(&Tok::Plus) {
        return parse_unary(cur);
    }
    let base = parse_atom(cur)?;
    if cur.eat(&Tok::Caret) {
        let pos = cur.pos();
        let e = parse_unary(cur)?;
        if e.constant().is_none() {
            return Err(ParseError::Syntax { pos, msg: "exponent must be a constant".into() });
        }
        return Ok(Expr::Pow(Box::new(base), Box::new(e)));
    }
    Ok(base)
}

fn parse_atom(cur: &mut Cursor) -> Result<Expr, ParseError> {
    match cur.next() {
        Some(Tok::Num(s)) => Ok(Expr::Num(parse_rational(&s).ok_or_else(|| cur.error("bad number"))?)),
        Some(Tok::LParen) => {
            let e = parse_expr(cur)?;
            cur.expect(&Tok::RParen, "')'")?;
            Ok(e)
        }
        Some(Tok::Ident(id)) => match id.as_str() {
            "z" => Ok(Expr::Var(Var::Z)),
            "l" => Ok(Expr::Var(Var::L)),
            "l2" => Ok(Expr::Var(Var::L2)),
            "log" | "exp" => {
                cur.expect(&Tok::LParen, "'('")?;
                let e = parse_expr(cur)?;
                cur.expect(&Tok::RParen, "')'")?;
                Ok(if id == "log" { Expr::Log(Box::new(e)) } else { Expr::Exp(Box::new(e)) })
            }
            _ => Err(cur.error(format!("unknown symbol '{id}'"))),
        },
        _ => Err(cur.error("expected an operand")),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(r) => {
                if r.is_negative() || !r.is_integer() {
                    write!(f, "({})", fmt_rat(r))
                } else {
                    write!(f, "{}", fmt_rat(r))
                }
            }
            Expr::Var(Var::Z) => f.write_str("z"),
            Expr::Var(Var::L) => f.write_str("l"),
            Expr::Var(Var::L2) => f.write_str("l2"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "{a}*{b}"),
            Expr::Div(a, b) => write!(f, "{a}/({b})"),
            Expr::Pow(a, b) => write!(f, "({a})^({b})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
        }
    }
}
