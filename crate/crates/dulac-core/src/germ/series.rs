//! Text form of transseries.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! sum    := term (('+' | '-') term)*
//! term   := ['+' | '-'] factor ('*' factor)*
//! factor := number ['/' number] | '(' complex ')' | 'z' ['^' exp] | 'l' ['^' int] | 'l2' ['^' int]
//! exp    := ['-'] int ['/' int] | '(' exp ')'
//! complex:= [sign] rational [sign rational 'i'] | [sign] rational 'i'
//! ```
//!
//! The exponent of `z` greedily takes a following `/int`, so `z^3/2` is
//! `z^(3/2)`.

use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::lexer::{tokenize, Cursor, Tok};
use crate::coeff::{fmt_coeff, fmt_q, parse_rational, Coeff, Q};
use crate::error::ParseError;
use crate::transseries::{Basis, Monomial, Transseries, TruncationBudget};

/// Parses a transseries literal. The budget is widened to hold every term.
pub fn parse_transseries(text: &str) -> Result<Transseries, ParseError> {
    let ms = parse_monomials(text)?;
    let zmax = ms.iter().map(|m| m.zexp).max().unwrap_or_else(Q::zero);
    let lmax = ms.iter().map(|m| m.lexp).max().unwrap_or(0);
    let def = TruncationBudget::default();
    let budget = TruncationBudget::new(def.z_order.max(zmax), def.l_depth.max(lmax));
    Ok(Transseries::from_monomials(ms, budget))
}

/// Parses with an explicit budget and declared exponent basis.
pub fn parse_transseries_with(text: &str, budget: TruncationBudget, basis: Option<&Basis>) -> Result<Transseries, ParseError> {
    let ms = parse_monomials(text)?;
    if let Some(b) = basis {
        if let Some(m) = ms.iter().find(|m| !b.contains(m.zexp)) {
            return Err(ParseError::Schema(format!("exponent {} is outside the declared basis", fmt_q(m.zexp))));
        }
    }
    let t = Transseries::from_monomials(ms, budget);
    Ok(match basis {
        Some(b) => {
            let full = b.union(t.basis());
            t.with_basis(full).expect("checked above")
        }
        None => t,
    })
}

fn parse_monomials(text: &str) -> Result<Vec<Monomial>, ParseError> {
    let mut cur = Cursor::new(tokenize(text)?, text.len());
    if cur.done() {
        return Err(cur.error("empty transseries"));
    }
    let mut out = Vec::new();
    let mut first = true;
    while !cur.done() {
        let mut sign = BigRational::one();
        if cur.eat(&Tok::Minus) {
            sign = -sign;
        } else if !cur.eat(&Tok::Plus) && !first {
            return Err(cur.error("expected '+' or '-'"));
        }
        first = false;
        out.push(parse_term(&mut cur, sign)?);
    }
    Ok(out)
}

fn parse_term(cur: &mut Cursor, sign: BigRational) -> Result<Monomial, ParseError> {
    let mut m = Monomial { coeff: Complex::new(sign, BigRational::zero()), zexp: Q::zero(), lexp: 0, l2exp: 0 };
    loop {
        parse_factor(cur, &mut m)?;
        if !cur.eat(&Tok::Star) {
            break;
        }
    }
    Ok(m)
}

fn parse_factor(cur: &mut Cursor, m: &mut Monomial) -> Result<(), ParseError> {
    let pos = cur.pos();
    match cur.next() {
        Some(Tok::Num(s)) => {
            let mut r = parse_rational(&s).ok_or_else(|| cur.error("bad number"))?;
            if cur.peek() == Some(&Tok::Slash) {
                cur.next();
                let d = unsigned_rational(cur)?;
                if d.is_zero() {
                    return Err(cur.error("division by zero"));
                }
                r /= d;
            }
            m.coeff = &m.coeff * Complex::new(r, BigRational::zero());
        }
        Some(Tok::LParen) => {
            let c = parse_complex(cur)?;
            cur.expect(&Tok::RParen, "')'")?;
            m.coeff = &m.coeff * c;
        }
        Some(Tok::Ident(id)) => match id.as_str() {
            "z" => m.zexp += if cur.eat(&Tok::Caret) { parse_exp(cur)? } else { Q::one() },
            "l" => m.lexp += if cur.eat(&Tok::Caret) { parse_int(cur)? } else { 1 },
            "l2" => m.l2exp += if cur.eat(&Tok::Caret) { parse_int(cur)? } else { 1 },
            _ => return Err(cur.error(format!("unknown symbol '{id}'"))),
        },
        _ => return Err(ParseError::Syntax { pos, msg: "expected a coefficient or one of z, l, l2".into() }),
    }
    Ok(())
}

fn unsigned_rational(cur: &mut Cursor) -> Result<BigRational, ParseError> {
    match cur.next() {
        Some(Tok::Num(s)) => parse_rational(&s).ok_or_else(|| cur.error("bad number")),
        _ => Err(cur.error("expected a number")),
    }
}

fn parse_complex(cur: &mut Cursor) -> Result<Coeff, ParseError> {
    let mut re = BigRational::zero();
    let mut im = BigRational::zero();
    let mut any = false;
    while cur.peek() != Some(&Tok::RParen) {
        let neg = if cur.eat(&Tok::Minus) {
            true
        } else {
            if any && !cur.eat(&Tok::Plus) {
                return Err(cur.error("expected '+' or '-' in complex literal"));
            }
            cur.eat(&Tok::Plus);
            false
        };
        let mut r = if let Some(Tok::Ident(id)) = cur.peek() {
            if id == "i" {
                BigRational::one()
            } else {
                return Err(cur.error("expected a number"));
            }
        } else {
            let mut r = unsigned_rational(cur)?;
            if cur.eat(&Tok::Slash) {
                r /= nonzero(cur)?;
            }
            r
        };
        if neg {
            r = -r;
        }
        if let Some(Tok::Ident(id)) = cur.peek() {
            if id != "i" {
                return Err(cur.error("expected 'i'"));
            }
            cur.next();
            im += r;
        } else {
            re += r;
        }
        any = true;
    }
    if !any {
        return Err(cur.error("empty complex literal"));
    }
    Ok(Complex::new(re, im))
}

fn nonzero(cur: &mut Cursor) -> Result<BigRational, ParseError> {
    let d = unsigned_rational(cur)?;
    if d.is_zero() {
        return Err(cur.error("division by zero"));
    }
    Ok(d)
}

fn parse_int(cur: &mut Cursor) -> Result<i64, ParseError> {
    let paren = cur.eat(&Tok::LParen);
    let neg = cur.eat(&Tok::Minus);
    if !neg {
        cur.eat(&Tok::Plus);
    }
    let v = match cur.next() {
        Some(Tok::Num(s)) if s.chars().all(|c| c.is_ascii_digit()) => s.parse::<i64>().map_err(|_| cur.error("integer too large"))?,
        _ => return Err(cur.error("expected an integer exponent")),
    };
    if paren {
        cur.expect(&Tok::RParen, "')'")?;
    }
    Ok(if neg { -v } else { v })
}

fn parse_exp(cur: &mut Cursor) -> Result<Q, ParseError> {
    let paren = cur.eat(&Tok::LParen);
    let neg = cur.eat(&Tok::Minus);
    if !neg {
        cur.eat(&Tok::Plus);
    }
    let r = match cur.next() {
        Some(Tok::Num(s)) => parse_rational(&s).ok_or_else(|| cur.error("bad exponent"))?,
        _ => return Err(cur.error("expected an exponent")),
    };
    let r = if matches!(cur.peek(), Some(Tok::Slash)) && matches!(cur.peek2(), Some(Tok::Num(_))) {
        cur.next();
        r / nonzero(cur)?
    } else {
        r
    };
    if paren {
        cur.expect(&Tok::RParen, "')'")?;
    }
    let q = crate::coeff::rat_to_q(&r).ok_or_else(|| cur.error("exponent too large"))?;
    Ok(if neg { -q } else { q })
}

/// Deterministic text form; monomials in ascending `(z, l, l2)` order.
pub fn serialize_transseries(t: &Transseries) -> String {
    let mut out = String::new();
    for (i, m) in t.monomials().enumerate() {
        let (neg, mag) = if m.coeff.im.is_zero() && m.coeff.re.is_negative() { (true, -m.coeff.clone()) } else { (false, m.coeff.clone()) };
        if i == 0 {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let mut factors: Vec<String> = Vec::new();
        if m.zexp == Q::one() {
            factors.push("z".into());
        } else if !m.zexp.is_zero() {
            factors.push(format!("z^{}", fmt_q(m.zexp)));
        }
        if m.lexp != 0 {
            factors.push(format!("l^{}", m.lexp));
        }
        if m.l2exp != 0 {
            factors.push(format!("l2^{}", m.l2exp));
        }
        if factors.is_empty() {
            out.push_str(&fmt_coeff(&mag));
        } else {
            if !mag.is_one() {
                out.push_str(&fmt_coeff(&mag));
                out.push('*');
            }
            out.push_str(&factors.join("*"));
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}
