//! Exact coefficients and exponents.
//!
//! Coefficients are complex numbers with arbitrary precision rational parts.
//! Exponents of `z` are small rationals.

use num_bigint::BigInt;
use num_complex::{Complex, Complex64};
use num_rational::{BigRational, Rational64};
use num_traits::{One, Signed, ToPrimitive, Zero};

/// Rational exponent of `z`.
pub type Q = Rational64;

/// Exact complex rational coefficient.
pub type Coeff = Complex<BigRational>;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(n, d)
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(n)
}

pub fn big(q: Q) -> BigRational {
    BigRational::new(BigInt::from(*q.numer()), BigInt::from(*q.denom()))
}

pub fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn c_int(n: i64) -> Coeff {
    Complex::new(BigRational::from_integer(BigInt::from(n)), BigRational::zero())
}

pub fn c_q(x: Q) -> Coeff {
    Complex::new(big(x), BigRational::zero())
}

pub fn c_real(x: BigRational) -> Coeff {
    Complex::new(x, BigRational::zero())
}

pub fn c_zero() -> Coeff {
    Coeff::zero()
}

pub fn c_one() -> Coeff {
    Coeff::one()
}

pub fn is_real(c: &Coeff) -> bool {
    c.im.is_zero()
}

pub fn rat_to_f64(r: &BigRational) -> f64 {
    if let Some(v) = r.to_f64() {
        if v.is_finite() {
            return v;
        }
    }
    let n = r.numer().to_f64().unwrap_or(f64::NAN);
    let d = r.denom().to_f64().unwrap_or(f64::NAN);
    n / d
}

pub fn to_c64(c: &Coeff) -> Complex64 {
    Complex64::new(rat_to_f64(&c.re), rat_to_f64(&c.im))
}

pub fn q_to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Exact multiplicative inverse, `None` for zero.
pub fn c_inv(c: &Coeff) -> Option<Coeff> {
    if c.is_zero() {
        return None;
    }
    let n = &c.re * &c.re + &c.im * &c.im;
    Some(Complex::new(&c.re / &n, -&c.im / &n))
}

/// Exact integer power of a rational, `None` on `0^negative`.
pub fn rat_pow(x: &BigRational, e: i64) -> Option<BigRational> {
    if e >= 0 {
        Some(num_traits::pow(x.clone(), e as usize))
    } else if x.is_zero() {
        None
    } else {
        Some(num_traits::pow(x.recip(), (-e) as usize))
    }
}

pub fn c_pow(x: &Coeff, e: i64) -> Option<Coeff> {
    if e >= 0 {
        Some(num_traits::pow(x.clone(), e as usize))
    } else {
        c_inv(x).map(|y| num_traits::pow(y, (-e) as usize))
    }
}

/// Parses a decimal or `a/b` literal as an exact rational.
pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once('/') {
        let n: BigInt = a.trim().parse().ok()?;
        let d: BigInt = b.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(BigRational::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{}{}", int_part, frac_part);
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let d = num_traits::pow(BigInt::from(10), frac_part.len());
    let r = BigRational::new(n, d);
    Some(if neg { -r } else { r })
}

pub fn fmt_rat(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn fmt_q(x: Q) -> String {
    if *x.denom() == 1 {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Formats a coefficient; complex values are wrapped as `(re+imi)`.
pub fn fmt_coeff(c: &Coeff) -> String {
    if c.im.is_zero() {
        return fmt_rat(&c.re);
    }
    if c.re.is_zero() {
        return format!("({}i)", fmt_rat(&c.im));
    }
    let sign = if c.im.is_negative() { "-" } else { "+" };
    format!("({}{}{}i)", fmt_rat(&c.re), sign, fmt_rat(&c.im.abs()))
}

/// Floor of a rational exponent.
pub fn q_floor(x: Q) -> i64 {
    x.floor().to_integer()
}

/// Converts an exact rational to a small exponent when it fits.
pub fn rat_to_q(r: &BigRational) -> Option<Q> {
    Some(Q::new(r.numer().to_i64()?, r.denom().to_i64()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_literals_are_exact() {
        assert_eq!(parse_rational("0.25"), Some(rat(1, 4)));
        assert_eq!(parse_rational("-1.5"), Some(rat(-3, 2)));
        assert_eq!(parse_rational("3/6"), Some(rat(1, 2)));
        assert_eq!(parse_rational("7"), Some(rat(7, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
    }

    #[test]
    fn complex_formatting() {
        let c = Complex::new(rat(1, 2), rat(-3, 4));
        assert_eq!(fmt_coeff(&c), "(1/2-3/4i)");
        assert_eq!(fmt_coeff(&c_int(-2)), "-2");
    }

    #[test]
    fn inverse_and_powers() {
        let c = Complex::new(rat(1, 1), rat(1, 1));
        let inv = c_inv(&c).unwrap();
        assert_eq!(&c * &inv, c_one());
        assert_eq!(c_pow(&c, -2).unwrap() * c_pow(&c, 2).unwrap(), c_one());
        assert!(c_inv(&c_zero()).is_none());
    }
}
