//! Germ definitions and the text formats of the toolkit.
//!
//! A germ file holds one germ as `key=value` lines; `#` starts a comment.
//!
//! ```text
//! name=example
//! backend=series          # series | flow | expression
//! body=z - z^2 + 1/2*z^3*l^1
//! alpha=2
//! m=0
//! a=1
//! generators=1/2          # optional exponent basis
//! time=1                  # flow backend only
//! C=1
//! R=2
//! real=true
//! ```
//!
//! Series bodies use the transseries grammar of [`parse_transseries`]; flow
//! bodies (the vector field `xi` of `xi d/dz`) and expression bodies use
//! the expression grammar of [`Expr`].

mod expr;
mod lexer;
mod series;

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub use expr::{Expr, Var};
pub use series::{parse_transseries, parse_transseries_with, serialize_transseries};

use crate::coeff::{c_real, fmt_coeff, fmt_q, fmt_rat, parse_rational, q_to_f64, rat_to_f64, rat_to_q, Q};
use crate::error::{Error, ParseError};
use crate::transseries::{formal_flow, Basis, Transseries, TruncationBudget};

/// Declared leading data: `f(z) = z - a z^alpha l^m + O(z^alpha l^(m+1))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Leading {
    pub a: BigRational,
    pub alpha: Q,
    pub m: i64,
}

impl Leading {
    pub fn a_f64(&self) -> f64 {
        rat_to_f64(&self.a)
    }

    pub fn alpha_f64(&self) -> f64 {
        q_to_f64(self.alpha)
    }
}

/// How a germ is evaluated.
#[derive(Clone, Debug)]
pub enum Backend {
    /// Truncated transseries.
    Series(Transseries),
    /// Time-`time` map of the vector field `xi d/dz`.
    Flow { xi: Expr, text: String, time: Q },
    /// Closed form `f(z)`.
    Expression { expr: Expr, text: String },
}

impl Backend {
    pub fn kind(&self) -> &'static str {
        match self {
            Backend::Series(_) => "series",
            Backend::Flow { .. } => "flow",
            Backend::Expression { .. } => "expression",
        }
    }
}

/// A named germ with its declared leading data and domain parameters.
#[derive(Clone, Debug)]
pub struct GermDefinition {
    pub name: String,
    pub backend: Backend,
    pub leading: Leading,
    pub generators: Basis,
    /// Standard quadratic domain parameter `C >= 0`.
    pub domain_c: f64,
    /// Standard quadratic domain parameter `R > 0`.
    pub domain_r: f64,
    pub real_coefficients: bool,
}

impl GermDefinition {
    /// Builds a series-backed definition, reading the leading data from `f`.
    pub fn from_series(name: &str, f: Transseries) -> Result<Self, Error> {
        let leading = read_leading(&f)?;
        let g = GermDefinition {
            name: name.to_string(),
            real_coefficients: f.is_real(),
            generators: f.basis().clone(),
            backend: Backend::Series(f),
            leading,
            domain_c: 1.0,
            domain_r: 2.0,
        };
        g.validate()?;
        Ok(g)
    }

    /// Formal expansion within `budget`.
    pub fn series(&self, budget: TruncationBudget) -> Result<Transseries, Error> {
        Ok(match &self.backend {
            Backend::Series(t) => t.with_budget(budget),
            Backend::Flow { xi, time, .. } => {
                let s = xi.to_series(budget)?;
                formal_flow(&s, *time)?
            }
            Backend::Expression { expr, .. } => expr.to_series(budget)?,
        })
    }

    /// Checks the parabolic shape and the declared leading data.
    pub fn validate(&self) -> Result<(), ParseError> {
        let lead = &self.leading;
        if lead.alpha <= Q::one() {
            return Err(ParseError::Schema(format!("alpha = {} must be > 1", fmt_q(lead.alpha))));
        }
        if lead.a.is_zero() {
            return Err(ParseError::Schema("a must be nonzero".into()));
        }
        if !(self.domain_c >= 0.0) || !(self.domain_r > 0.0) {
            return Err(ParseError::Schema("domain parameters need C >= 0 and R > 0".into()));
        }
        let budget = TruncationBudget::new(lead.alpha + Q::one(), lead.m.max(0) + 2);
        match self.series(budget) {
            Ok(s) => {
                if self.real_coefficients && !s.is_real() {
                    return Err(ParseError::Schema("real=true but the expansion has complex coefficients".into()));
                }
                check_leading_symbolic(&s, lead)
            }
            Err(Error::Formal(e)) if matches!(self.backend, Backend::Expression { .. }) => {
                let _ = e;
                check_leading_numeric(self)
            }
            Err(Error::Formal(e)) => Err(ParseError::Schema(format!("backend does not expand: {e}"))),
            Err(Error::Parse(p)) => Err(p),
            Err(e) => Err(ParseError::Schema(e.to_string())),
        }
    }

    /// `f(z)` evaluated by the expression backend at `zeta`.
    pub fn expression_value(&self, zeta: Complex64) -> Option<Complex64> {
        match &self.backend {
            Backend::Expression { expr, .. } => Some(expr.eval(zeta)),
            _ => None,
        }
    }
}

/// Reads `(a, alpha, m)` from the second block of a parabolic series.
pub fn read_leading(f: &Transseries) -> Result<Leading, ParseError> {
    let mut blocks = f.blocks();
    let (b1, blk1) = blocks.next().ok_or_else(|| ParseError::LeadingMismatch("zero series".into()))?;
    if *b1 != Q::one() || blk1.coeff(0, 0) != Some(crate::coeff::c_one()) || blk1.terms().count() != 1 {
        return Err(ParseError::LeadingMismatch("series does not start with z".into()));
    }
    let (alpha, blk) = blocks
        .find(|(_, blk)| !blk.is_empty())
        .ok_or_else(|| ParseError::LeadingMismatch("germ is the identity within budget".into()))?;
    let ((m, n), c) = blk.lead().unwrap();
    if *n != 0 || !c.im.is_zero() {
        return Err(ParseError::LeadingMismatch(format!("leading block at z^{} is not of the form -a l^m", fmt_q(*alpha))));
    }
    Ok(Leading { a: -c.re.clone(), alpha: *alpha, m: *m })
}

fn check_leading_symbolic(s: &Transseries, lead: &Leading) -> Result<(), ParseError> {
    let mismatch = |b: Q, k: i64, n: i64, got: String, want: String| {
        ParseError::LeadingMismatch(format!("coefficient of z^{}*l^{}*l2^{} is {}, expected {}", fmt_q(b), k, n, got, want))
    };
    if s.coeff(Q::one(), 0, 0) != Some(crate::coeff::c_one()) {
        return Err(ParseError::LeadingMismatch("expansion does not start with z".into()));
    }
    for (b, blk) in s.blocks() {
        if *b > lead.alpha {
            break;
        }
        if *b == lead.alpha {
            for ((k, n), c) in blk.terms() {
                if *k < lead.m || (*k == lead.m && *n != 0) {
                    return Err(mismatch(*b, *k, *n, fmt_coeff(c), "0".into()));
                }
            }
            let want = c_real(-lead.a.clone());
            let got = blk.coeff(lead.m, 0).ok_or_else(|| ParseError::LeadingMismatch("leading coefficient unknown".into()))?;
            if got != want {
                return Err(mismatch(*b, lead.m, 0, fmt_coeff(&got), fmt_coeff(&want)));
            }
            return Ok(());
        }
        for ((k, n), c) in blk.terms() {
            let want = if *b == Q::one() && *k == 0 && *n == 0 { crate::coeff::c_one() } else { crate::coeff::c_zero() };
            if *c != want {
                return Err(mismatch(*b, *k, *n, fmt_coeff(c), fmt_coeff(&want)));
            }
        }
    }
    if s.coeff(lead.alpha, lead.m, 0).is_none() {
        return Err(ParseError::LeadingMismatch("leading block beyond the expansion".into()));
    }
    let want = c_real(-lead.a.clone());
    Err(mismatch(lead.alpha, lead.m, 0, "0".into(), fmt_coeff(&want)))
}

/// Numeric leading check along the positive real axis: the ratio
/// `(f(z) - z) / (z^alpha l^m)` must approach `-a` at rate `O(l)`.
fn check_leading_numeric(g: &GermDefinition) -> Result<(), ParseError> {
    let lead = &g.leading;
    let am1 = lead.alpha_f64() - 1.0;
    let a = lead.a_f64();
    let err_at = |zeta: f64| {
        let zc = Complex64::new(zeta, 0.0);
        let f = g.expression_value(zc).unwrap();
        let z = (-zc).exp();
        let scale = (-zc * lead.alpha_f64()).exp() * zc.powi(-lead.m as i32);
        ((f - z) / scale + a).norm() * zeta
    };
    let z1 = 4.0 * std::f64::consts::LN_10 / am1;
    let z2 = 6.0 * std::f64::consts::LN_10 / am1;
    let (e1, e2) = (err_at(z1), err_at(z2));
    if !e1.is_finite() || !e2.is_finite() || e2 > 2.0 * e1 + 1e-6 || e2 / z2 > 0.5 * a.abs() {
        return Err(ParseError::LeadingMismatch(format!("numeric leading ratio deviates from -a: scaled errors {e1:.3e}, {e2:.3e}")));
    }
    Ok(())
}

/// Parses a germ file.
pub fn parse_germ_file(path: impl AsRef<Path>) -> Result<GermDefinition, Error> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| ParseError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_germ_str(&text)
}

/// Parses and validates the `key=value` germ format.
pub fn parse_germ_str(text: &str) -> Result<GermDefinition, Error> {
    let mut kv: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ParseError::Schema(format!("line {}: expected key=value", lineno + 1)))?;
        let key = k.trim().to_string();
        const KEYS: [&str; 11] = ["name", "backend", "generators", "alpha", "m", "a", "body", "C", "R", "real", "time"];
        if !KEYS.contains(&key.as_str()) {
            return Err(ParseError::Schema(format!("line {}: unknown key '{key}'", lineno + 1)).into());
        }
        if kv.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(ParseError::Schema(format!("duplicate key '{key}'")).into());
        }
    }
    let get = |k: &str| kv.get(k).cloned().ok_or_else(|| ParseError::Schema(format!("missing key '{k}'")));
    let rational = |k: &str, s: &str| parse_rational(s).ok_or_else(|| ParseError::Schema(format!("{k}: '{s}' is not a rational number")));
    let name = get("name")?;
    let alpha_r = rational("alpha", &get("alpha")?)?;
    let alpha = rat_to_q(&alpha_r).ok_or_else(|| ParseError::Schema("alpha too large".into()))?;
    let m: i64 = get("m")?.parse().map_err(|_| ParseError::Schema("m must be an integer".into()))?;
    let a = rational("a", &get("a")?)?;
    let generators = match kv.get("generators") {
        Some(s) if !s.is_empty() => {
            let gens = s
                .split(',')
                .map(|g| rational("generators", g.trim()).and_then(|r| rat_to_q(&r).ok_or_else(|| ParseError::Schema("generator too large".into()))))
                .collect::<Result<Vec<Q>, _>>()?;
            Basis::new(gens).map_err(|e| ParseError::Schema(e.to_string()))?
        }
        _ => Basis::integer(),
    };
    let float = |k: &str, default: f64| -> Result<f64, ParseError> {
        match kv.get(k) {
            Some(s) => s.parse::<f64>().map_err(|_| ParseError::Schema(format!("{k} must be a number"))),
            None => Ok(default),
        }
    };
    let domain_c = float("C", 1.0)?;
    let domain_r = float("R", 2.0)?;
    let body = get("body")?;
    let backend = match get("backend")?.as_str() {
        "series" => {
            let budget = TruncationBudget::default();
            let probe = parse_transseries(&body)?;
            let zmax = probe.blocks().map(|(b, _)| *b).max().unwrap_or_else(Q::zero);
            let lmax = probe.monomials().map(|m| m.lexp).max().unwrap_or(0);
            let budget = TruncationBudget::new(budget.z_order.max(zmax), budget.l_depth.max(lmax));
            Backend::Series(parse_transseries_with(&body, budget, Some(&generators.union(&Basis::infer([&alpha]))))?)
        }
        "flow" => {
            let time = match kv.get("time") {
                Some(s) => rat_to_q(&rational("time", s)?).ok_or_else(|| ParseError::Schema("time too large".into()))?,
                None => Q::one(),
            };
            Backend::Flow { xi: Expr::parse(&body)?, text: body.clone(), time }
        }
        "expression" => Backend::Expression { expr: Expr::parse(&body)?, text: body.clone() },
        other => return Err(ParseError::Schema(format!("unknown backend '{other}'")).into()),
    };
    if kv.contains_key("time") && !matches!(backend, Backend::Flow { .. }) {
        return Err(ParseError::Schema("'time' is only valid for the flow backend".into()).into());
    }
    let real_coefficients = match kv.get("real").map(String::as_str) {
        None | Some("true") => true,
        Some("false") => false,
        Some(other) => return Err(ParseError::Schema(format!("real must be true or false, got '{other}'")).into()),
    };
    let g = GermDefinition { name, backend, leading: Leading { a, alpha, m }, generators, domain_c, domain_r, real_coefficients };
    g.validate()?;
    Ok(g)
}

/// Deterministic text output.
pub trait ToText {
    fn to_text(&self) -> String;
}

impl ToText for Transseries {
    fn to_text(&self) -> String {
        serialize_transseries(self)
    }
}

impl ToText for GermDefinition {
    fn to_text(&self) -> String {
        let body = match &self.backend {
            Backend::Series(t) => serialize_transseries(t),
            Backend::Flow { text, .. } | Backend::Expression { text, .. } => text.clone(),
        };
        let mut out = format!("name={}\nbackend={}\nbody={}\n", self.name, self.backend.kind(), body);
        if let Backend::Flow { time, .. } = &self.backend {
            out.push_str(&format!("time={}\n", fmt_q(*time)));
        }
        out.push_str(&format!("alpha={}\nm={}\na={}\n", fmt_q(self.leading.alpha), self.leading.m, fmt_rat(&self.leading.a)));
        if !self.generators.generators().is_empty() {
            let gens: Vec<String> = self.generators.generators().iter().map(|g| fmt_q(*g)).collect();
            out.push_str(&format!("generators={}\n", gens.join(",")));
        }
        out.push_str(&format!("C={}\nR={}\nreal={}\n", self.domain_c, self.domain_r, self.real_coefficients));
        out
    }
}

/// Serializes any value with a text form.
pub fn serialize<T: ToText + ?Sized>(x: &T) -> String {
    x.to_text()
}
