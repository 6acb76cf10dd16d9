//! Horn maps, their radii and symmetry, and comparison of moduli.
//!
//! For `alpha = 2` the attracting petal `V_j^+` and the repelling petal
//! `V_j^-` overlap in the `w` chart around the directions `-i` and `+i`.
//! With `E(W) = exp(-2 pi i W)` the horn maps are
//!
//! ```text
//! h_0^j(t)   = E(Psi_+^(j-1)((Psi_-^j)^-1(-ln t / (2 pi i))))
//! h_inf^j(t) = exp(2 pi i Psi_-^j((Psi_+^j)^-1(ln t / (2 pi i))))
//! ```
//!
//! Both commute with `W -> W + 1`, so they do not depend on the branch of
//! `ln t`. Radii are tiny (of size `exp(-2 pi |w|)`), so all computations
//! are carried out on `ln t` and on the ratio `q = h(t)/t`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::coeff::{big, c_real, fmt_coeff, fmt_q, q_to_f64, qi, rat_pow, Q};
use crate::error::{Error, FormalError, NumericError};
use crate::fatou::{solve_abel, FatouSeries};
use crate::germ::{Backend, Expr, GermDefinition, Leading};
use crate::normal_form::{reduce_to_normal_form, FormalInvariants};
use crate::numeric::NumericGerm;
use crate::petals::{build_petal, verify_uniform_bound, FatouCoordinate, PetalSign};
use crate::transseries::{Monomial, Transseries, TruncationBudget};

/// Which pole of the trajectory sphere a horn map lives at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pole {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "inf")]
    Infinity,
}

impl Pole {
    pub fn symbol(&self) -> &'static str {
        match self {
            Pole::Zero => "0",
            Pole::Infinity => "inf",
        }
    }
}

/// Sampling layout on `|t| in [inner R, outer R]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HornGrid {
    pub degree: usize,
    pub circles: usize,
    pub args: usize,
    pub inner: f64,
    pub outer: f64,
}

impl Default for HornGrid {
    fn default() -> Self {
        HornGrid { degree: 8, circles: 4, args: 16, inner: 0.1, outer: 0.5 }
    }
}

fn c2(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn from2(v: [f64; 2]) -> Complex64 {
    Complex64::new(v[0], v[1])
}

/// One sample: `t = exp(ln_t)` and `h(t) = t q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HornPoint {
    pub ln_t: [f64; 2],
    pub ln_q: [f64; 2],
    pub t: [f64; 2],
    pub value: [f64; 2],
}

/// Samples and fitted jet of `h_0^j` or `h_inf^j`.
///
/// The jet is `h(t) = R sum_k c_k (t/R)^k` with `R` the estimated radius,
/// so `c_1` is the linear coefficient and the higher `c_k` are scale free.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HornMapSample {
    pub j: i64,
    pub pole: Pole,
    /// `ln R_j`.
    pub ln_radius: f64,
    pub samples: Vec<HornPoint>,
    pub fitted_coeffs: Vec<[f64; 2]>,
    /// Max of `|h(t)/(c_1 t) - 1|` over the samples.
    pub linear_deviation: f64,
    /// Max relative misfit of the jet on the samples.
    pub fit_residual: f64,
}

impl HornMapSample {
    pub fn coeff(&self, k: usize) -> Complex64 {
        from2(self.fitted_coeffs[k - 1])
    }

    /// `ln h(t)` from the fitted jet.
    pub fn jet_ln(&self, ln_t: Complex64) -> Complex64 {
        let tau = (ln_t - self.ln_radius).exp();
        let mut acc = Complex64::new(0.0, 0.0);
        for c in self.fitted_coeffs.iter().rev() {
            acc = acc * tau + from2(*c);
        }
        ln_t + acc.ln()
    }

    /// `h(t)` from the fitted jet.
    pub fn jet(&self, t: Complex64) -> Complex64 {
        self.jet_ln(t.ln()).exp()
    }
}

/// Invariants in text form, as stored in moduli bundles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantsText {
    pub alpha: String,
    pub m: i64,
    pub rho: String,
}

impl From<&FormalInvariants> for InvariantsText {
    fn from(inv: &FormalInvariants) -> Self {
        InvariantsText { alpha: fmt_q(inv.alpha), m: inv.m, rho: inv.rho.as_ref().map_or_else(|| "?".into(), fmt_coeff) }
    }
}

/// Horn maps of one germ over a window of levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moduli {
    pub germ: String,
    pub invariants: InvariantsText,
    pub real: bool,
    pub maps: Vec<HornMapSample>,
}

impl Moduli {
    pub fn get(&self, j: i64, pole: Pole) -> Option<&HornMapSample> {
        self.maps.iter().find(|h| h.j == j && h.pole == pole)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("moduli serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Parse(crate::error::ParseError::Schema(e.to_string())))
    }
}

/// `(alpha, m, rho)` of a germ from its formal expansion.
pub fn germ_invariants(def: &GermDefinition) -> Result<FormalInvariants, Error> {
    let alpha = def.leading.alpha;
    let budget = TruncationBudget::new(Q::from_integer(2) * alpha + Q::one(), 6);
    let f = def.series(budget)?;
    Ok(reduce_to_normal_form(&f)?.invariants)
}

/// Fatou coordinates on the petals needed for a window of horn maps.
pub struct HornContext<'a> {
    pub germ: &'a NumericGerm,
    pub psi: FatouSeries,
    pub grid: HornGrid,
    pub c_bound: f64,
    coords: BTreeMap<(i64, bool), FatouCoordinate<'a>>,
}

/// Formal budget of the Fatou series used for horn maps.
pub fn horn_budget() -> TruncationBudget {
    TruncationBudget::new(qi(12), 6)
}

impl<'a> HornContext<'a> {
    /// Prepares `V_j^-`, `V_j^+` for `j` in `levels` and `V_(j-1)^+` for
    /// the lowest level.
    pub fn new(germ: &'a NumericGerm, levels: RangeInclusive<i64>, grid: HornGrid, tol: f64) -> Result<Self, Error> {
        let lead = germ.leading();
        if lead.alpha != qi(2) {
            return Err(NumericError::Precondition("horn maps need alpha = 2; rescale first".into()).into());
        }
        let bound = verify_uniform_bound(germ, 64);
        if !bound.pass {
            return Err(NumericError::Precondition(format!("uniform bound is not stable (c = {:.3e})", bound.c_est)).into());
        }
        let budget = horn_budget();
        let psi = solve_abel(&germ.definition.series(budget)?, budget)?;
        let mut coords = BTreeMap::new();
        for j in (*levels.start() - 1)..=*levels.end() {
            for sign in [PetalSign::Attracting, PetalSign::Repelling] {
                let petal = build_petal(germ, j, sign, bound.c_est)?;
                coords.insert((j, sign == PetalSign::Attracting), FatouCoordinate::new(germ, petal, &psi, tol));
            }
        }
        Ok(HornContext { germ, psi, grid, c_bound: bound.c_est, coords })
    }

    pub fn coordinate(&self, j: i64, sign: PetalSign) -> Result<&FatouCoordinate<'a>, NumericError> {
        self.coords
            .get(&(j, sign == PetalSign::Attracting))
            .ok_or_else(|| NumericError::Precondition(format!("no Fatou coordinate on V_{}^{}", j, sign.symbol())))
    }

    /// Changes the additive constant of one Fatou coordinate.
    pub fn set_constant(&mut self, j: i64, sign: PetalSign, c: Complex64) {
        if let Some(fc) = self.coords.get_mut(&(j, sign == PetalSign::Attracting)) {
            fc.constant = c;
        }
    }

    /// `ln q` with `h(t) = t q` at `ln t`.
    pub fn log_ratio(&self, j: i64, pole: Pole, ln_t: Complex64) -> Result<Complex64, NumericError> {
        let tpi = Complex64::new(0.0, 2.0 * PI);
        match pole {
            Pole::Zero => {
                let w = -ln_t / tpi;
                let p = self.coordinate(j, PetalSign::Repelling)?.inverse(w)?;
                let w2 = self.coordinate(j - 1, PetalSign::Attracting)?.eval(&p)?;
                Ok(-tpi * (w2 - w))
            }
            Pole::Infinity => {
                let w = ln_t / tpi;
                let p = self.coordinate(j, PetalSign::Attracting)?.inverse(w)?;
                let v = self.coordinate(j, PetalSign::Repelling)?.eval(&p)?;
                Ok(tpi * (v - w))
            }
        }
    }

    fn circle(&self, j: i64, pole: Pole, ln_r: f64) -> Result<Vec<(Complex64, Complex64)>, NumericError> {
        (0..self.grid.args)
            .map(|k| {
                let lt = Complex64::new(ln_r, -PI + 2.0 * PI * (k as f64 + 0.5) / self.grid.args as f64);
                let lq = self.log_ratio(j, pole, lt)?;
                if lq.is_finite() {
                    Ok((lt, lq))
                } else {
                    Err(NumericError::NoConvergence("non-finite horn value".into()))
                }
            })
            .collect()
    }

    /// Largest `ln r` (on a ladder refined by bisection) where a full
    /// circle of samples succeeds.
    pub fn ln_radius(&self, j: i64, pole: Pole) -> Result<f64, NumericError> {
        let (first, second) = match pole {
            Pole::Zero => (self.coordinate(j, PetalSign::Repelling)?, self.coordinate(j - 1, PetalSign::Attracting)?),
            Pole::Infinity => (self.coordinate(j, PetalSign::Attracting)?, self.coordinate(j, PetalSign::Repelling)?),
        };
        let mut y = 4.0 * first.petal.r0.max(second.petal.r0).max(1.0) + 8.0;
        let mut found = false;
        for _ in 0..4 {
            if self.circle(j, pole, -2.0 * PI * y).is_ok() {
                found = true;
                break;
            }
            y *= 2.0;
        }
        if !found {
            return Err(NumericError::Precondition(format!("petal overlap at pole {} of level {} is empty", pole.symbol(), j)));
        }
        let mut fail = None;
        while y > 0.05 {
            let next = 0.8 * y;
            if self.circle(j, pole, -2.0 * PI * next).is_ok() {
                y = next;
            } else {
                fail = Some(next);
                break;
            }
        }
        if let Some(mut bad) = fail {
            for _ in 0..6 {
                let mid = 0.5 * (y + bad);
                if self.circle(j, pole, -2.0 * PI * mid).is_ok() {
                    y = mid;
                } else {
                    bad = mid;
                }
            }
        }
        Ok(-2.0 * PI * y)
    }

    /// Samples `h_0^j` or `h_inf^j` and fits its jet.
    pub fn horn_map(&self, j: i64, pole: Pole) -> Result<HornMapSample, NumericError> {
        let mut ln_r = self.ln_radius(j, pole)?;
        let g = self.grid;
        for _ in 0..6 {
            let mut pts = Vec::new();
            let mut ok = true;
            for c in 0..g.circles {
                let frac = if g.circles > 1 { c as f64 / (g.circles - 1) as f64 } else { 0.0 };
                let rad = ln_r + g.inner.ln() + frac * (g.outer / g.inner).ln();
                match self.circle(j, pole, rad) {
                    Ok(v) => pts.extend(v),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
            if ok {
                return Ok(fit(j, pole, ln_r, &pts, g.degree));
            }
            ln_r -= PI;
        }
        Err(NumericError::NoConvergence(format!("sampling of h_{}^{} failed inside the estimated radius", pole.symbol(), j)))
    }
}

/// Least-squares jet of `q(tau) = sum_k c_k tau^(k-1)`, `tau = t/R`.
fn fit(j: i64, pole: Pole, ln_r: f64, pts: &[(Complex64, Complex64)], degree: usize) -> HornMapSample {
    let n = pts.len();
    let taus: Vec<Complex64> = pts.iter().map(|(lt, _)| (lt - ln_r).exp()).collect();
    let qs: Vec<Complex64> = pts.iter().map(|(_, lq)| lq.exp()).collect();
    let a = DMatrix::from_fn(n, degree, |r, c| taus[r].powu(c as u32));
    let b = DVector::from_column_slice(&qs);
    let sol = a.clone().svd(true, true).solve(&b, 1e-14).expect("svd solve");
    let coeffs: Vec<Complex64> = sol.iter().copied().collect();
    let fitted = &a * &sol;
    let fit_residual = (0..n).map(|r| ((fitted[r] - b[r]) / b[r]).norm()).fold(0.0, f64::max);
    let c1 = coeffs[0];
    let linear_deviation = qs.iter().map(|q| (q / c1 - 1.0).norm()).fold(0.0, f64::max);
    let samples = pts
        .iter()
        .map(|(lt, lq)| HornPoint { ln_t: c2(*lt), ln_q: c2(*lq), t: c2(lt.exp()), value: c2((lt + lq).exp()) })
        .collect();
    HornMapSample { j, pole, ln_radius: ln_r, samples, fitted_coeffs: coeffs.into_iter().map(c2).collect(), linear_deviation, fit_residual }
}

/// `h_0^j` or `h_inf^j` of `g` with the default Fatou tolerance.
pub fn horn_map(g: &NumericGerm, j: i64, pole: Pole, grid: HornGrid) -> Result<HornMapSample, Error> {
    let levels = match pole {
        Pole::Zero => j..=j,
        Pole::Infinity => (j + 1)..=j.max(j + 1),
    };
    let ctx = HornContext::new(g, levels.start().min(&j).to_owned()..=j, grid, 1e-11)?;
    let _ = levels;
    Ok(ctx.horn_map(j, pole)?)
}

/// Horn maps at both poles for every level of `levels`.
pub fn compute_moduli(g: &NumericGerm, levels: RangeInclusive<i64>, grid: HornGrid) -> Result<Moduli, Error> {
    let inv = germ_invariants(&g.definition)?;
    let ctx = HornContext::new(g, levels.clone(), grid, 1e-11)?;
    let mut maps = Vec::new();
    for j in levels {
        for pole in [Pole::Zero, Pole::Infinity] {
            maps.push(ctx.horn_map(j, pole)?);
        }
    }
    Ok(Moduli { germ: g.definition.name.clone(), invariants: (&inv).into(), real: is_real_germ(&g.definition), maps })
}

/// Declared realness confirmed on the formal expansion.
pub fn is_real_germ(def: &GermDefinition) -> bool {
    def.real_coefficients && def.series(TruncationBudget::new(def.leading.alpha + qi(2), 4)).is_ok_and(|s| s.is_real())
}

/// Result of [`symmetry_check`].
#[derive(Clone, Debug, Serialize)]
pub struct SymmetryReport {
    /// `(j, max deviation)` for every level with both maps available.
    pub per_level: Vec<(i64, f64)>,
    pub max_deviation: f64,
    pub pass: bool,
}

/// Checks `(h_0^(1-j))^-1(t) = conj(h_inf^j(conj t))`, in the equivalent
/// form `h_0^(1-j)(conj h_inf^j(s)) = conj s` over the samples `s` of
/// `h_inf^j`, with `h_0^(1-j)` taken from its fitted jet. The deviation is
/// relative: `|h_0^(1-j)(conj h_inf^j(s)) / conj s - 1|`.
pub fn symmetry_check(moduli: &Moduli, tol: f64) -> Result<SymmetryReport, NumericError> {
    if !moduli.real {
        return Err(NumericError::Precondition("symmetry needs a germ with real coefficients".into()));
    }
    let mut per_level = Vec::new();
    for hinf in moduli.maps.iter().filter(|h| h.pole == Pole::Infinity) {
        let Some(h0) = moduli.get(1 - hinf.j, Pole::Zero) else { continue };
        let dev = hinf
            .samples
            .iter()
            .map(|s| {
                let ls = from2(s.ln_t);
                let ly = (ls + from2(s.ln_q)).conj();
                (h0.jet_ln(ly) - ls.conj()).exp() - 1.0
            })
            .map(|d| d.norm())
            .fold(0.0, f64::max);
        per_level.push((hinf.j, dev));
    }
    if per_level.is_empty() {
        return Err(NumericError::Precondition("no level has both h_inf^j and h_0^(1-j)".into()));
    }
    let max_deviation = per_level.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok(SymmetryReport { per_level, max_deviation, pass: max_deviation < tol })
}

/// Verdict of [`compare_moduli`].
#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub conjugate: bool,
    pub reason: String,
    /// `(i, a_i)` and `(i, b_i)` of the identification.
    pub a: Vec<(i64, [f64; 2])>,
    pub b: Vec<(i64, [f64; 2])>,
    pub residual: f64,
}

/// Compares two moduli up to the rescalings
/// `h_0^i(t) = a_(i-1) k_0^i(b_i t)` and `h_inf^i(t) = b_i k_inf^i(a_i t)`.
///
/// The linear coefficients fix the products `a_(i-1) b_i` and `a_i b_i`,
/// which leaves the family `(a_i s, b_i / s)`. That family is not a
/// symmetry of nonlinear maps, so `s` is pinned by the second-order
/// coefficient of the most nonlinear map (`c_2 / c_1` scales by the inner
/// scalar), or by `b_0 = 1` when every map is linear. The residual is the
/// largest mismatch of the higher jet coefficients, compared on a common
/// disc and relative to the linear coefficient.
pub fn compare_moduli(f: &Moduli, g: &Moduli, tol: f64) -> Comparison {
    let (fi, gi) = (&f.invariants, &g.invariants);
    if fi != gi {
        let what = if fi.alpha != gi.alpha {
            "alpha differs"
        } else if fi.m != gi.m {
            "m differs"
        } else {
            "rho differs"
        };
        return Comparison { conjugate: false, reason: format!("formal class ({what})"), a: vec![], b: vec![], residual: f64::INFINITY };
    }
    let levels: Vec<i64> = f
        .maps
        .iter()
        .filter(|h| h.pole == Pole::Infinity && f.get(h.j, Pole::Zero).is_some() && g.get(h.j, Pole::Zero).is_some() && g.get(h.j, Pole::Infinity).is_some())
        .map(|h| h.j)
        .collect();
    if !levels.contains(&0) {
        return Comparison { conjugate: false, reason: "level window must contain 0".into(), a: vec![], b: vec![], residual: f64::INFINITY };
    }
    let ratio = |j: i64, pole: Pole| f.get(j, pole).unwrap().coeff(1) / g.get(j, pole).unwrap().coeff(1);
    let mut a = BTreeMap::new();
    let mut b = BTreeMap::new();
    b.insert(0, Complex64::new(1.0, 0.0));
    a.insert(0, ratio(0, Pole::Infinity));
    let (lo, hi) = (*levels.iter().min().unwrap(), *levels.iter().max().unwrap());
    for i in 1..=hi {
        let bi = ratio(i, Pole::Zero) / a[&(i - 1)];
        b.insert(i, bi);
        a.insert(i, ratio(i, Pole::Infinity) / bi);
    }
    for i in (lo..=0).rev() {
        let am = ratio(i, Pole::Zero) / b[&i];
        a.insert(i - 1, am);
        if i > lo {
            b.insert(i - 1, ratio(i - 1, Pole::Infinity) / am);
        }
    }
    // pin the gauge on the map with the largest relative c_2
    let mut best: Option<(f64, i64, Pole, Complex64)> = None;
    for &i in &levels {
        for pole in [Pole::Zero, Pole::Infinity] {
            let (h, k) = (f.get(i, pole).unwrap(), g.get(i, pole).unwrap());
            if h.fitted_coeffs.len() < 2 || k.fitted_coeffs.len() < 2 {
                continue;
            }
            let kh = h.coeff(2) / h.coeff(1);
            let kk = k.coeff(2) / k.coeff(1);
            let weight = kh.norm().min(kk.norm());
            if weight > 1e-6 && best.is_none_or(|x| weight > x.0) {
                let inner = (kh * (-h.ln_radius).exp()) / (kk * (-k.ln_radius).exp());
                best = Some((weight, i, pole, inner));
            }
        }
    }
    if let Some((_, i, pole, inner)) = best {
        let s = match pole {
            Pole::Zero => b[&i] / inner,
            Pole::Infinity => inner / a[&i],
        };
        a.values_mut().for_each(|v| *v *= s);
        b.values_mut().for_each(|v| *v /= s);
    }
    let mut residual = 0.0f64;
    for &i in &levels {
        for pole in [Pole::Zero, Pole::Infinity] {
            let (s_out, s_in) = match pole {
                Pole::Zero => (a[&(i - 1)], b[&i]),
                Pole::Infinity => (b[&i], a[&i]),
            };
            residual = residual.max(jet_mismatch(f.get(i, pole).unwrap(), g.get(i, pole).unwrap(), s_out, s_in));
        }
    }
    let conjugate = residual < tol;
    let reason = if conjugate { "horn maps agree up to rescaling".into() } else { format!("horn maps differ (residual {residual:.3e})") };
    Comparison {
        conjugate,
        reason,
        a: a.into_iter().map(|(i, v)| (i, c2(v))).collect(),
        b: b.into_iter().map(|(i, v)| (i, c2(v))).collect(),
        residual,
    }
}

/// `max_k>=2 |c_k s^(k-1) - a b^k d_k u^(k-1)| / |c_1|` for `h(t) = a k(b t)`
/// on the common disc `|t| < rc`, with `s = rc/R_h` and `u = rc/R_k`.
fn jet_mismatch(h: &HornMapSample, k: &HornMapSample, a: Complex64, b: Complex64) -> f64 {
    let ln_rc = h.ln_radius.min(k.ln_radius - b.norm().ln());
    let s = (ln_rc - h.ln_radius).exp();
    let u = (ln_rc - k.ln_radius).exp();
    let n = h.fitted_coeffs.len().min(k.fitted_coeffs.len());
    let c1 = h.coeff(1).norm();
    (2..=n)
        .map(|m| {
            let lhs = h.coeff(m) * s.powi(m as i32 - 1);
            let rhs = a * b.powu(m as u32) * k.coeff(m) * u.powi(m as i32 - 1);
            (lhs - rhs).norm() / c1
        })
        .fold(0.0, f64::max)
}

/// Constants of `R_j >= K1 exp(-K exp(C sqrt|j|))` fitted to sampled radii.
#[derive(Clone, Debug, Serialize)]
pub struct RadiiFit {
    /// `(j, ln R_j)`, the smaller radius of the two poles.
    pub ln_radii: Vec<(i64, f64)>,
    pub ln_k1: f64,
    pub k: f64,
    pub c: f64,
    pub holds: bool,
}

/// Fits `K1 > max R_j`, `C` by least squares of `ln(ln K1 - ln R_j)`
/// against `sqrt|j|`, then the smallest `K` for which the bound holds.
pub fn fit_radii(moduli: &Moduli) -> RadiiFit {
    let mut by_level: BTreeMap<i64, f64> = BTreeMap::new();
    for h in &moduli.maps {
        let e = by_level.entry(h.j).or_insert(f64::INFINITY);
        *e = e.min(h.ln_radius);
    }
    let ln_radii: Vec<(i64, f64)> = by_level.into_iter().collect();
    let finite = !ln_radii.is_empty() && ln_radii.iter().all(|(_, r)| r.is_finite());
    let ln_k1 = ln_radii.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let pts: Vec<(f64, f64)> = ln_radii.iter().map(|(j, r)| ((*j as f64).abs().sqrt(), (ln_k1 - r).ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let c = if sxx > 0.0 { (sxy / sxx).max(1e-3) } else { 1e-3 };
    let k = ln_radii.iter().map(|(j, r)| (ln_k1 - r) / (c * (*j as f64).abs().sqrt()).exp()).fold(0.0, f64::max);
    let holds = finite && ln_radii.iter().all(|(j, r)| *r >= ln_k1 - k * (c * (*j as f64).abs().sqrt()).exp() - 1e-9);
    RadiiFit { ln_radii, ln_k1, k, c, holds }
}

/// Conjugates by `z = u^(1/(alpha-1))` so that the result has `alpha = 2`
/// and the same `m`; the leading coefficient becomes `a (alpha-1)^(m+1)`.
/// The constant prefactor of the normalizing change is not applied, since
/// it is irrational for `m != 0`; reduction to normal form absorbs it.
pub fn rescale_to_alpha2(def: &GermDefinition) -> Result<GermDefinition, Error> {
    let lead = &def.leading;
    if lead.alpha == qi(2) {
        return Ok(def.clone());
    }
    let d = lead.alpha - Q::one();
    let p = d.recip();
    let dbig = big(d);
    let backend = match &def.backend {
        Backend::Series(f) => Backend::Series(rescale_series(f, d)?),
        Backend::Flow { xi, time, .. } => {
            let sub = substitute_chart(xi, d);
            let e = Expr::Mul(Box::new(Expr::Num(dbig.clone())), Box::new(Expr::Mul(Box::new(Expr::Var(crate::germ::Var::Z)), Box::new(Expr::Div(Box::new(sub), Box::new(zpow(p)))))));
            Backend::Flow { text: format!("{e}"), xi: e, time: *time }
        }
        Backend::Expression { expr, .. } => {
            let sub = substitute_chart(expr, d);
            let ratio = Expr::Div(Box::new(sub), Box::new(zpow(p)));
            let e = Expr::Mul(Box::new(Expr::Var(crate::germ::Var::Z)), Box::new(Expr::Pow(Box::new(ratio), Box::new(Expr::Num(dbig.clone())))));
            Backend::Expression { text: format!("{e}"), expr: e }
        }
    };
    let a = lead.a.clone() * rat_pow(&dbig, lead.m + 1).expect("nonzero");
    let out = GermDefinition {
        name: format!("{}_rescaled", def.name),
        backend,
        leading: Leading { a, alpha: qi(2), m: lead.m },
        generators: crate::transseries::Basis::integer(),
        domain_c: def.domain_c * q_to_f64(d),
        domain_r: def.domain_r * q_to_f64(d),
        real_coefficients: def.real_coefficients,
    };
    Ok(out)
}

fn zpow(p: Q) -> Expr {
    Expr::Pow(Box::new(Expr::Var(crate::germ::Var::Z)), Box::new(Expr::Num(big(p))))
}

/// `z -> z^(1/d)`, `l -> d l`, `l2 -> 1/(1/l2 - log d)`.
fn substitute_chart(e: &Expr, d: Q) -> Expr {
    use crate::germ::Var;
    let dn = Expr::Num(big(d));
    let z = zpow(d.recip());
    let l = Expr::Mul(Box::new(dn.clone()), Box::new(Expr::Var(Var::L)));
    let one = Expr::Num(BigRational::one());
    let inv_l2 = Expr::Div(Box::new(one.clone()), Box::new(Expr::Var(Var::L2)));
    let l2 = Expr::Div(Box::new(one), Box::new(Expr::Sub(Box::new(inv_l2), Box::new(Expr::Log(Box::new(dn))))));
    e.substitute(&z, &l, &l2)
}

/// Series form of [`rescale_to_alpha2`]: `g(u) = u (1 + X(u^(1/d)))^d`
/// where `f(z) = z (1 + X(z))`.
fn rescale_series(f: &Transseries, d: Q) -> Result<Transseries, Error> {
    let p = d.recip();
    let b = f.budget();
    let zo = (b.z_order - Q::one()) * p + Q::one();
    let budget = TruncationBudget::new(zo, b.l_depth);
    let mut ms = Vec::new();
    for m in f.monomials() {
        if m.l2exp != 0 {
            return Err(FormalError::Malformed("rescaling of l2 terms is not supported".into()).into());
        }
        let scale = rat_pow(&big(d), m.lexp).expect("nonzero");
        ms.push(Monomial { coeff: m.coeff * c_real(scale), zexp: (m.zexp - Q::one()) * p, lexp: m.lexp, l2exp: 0 });
    }
    let one = Transseries::one(budget);
    let x = Transseries::from_monomials(ms, budget).sub(&one);
    let mut term = one.clone();
    let mut acc = one;
    let mut k = 0i64;
    while !term.is_zero() {
        let coef = (d - Q::from_integer(k)) / Q::from_integer(k + 1);
        term = term.mul(&x).scale_q(coef);
        acc = acc.add(&term);
        k += 1;
        if k > 10_000 {
            return Err(FormalError::NoConvergence("binomial series".into()).into());
        }
    }
    let out = acc.shift(Q::one(), 0);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::q;
    use crate::germ::parse_germ_str;

    fn germ(text: &str) -> NumericGerm {
        NumericGerm::new(&parse_germ_str(text).unwrap()).unwrap()
    }

    fn quadratic() -> NumericGerm {
        germ("name=q\nbackend=series\nbody=z - z^2\nalpha=2\nm=0\na=1\nC=0\nR=0.5\nreal=true\n")
    }

    #[test]
    fn model_horn_maps_are_linear() {
        let g = germ("name=f1\nbackend=flow\nbody=-z^2/(1-z)\nalpha=2\nm=0\na=1\nC=0\nR=0.5\nreal=true\n");
        let ctx = HornContext::new(&g, 0..=0, HornGrid::default(), 1e-11).unwrap();
        for pole in [Pole::Zero, Pole::Infinity] {
            let h = ctx.horn_map(0, pole).unwrap();
            assert!(h.linear_deviation < 1e-6, "{:?}", h.linear_deviation);
            assert!((h.coeff(1) - 1.0).norm() < 1e-6);
        }
    }

    #[test]
    fn quadratic_horn_maps_are_jets_vanishing_at_zero() {
        let g = quadratic();
        let ctx = HornContext::new(&g, 0..=1, HornGrid::default(), 1e-11).unwrap();
        let h = ctx.horn_map(1, Pole::Zero).unwrap();
        assert!(h.coeff(1).norm() > 1e-3);
        assert!(h.fit_residual < 1e-8, "{}", h.fit_residual);
        assert!(h.ln_radius < -5.0);
        let s = &h.samples[5];
        assert!((h.jet_ln(from2(s.ln_t)) - from2(s.ln_t) - from2(s.ln_q)).norm() < 1e-8);
    }

    #[test]
    fn changed_constants_act_by_rescaling() {
        let g = quadratic();
        let mut ctx = HornContext::new(&g, 0..=1, HornGrid::default(), 1e-11).unwrap();
        let base: Vec<_> = [(0, Pole::Zero), (0, Pole::Infinity), (1, Pole::Zero), (1, Pole::Infinity)].iter().map(|(j, p)| ctx.horn_map(*j, *p).unwrap()).collect();
        ctx.set_constant(0, PetalSign::Repelling, Complex64::new(0.1, 0.05));
        ctx.set_constant(0, PetalSign::Attracting, Complex64::new(-0.2, 0.0));
        let moved: Vec<_> = [(0, Pole::Zero), (0, Pole::Infinity), (1, Pole::Zero), (1, Pole::Infinity)].iter().map(|(j, p)| ctx.horn_map(*j, *p).unwrap()).collect();
        let inv = InvariantsText { alpha: "2".into(), m: 0, rho: "0".into() };
        let f = Moduli { germ: "a".into(), invariants: inv.clone(), real: true, maps: base };
        let h = Moduli { germ: "b".into(), invariants: inv, real: true, maps: moved };
        let cmp = compare_moduli(&f, &h, 1e-6);
        assert!(cmp.conjugate, "{cmp:?}");
        assert!((from2(cmp.a[1].1) - 1.0).norm() > 1e-3);
        let same = compare_moduli(&f, &f, 1e-6);
        assert!(same.conjugate && same.residual < 1e-12);
        assert!(same.a.iter().chain(same.b.iter()).all(|(_, v)| (from2(*v) - 1.0).norm() < 1e-12));
    }

    #[test]
    fn formal_class_mismatch() {
        let mk = |rho: &str| Moduli { germ: "x".into(), invariants: InvariantsText { alpha: "2".into(), m: 0, rho: rho.into() }, real: true, maps: vec![] };
        let c = compare_moduli(&mk("1"), &mk("1/2"), 1e-6);
        assert!(!c.conjugate);
        assert_eq!(c.reason, "formal class (rho differs)");
    }

    #[test]
    fn symmetry_needs_real_germ() {
        let m = Moduli { germ: "x".into(), invariants: InvariantsText { alpha: "2".into(), m: 0, rho: "0".into() }, real: false, maps: vec![] };
        assert!(matches!(symmetry_check(&m, 1e-6), Err(NumericError::Precondition(_))));
        let def = parse_germ_str("name=c\nbackend=series\nbody=z - (1+i)*z^2\nalpha=2\nm=0\na=1+i\nC=0\nR=1\n");
        if let Ok(def) = def {
            assert!(!is_real_germ(&def));
        }
    }

    #[test]
    fn rescaling_examples() {
        let def = parse_germ_str("name=c\nbackend=series\nbody=z - z^3\nalpha=3\nm=0\na=1\nC=0\nR=1\n").unwrap();
        let r = rescale_to_alpha2(&def).unwrap();
        assert_eq!(r.leading.alpha, qi(2));
        assert_eq!(r.leading.a, big(qi(2)));
        let Backend::Series(s) = &r.backend else { panic!() };
        assert_eq!(s.coeff(qi(2), 0, 0), Some(crate::coeff::c_int(-2)));
        assert_eq!(s.coeff(qi(3), 0, 0), Some(crate::coeff::c_int(1)));
        let inv = reduce_to_normal_form(&s.with_budget(TruncationBudget::new(qi(4), 4))).unwrap().invariants;
        assert_eq!((inv.alpha, inv.m), (qi(2), 0));
        // a (alpha - 1)^(m + 1) = 1 keeps the reduction free of log a
        let def = parse_germ_str("name=c\nbackend=series\nbody=z - 1/4*z^3*l\nalpha=3\nm=1\na=1/4\nC=0\nR=1\n").unwrap();
        let r = rescale_to_alpha2(&def).unwrap();
        assert_eq!(r.leading.a, big(qi(1)));
        let Backend::Series(s) = &r.backend else { panic!() };
        let inv = reduce_to_normal_form(&s.with_budget(TruncationBudget::new(qi(4), 6))).unwrap().invariants;
        assert_eq!((inv.alpha, inv.m), (qi(2), 1));
        let same = parse_germ_str("name=c\nbackend=series\nbody=z - z^2\nalpha=2\nm=0\na=1\n").unwrap();
        assert_eq!(rescale_to_alpha2(&same).unwrap().name, "c");
        let _ = q(1, 2);
    }

    #[test]
    fn rescaled_backends_agree() {
        // the same germ z - z^3 as series, expression and flow-free check
        let e = parse_germ_str("name=e\nbackend=expression\nbody=z - z^3\nalpha=3\nm=0\na=1\nC=0\nR=1\n").unwrap();
        let s = parse_germ_str("name=s\nbackend=series\nbody=z - z^3\nalpha=3\nm=0\na=1\nC=0\nR=1\n").unwrap();
        let ge = NumericGerm::new(&rescale_to_alpha2(&e).unwrap()).unwrap();
        let gs = NumericGerm::new(&rescale_to_alpha2(&s).unwrap()).unwrap();
        let p = crate::numeric::SurfacePoint::from_polar(0.05, 0.4);
        assert!((ge.step(&p).unwrap().zeta - gs.step(&p).unwrap().zeta).norm() < 1e-12);
    }

    #[test]
    fn radii_fit_is_a_lower_bound() {
        let mk = |j: i64, r: f64| HornMapSample { j, pole: Pole::Zero, ln_radius: r, samples: vec![], fitted_coeffs: vec![[1.0, 0.0]], linear_deviation: 0.0, fit_residual: 0.0 };
        let m = Moduli { germ: "x".into(), invariants: InvariantsText { alpha: "2".into(), m: 0, rho: "0".into() }, real: true, maps: (-4..=4).map(|j| mk(j, -10.0 - 3.0 * (j as f64).abs())).collect() };
        let fit = fit_radii(&m);
        assert!(fit.holds && fit.c > 0.0 && fit.k > 0.0);
    }
}
