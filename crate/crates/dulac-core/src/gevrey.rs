//! Log-Gevrey diagnostics: order estimates from coefficients, remainder
//! bounds, flat-function decay and numeric integral sums.
//!
//! A series `sum a_k l^k` is log-Gevrey of order `m` when
//! `|a_k| <= C m^-k (log k)^k e^(-k / log k)`. Coefficients are handled as
//! `(ln |a_k|, arg a_k)` so that factorial growth does not overflow.
//!
//! `l`-cusps are sampled as `l = 1/zeta` with `zeta = X + i phi`,
//! `X in [x_min, x_max]` and `|phi| <= opening / 2`, the image of a sector
//! of the given opening in `z`. Checks run over the nested subcusps of
//! half-openings `opening/2`, `opening/4` and `opening/8`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::NumericError;

/// Default margin in order units.
pub const DELTA: f64 = 0.3;

/// Coefficients `a_k` of `l^(offset + i)`, stored as `(ln |a|, arg a)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoefficientSequence {
    pub offset: i64,
    pub log_abs: Vec<f64>,
    pub arg: Vec<f64>,
}

impl CoefficientSequence {
    pub fn from_complex(offset: i64, a: &[Complex64]) -> Self {
        CoefficientSequence { offset, log_abs: a.iter().map(|c| c.norm().ln()).collect(), arg: a.iter().map(|c| c.arg()).collect() }
    }

    /// Positive coefficients given by `ln a_k`.
    pub fn from_log(offset: i64, log_abs: Vec<f64>) -> Self {
        let arg = vec![0.0; log_abs.len()];
        CoefficientSequence { offset, log_abs, arg }
    }

    /// `a_k = (k!)^s p^-k (log k)^(k t) e^(-k u / log k)` for `k` in
    /// `0..=k_max`, with the logarithmic factors dropped for `k < 2`.
    pub fn synthetic(k_max: usize, p: f64, fact: f64, loglog: f64) -> Self {
        let mut lf = 0.0;
        let log_abs = (0..=k_max)
            .map(|k| {
                if k > 0 {
                    lf += (k as f64).ln();
                }
                let kf = k as f64;
                let mut v = fact * lf - kf * p.ln();
                if k >= 2 {
                    let lk = kf.ln();
                    v += loglog * (kf * lk.ln() - kf / lk);
                }
                v
            })
            .collect();
        Self::from_log(0, log_abs)
    }

    pub fn len(&self) -> usize {
        self.log_abs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_abs.is_empty()
    }

    /// `(k, ln |a_k|)` for the nonzero entries.
    pub fn entries(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.log_abs.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(i, v)| (self.offset + i as i64, *v))
    }

    pub fn get(&self, k: i64) -> Complex64 {
        let i = k - self.offset;
        if i < 0 || i as usize >= self.len() {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::from_polar(self.log_abs[i as usize].exp(), self.arg[i as usize])
    }

    /// `sum_(k < n) a_k l^k`.
    pub fn partial_sum(&self, n: i64, l: Complex64) -> Complex64 {
        (self.offset..n.min(self.offset + self.len() as i64)).map(|k| self.get(k) * l.powi(k as i32)).sum()
    }

    /// Coefficients of `a * b` (Cauchy product).
    pub fn product(&self, other: &Self) -> Self {
        let n = self.len().min(other.len());
        let a: Vec<Complex64> = (0..n).map(|i| self.get(self.offset + i as i64)).collect();
        let b: Vec<Complex64> = (0..n).map(|i| other.get(other.offset + i as i64)).collect();
        let c: Vec<Complex64> = (0..n).map(|k| (0..=k).map(|i| a[i] * b[k - i]).sum()).collect();
        Self::from_complex(self.offset + other.offset, &c)
    }

    /// Coefficients of the derivative in `l`.
    pub fn derivative(&self) -> Self {
        let mut log_abs = Vec::new();
        let mut arg = Vec::new();
        for i in 0..self.len() {
            let k = self.offset + i as i64;
            if k == 0 {
                continue;
            }
            log_abs.push(self.log_abs[i] + (k.abs() as f64).ln());
            arg.push(self.arg[i] + if k < 0 { std::f64::consts::PI } else { 0.0 });
        }
        let offset = if self.offset == 0 { 0 } else { self.offset - 1 };
        CoefficientSequence { offset, log_abs, arg }
    }
}

/// Result of [`log_gevrey_order_estimate`].
#[derive(Clone, Debug, Serialize)]
pub struct GevreyEstimate {
    pub m_hat: f64,
    /// `(k, m_hat_k)` for `k >= 2` with `a_k != 0`.
    pub profile: Vec<(i64, f64)>,
}

impl GevreyEstimate {
    /// Whether the estimate supports order `m` within the default margin.
    pub fn supports(&self, m: f64) -> bool {
        self.m_hat >= m - DELTA
    }

    /// Profile as CSV with columns `k, m_hat_k`.
    pub fn profile_csv(&self) -> String {
        let mut out = String::from("k,m_hat_k\n");
        for (k, v) in &self.profile {
            out.push_str(&format!("{k},{v:.10e}\n"));
        }
        out
    }
}

/// Per-index estimate `m_k = log k e^(-1/log k) |a_k|^(-1/k)` and its robust
/// lower limit: the median of the lowest tenth of the tail half.
pub fn log_gevrey_order_estimate(c: &CoefficientSequence) -> Result<GevreyEstimate, NumericError> {
    let profile: Vec<(i64, f64)> = c
        .entries()
        .filter(|(k, _)| *k >= 2)
        .map(|(k, la)| {
            let lk = (k as f64).ln();
            (k, (lk.ln() - 1.0 / lk - la / k as f64).exp())
        })
        .collect();
    if profile.len() < 16 {
        return Err(NumericError::Precondition(format!("need at least 16 nonzero coefficients, got {}", profile.len())));
    }
    let mut tail: Vec<f64> = profile[profile.len() / 2..].iter().map(|x| x.1).collect();
    tail.sort_by(|a, b| a.total_cmp(b));
    let dec = (tail.len() / 10).max(1);
    let low = &tail[..dec];
    let m_hat = low[low.len() / 2];
    Ok(GevreyEstimate { m_hat, profile })
}

/// An `l`-cusp from a sector of opening `opening` in `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Cusp {
    pub opening: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl Cusp {
    pub fn new(opening: f64, x_min: f64, x_max: f64) -> Self {
        Cusp { opening, x_min, x_max }
    }

    /// Sample points `l` of the nested subcusp `level` (0, 1 or 2): three
    /// rays and `n` values of `X` per ray.
    pub fn samples(&self, level: u32, n: usize) -> Vec<Complex64> {
        let half = self.opening / 2f64.powi(level as i32 + 1);
        let mut out = Vec::with_capacity(3 * n);
        for phi in [-half, 0.0, half] {
            for i in 0..n {
                let x = self.x_min + (self.x_max - self.x_min) * i as f64 / (n.max(2) - 1) as f64;
                out.push(Complex64::new(x, phi).inv());
            }
        }
        out
    }
}

/// Result of [`remainder_bound_check`].
#[derive(Clone, Debug, Serialize)]
pub struct RemainderReport {
    pub pass: bool,
    /// `(n, ln sup ratio)`; `-inf` where the remainder is below noise.
    pub log_ratios: Vec<(i64, f64)>,
    pub worst_ratio: f64,
}

/// Samples `|F - P_n| / (m^-n (log n)^n e^(-n/log n) |l|^n)` over the
/// nested subcusps for `n in [2, n_max]`. Passes when the ratios stay
/// bounded: at every sample point the largest log ratio over the upper
/// half of `n` exceeds the largest over the lower half by less than `ln 10`.
pub fn remainder_bound_check(
    f: &dyn Fn(Complex64) -> Complex64,
    c: &CoefficientSequence,
    m: f64,
    cusp: &Cusp,
    n_max: i64,
) -> Result<RemainderReport, NumericError> {
    let pts: Vec<Complex64> = (0..3).flat_map(|lv| cusp.samples(lv, 12)).collect();
    let vals: Vec<Complex64> = pts.iter().map(|l| f(*l)).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(NumericError::OutsideDomain("F is not finite on the cusp".into()));
    }
    let half = n_max / 2;
    let mut per_point = vec![(f64::NEG_INFINITY, f64::NEG_INFINITY); pts.len()];
    let mut log_ratios = Vec::new();
    for n in 2..=n_max {
        let lk = (n as f64).ln();
        let mut worst = f64::NEG_INFINITY;
        for (i, (l, v)) in pts.iter().zip(&vals).enumerate() {
            let p = c.partial_sum(n, *l);
            let scale: f64 = v.norm() + (c.offset..n.min(c.offset + c.len() as i64)).map(|k| (c.get(k) * l.powi(k as i32)).norm()).sum::<f64>();
            let r = (v - p).norm();
            if r <= 1e3 * f64::EPSILON * scale {
                continue;
            }
            let lb = -(n as f64) * m.ln() + n as f64 * lk.ln() - n as f64 / lk + n as f64 * l.norm().ln();
            let lr = r.ln() - lb;
            worst = worst.max(lr);
            let slot = if n < half { &mut per_point[i].0 } else { &mut per_point[i].1 };
            *slot = slot.max(lr);
        }
        log_ratios.push((n, worst));
    }
    let pass = per_point.iter().all(|(lo, hi)| *hi == f64::NEG_INFINITY || *hi <= lo.max(0.0) + 10f64.ln());
    let worst_ratio = log_ratios.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max).exp();
    Ok(RemainderReport { pass, log_ratios, worst_ratio })
}

/// Result of [`flat_decay_check`].
#[derive(Clone, Debug, Serialize)]
pub struct FlatReport {
    pub pass: bool,
    /// Fitted slope of `ln ln(1/|F|)` against `1/|l|`, per ray.
    pub slopes: Vec<f64>,
    pub vacuous: bool,
}

/// Fits `ln ln(1/|F|)` against `1/|l|` along the rays of the nested
/// subcusps; passes when every slope is at least `m - delta`. Takes
/// `ln F`, so that doubly exponential decay stays representable.
pub fn flat_decay_check(log_f: &dyn Fn(Complex64) -> Complex64, m: f64, cusp: &Cusp, delta: f64) -> Result<FlatReport, NumericError> {
    let n = 24;
    let mut slopes = Vec::new();
    let mut all_zero = true;
    for lv in 0..3 {
        let pts = cusp.samples(lv, n);
        for ray in pts.chunks(n) {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for l in ray {
                let lf = log_f(*l);
                if lf.re == f64::NEG_INFINITY {
                    continue;
                }
                all_zero = false;
                if !(lf.re < 0.0) {
                    return Err(NumericError::Precondition(format!("F is not flat: |F| = {:.3e} at l = {l:.4}", lf.re.exp())));
                }
                xs.push(1.0 / l.norm());
                ys.push((-lf.re).ln());
            }
            if xs.len() >= 2 {
                slopes.push(slope(&xs, &ys));
            }
        }
    }
    if all_zero {
        return Ok(FlatReport { pass: true, slopes, vacuous: true });
    }
    let pass = slopes.iter().all(|s| *s >= m - delta);
    Ok(FlatReport { pass, slopes, vacuous: false })
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// A function that passes [`flat_decay_check`] at order `m` on a cusp of
/// opening above `pi/m` must vanish; returns `false` (inconsistent data)
/// when some sample exceeds `1e-12`.
pub fn watson_consistent(log_f: &dyn Fn(Complex64) -> Complex64, m: f64, cusp: &Cusp) -> Result<bool, NumericError> {
    let rep = flat_decay_check(log_f, m, cusp, DELTA)?;
    if !rep.pass || cusp.opening <= std::f64::consts::PI / m {
        return Ok(true);
    }
    Ok((0..3).flat_map(|lv| cusp.samples(lv, 12)).all(|l| log_f(l).re <= (1e-12f64).ln()))
}

/// `F(l) = e^(alpha1/l) l^(-p1) * integral of e^(-alpha1/eta) eta^(2 p1 - 2) R(eta)`
/// along the segment from `base` (0 when `None`) to `l`, by adaptive
/// Simpson quadrature with the two exponentials combined.
pub fn numeric_integral_sum(
    r: &dyn Fn(Complex64) -> Complex64,
    alpha1: f64,
    p1: i64,
    base: Option<Complex64>,
    l: Complex64,
) -> Result<Complex64, NumericError> {
    let b = base.unwrap_or(Complex64::new(0.0, 0.0));
    for i in 1..=64 {
        let eta = b + (l - b) * (i as f64 / 64.0);
        if !(eta.re > 0.0) {
            return Err(NumericError::Precondition("integration path leaves the cusp".into()));
        }
    }
    let inv_l = l.inv();
    let integrand = |s: f64| -> Complex64 {
        let eta = b + (l - b) * s;
        if eta.norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let e = (alpha1 * (inv_l - eta.inv())).exp();
        let v = e * eta.powi((2 * p1 - 2) as i32) * r(eta) * (l - b);
        if v.is_finite() {
            v
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let total = simpson(&integrand, 0.0, 1.0, 1e-14, 60)?;
    Ok(total * l.powi(-p1 as i32))
}

fn simpson(f: &dyn Fn(f64) -> Complex64, a: f64, b: f64, tol: f64, depth: u32) -> Result<Complex64, NumericError> {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (fa + 4.0 * fm + fb) * ((b - a) / 6.0);
    let scale = whole.norm().max(1e-300);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, scale, depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec(
    f: &dyn Fn(f64) -> Complex64,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    scale: f64,
    depth: u32,
) -> Result<Complex64, NumericError> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (fa + 4.0 * flm + fm) * ((m - a) / 6.0);
    let right = (fm + 4.0 * frm + fb) * ((b - m) / 6.0);
    let err = (left + right - whole).norm();
    if err <= 15.0 * tol * scale || (b - a) < 1e-15 {
        return Ok(left + right + (left + right - whole) / 15.0);
    }
    if depth == 0 {
        return Err(NumericError::NoConvergence("quadrature did not converge".into()));
    }
    Ok(simpson_rec(f, a, m, fa, flm, fm, left, tol, scale, depth - 1)? + simpson_rec(f, m, b, fm, frm, fb, right, tol, scale, depth - 1)?)
}
