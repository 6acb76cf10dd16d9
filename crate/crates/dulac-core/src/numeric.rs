//! Germ evaluation on the Riemann surface of the logarithm.
//!
//! Points are stored in the chart `zeta = -log z`, so `Re zeta -> +inf`
//! means `z -> 0` and every branch decision is carried by `Im zeta`. A germ
//! step is written as `zeta' = zeta - log(1 + h)` with `h = f(z)/z - 1`,
//! which keeps the level of the image continuous with the level of the
//! argument.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::coeff::{q_to_f64, to_c64};
use crate::error::{Error, NumericError};
use crate::germ::{Backend, Expr, GermDefinition, Leading};
use crate::transseries::{Transseries, TruncationBudget};

/// `log(1 + h)` without cancellation for small `h`.
pub fn log1p(h: Complex64) -> Complex64 {
    let re = 0.5 * (2.0 * h.re + h.norm_sqr()).ln_1p();
    let im = h.im.atan2(1.0 + h.re);
    Complex64::new(re, im)
}

/// A point of the Riemann surface of the logarithm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfacePoint {
    pub zeta: Complex64,
}

impl SurfacePoint {
    pub fn new(zeta: Complex64) -> Self {
        SurfacePoint { zeta }
    }

    /// The point over `z` on level `level`.
    pub fn from_z(z: Complex64, level: i64) -> Self {
        let mut arg = z.arg();
        if arg >= PI {
            arg -= 2.0 * PI;
        }
        let arg = arg + 2.0 * PI * level as f64;
        SurfacePoint { zeta: Complex64::new(-z.norm().ln(), -arg) }
    }

    /// The point with `|z| = r` and continuous argument `arg`.
    pub fn from_polar(r: f64, arg: f64) -> Self {
        SurfacePoint { zeta: Complex64::new(-r.ln(), -arg) }
    }

    /// Value of `z` in the plane.
    pub fn z(&self) -> Complex64 {
        (-self.zeta).exp()
    }

    pub fn modulus(&self) -> f64 {
        (-self.zeta.re).exp()
    }

    /// Continuous argument of `z`.
    pub fn arg(&self) -> f64 {
        -self.zeta.im
    }

    /// Level `k` with `arg z` in `[(2k - 1) pi, (2k + 1) pi)`.
    pub fn level(&self) -> i64 {
        ((self.arg() + PI) / (2.0 * PI)).floor() as i64
    }

    /// `l = -1/log z`.
    pub fn l(&self) -> Complex64 {
        self.zeta.inv()
    }
}

/// Standard quadratic domain: `zeta = xi + C sqrt(xi + 1)` with `Re xi > R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub c: f64,
    pub r: f64,
}

impl Domain {
    /// The parameter `xi` of `zeta`, if the defining equation can be solved.
    pub fn xi(&self, zeta: Complex64) -> Option<Complex64> {
        if self.c == 0.0 {
            return Some(zeta);
        }
        let mut xi = zeta;
        for _ in 0..200 {
            let next = zeta - self.c * (xi + 1.0).sqrt();
            if (next - xi).norm() < 1e-14 * (1.0 + xi.norm()) {
                return Some(next);
            }
            xi = next;
        }
        None
    }

    pub fn contains(&self, p: &SurfacePoint) -> bool {
        self.xi(p.zeta).is_some_and(|xi| xi.re > self.r)
    }

    /// Boundary point of the domain with `Im xi = t`.
    pub fn boundary(&self, t: f64) -> SurfacePoint {
        let xi = Complex64::new(self.r, t);
        SurfacePoint::new(xi + self.c * (xi + 1.0).sqrt())
    }
}

/// A transseries compiled to floating point, evaluated in the `zeta` chart.
#[derive(Clone, Debug, Default)]
pub struct NumSeries {
    terms: Vec<(f64, i32, i32, Complex64)>,
}

impl NumSeries {
    pub fn new(t: &Transseries) -> Self {
        let terms = t.monomials().map(|m| (q_to_f64(m.zexp), m.lexp as i32, m.l2exp as i32, to_c64(&m.coeff))).collect();
        NumSeries { terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, zeta: Complex64) -> Complex64 {
        self.eval_d(zeta).0
    }

    /// Value and derivative in `zeta`.
    pub fn eval_d(&self, zeta: Complex64) -> (Complex64, Complex64) {
        let il = zeta.inv();
        let lz = zeta.ln();
        let ill = lz.inv();
        let mut v = Complex64::new(0.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for (b, k, n, c) in &self.terms {
            let mut t = *c * il.powi(*k) * ill.powi(*n);
            if *b != 0.0 {
                t *= (-zeta * *b).exp();
            }
            v += t;
            // d/dzeta of e^(-b zeta) zeta^-k (Log zeta)^-n
            d += t * (-*b - *k as f64 * il - *n as f64 * il * ill);
        }
        (v, d)
    }

    /// Magnitude of the highest-order kept term; a heuristic tail proxy.
    pub fn last_term(&self, zeta: Complex64) -> f64 {
        self.terms.last().map_or(0.0, |(b, k, n, c)| (*c * zeta.inv().powi(*k) * zeta.ln().inv().powi(*n) * (-zeta * *b).exp()).norm())
    }
}

/// Safety factor applied to the last-kept-term tail proxy.
pub const TAIL_SAFETY: f64 = 10.0;

#[derive(Clone, Debug)]
enum Evaluator {
    /// `h = f/z - 1` as a compiled series.
    Series(NumSeries),
    /// Flow of `xi d/dz` for time `time`.
    Flow { xi: Expr, time: f64 },
    Expression(Expr),
}

/// A germ ready for numeric evaluation.
#[derive(Clone, Debug)]
pub struct NumericGerm {
    pub definition: GermDefinition,
    pub tolerance: f64,
    pub domain: Domain,
    eval: Evaluator,
}

/// Default z-order of the series backend.
pub const SERIES_ORDER: i64 = 16;

impl NumericGerm {
    pub fn new(def: &GermDefinition) -> Result<Self, Error> {
        let eval = match &def.backend {
            Backend::Series(t) => {
                let budget = t.budget();
                let budget = TruncationBudget::new(budget.z_order.max(crate::coeff::qi(SERIES_ORDER)), budget.l_depth);
                let h = t.with_budget(budget).shift(-crate::coeff::qi(1), 0).sub(&Transseries::one(budget));
                Evaluator::Series(NumSeries::new(&h))
            }
            Backend::Flow { xi, time, .. } => Evaluator::Flow { xi: xi.clone(), time: q_to_f64(*time) },
            Backend::Expression { expr, .. } => Evaluator::Expression(expr.clone()),
        };
        Ok(NumericGerm { definition: def.clone(), tolerance: 1e-13, domain: Domain { c: def.domain_c, r: def.domain_r }, eval })
    }

    pub fn leading(&self) -> &Leading {
        &self.definition.leading
    }

    pub fn in_domain(&self, p: &SurfacePoint) -> bool {
        self.domain.contains(p)
    }

    fn check(&self, p: &SurfacePoint) -> Result<(), NumericError> {
        if self.in_domain(p) {
            Ok(())
        } else {
            Err(NumericError::OutsideDomain(format!("zeta = {:.6}{:+.6}i", p.zeta.re, p.zeta.im)))
        }
    }

    /// `f(z)/z - 1` at `p` (not available for flows).
    pub fn ratio(&self, p: &SurfacePoint) -> Option<Complex64> {
        match &self.eval {
            Evaluator::Series(h) => Some(h.eval(p.zeta)),
            Evaluator::Expression(e) => Some(e.eval(p.zeta) * p.zeta.exp() - 1.0),
            Evaluator::Flow { .. } => None,
        }
    }

    /// `zeta` of the image without the domain check.
    fn raw_step(&self, zeta: Complex64, sign: f64) -> Result<Complex64, NumericError> {
        match &self.eval {
            Evaluator::Flow { xi, time } => flow_zeta(xi, zeta, sign * time, self.tolerance),
            _ if sign < 0.0 => self.solve_inverse(zeta),
            _ => {
                let h = self.ratio(&SurfacePoint::new(zeta)).unwrap();
                if !h.is_finite() {
                    return Err(NumericError::OutsideDomain("germ value is not finite".into()));
                }
                Ok(zeta - log1p(h))
            }
        }
    }

    /// `F(zeta)` and `dF/dzeta` for the non-flow backends.
    fn step_d(&self, zeta: Complex64) -> (Complex64, Complex64) {
        match &self.eval {
            Evaluator::Series(h) => {
                let (v, d) = h.eval_d(zeta);
                (zeta - log1p(v), 1.0 - d / (1.0 + v))
            }
            _ => {
                let f = |x: Complex64| x - log1p(self.ratio(&SurfacePoint::new(x)).unwrap());
                let e = 1e-5 * (1.0 + zeta.norm());
                (f(zeta), (f(zeta + e) - f(zeta - e)) / (2.0 * e))
            }
        }
    }

    /// Newton solve of `F(q) = zeta`.
    fn solve_inverse(&self, zeta: Complex64) -> Result<Complex64, NumericError> {
        let mut q = 2.0 * zeta - self.step_d(zeta).0;
        for _ in 0..60 {
            let (v, d) = self.step_d(q);
            let dq = (v - zeta) / d;
            if !dq.is_finite() {
                break;
            }
            q -= dq;
            if dq.norm() <= 4.0 * f64::EPSILON * (1.0 + q.norm()) {
                return Ok(q);
            }
        }
        let (v, _) = self.step_d(q);
        if (v - zeta).norm() <= 1e-13 * (1.0 + zeta.norm()) {
            return Ok(q);
        }
        Err(NumericError::NoConvergence(format!("inverse step at zeta = {zeta:.6}")))
    }

    /// `f(p)`.
    pub fn step(&self, p: &SurfacePoint) -> Result<SurfacePoint, NumericError> {
        self.check(p)?;
        Ok(SurfacePoint::new(self.raw_step(p.zeta, 1.0)?))
    }

    /// `f^-1(p)`.
    pub fn inverse_step(&self, p: &SurfacePoint) -> Result<SurfacePoint, NumericError> {
        self.check(p)?;
        Ok(SurfacePoint::new(self.raw_step(p.zeta, -1.0)?))
    }

    /// `f(p)` (`forward`) or `f^-1(p)`.
    pub fn step_dir(&self, p: &SurfacePoint, forward: bool) -> Result<SurfacePoint, NumericError> {
        if forward {
            self.step(p)
        } else {
            self.inverse_step(p)
        }
    }

    /// The orbit `p, f(p), ..., f^n(p)` (or of `f^-1`); stops early when
    /// the orbit leaves the domain.
    pub fn orbit(&self, p: &SurfacePoint, n: usize, forward: bool) -> Vec<SurfacePoint> {
        let mut out = vec![*p];
        let mut cur = *p;
        for _ in 0..n {
            match self.step_dir(&cur, forward) {
                Ok(next) => {
                    out.push(next);
                    cur = next;
                }
                Err(_) => break,
            }
        }
        out
    }

    /// Heuristic error of one series step: last kept term times a safety
    /// factor.
    pub fn tail_estimate(&self, p: &SurfacePoint) -> f64 {
        match &self.eval {
            Evaluator::Series(h) => TAIL_SAFETY * h.last_term(p.zeta),
            _ => self.tolerance,
        }
    }
}

/// `f(p)`.
pub fn evaluate(g: &NumericGerm, p: &SurfacePoint) -> Result<SurfacePoint, NumericError> {
    g.step(p)
}

/// Time-`t` flow of `xi d/dz` in the `zeta` chart, where
/// `dzeta/dt = -xi(z)/z`. Integrates the displacement with an adaptive
/// Dormand-Prince 5(4) pair.
fn flow_zeta(xi: &Expr, zeta0: Complex64, t: f64, tol: f64) -> Result<Complex64, NumericError> {
    let rhs = |u: Complex64| {
        let zeta = zeta0 + u;
        -xi.eval(zeta) * zeta.exp()
    };
    let (a, b5, b4, c) = dp45_tableau();
    let dir = t.signum();
    let total = t.abs();
    let mut s = 0.0;
    let mut u = Complex64::new(0.0, 0.0);
    let mut h = total.min(0.25);
    let mut k = [Complex64::new(0.0, 0.0); 7];
    let mut fsal = rhs(u);
    let mut steps = 0;
    while s < total {
        steps += 1;
        if steps > 100_000 {
            return Err(NumericError::Integrator("too many steps".into()));
        }
        h = h.min(total - s);
        k[0] = fsal;
        for i in 1..7 {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..i {
                acc += k[j] * a[i][j];
            }
            let _ = c[i];
            k[i] = rhs(u + acc * (h * dir));
        }
        let mut d5 = Complex64::new(0.0, 0.0);
        let mut d4 = Complex64::new(0.0, 0.0);
        for i in 0..7 {
            d5 += k[i] * b5[i];
            d4 += k[i] * b4[i];
        }
        let next = u + d5 * (h * dir);
        let err = ((d5 - d4) * h).norm();
        let scale = tol * (1e-2 + next.norm());
        if !err.is_finite() || !next.is_finite() {
            return Err(NumericError::Integrator("non-finite vector field".into()));
        }
        if err <= scale {
            s += h;
            u = next;
            fsal = k[6];
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * (scale / err).powf(0.2)).clamp(0.2, 5.0) };
        h *= factor;
        if h < 1e-12 * total {
            return Err(NumericError::Integrator("step size underflow".into()));
        }
    }
    Ok(zeta0 + u)
}

#[allow(clippy::type_complexity)]
fn dp45_tableau() -> ([[f64; 7]; 7], [f64; 7], [f64; 7], [f64; 7]) {
    let a = [
        [0.0; 7],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0],
    ];
    let b5 = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    let b4 = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];
    let c = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    (a, b5, b4, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::germ::parse_germ_str;

    fn germ(text: &str) -> NumericGerm {
        NumericGerm::new(&parse_germ_str(text).unwrap()).unwrap()
    }

    #[test]
    fn log1p_is_accurate() {
        let h = Complex64::new(1e-12, -3e-13);
        let l = log1p(h);
        assert!((l - h).norm() < 1e-24);
        let h = Complex64::new(0.5, 0.7);
        assert!((log1p(h) - (1.0 + h).ln()).norm() < 1e-15);
    }

    #[test]
    fn levels_and_charts() {
        let p = SurfacePoint::from_z(Complex64::new(0.1, 0.0), 0);
        assert_eq!(p.level(), 0);
        assert!((p.zeta.re - 10f64.ln()).abs() < 1e-15);
        let q = SurfacePoint::from_z(Complex64::new(-0.1, 0.0), 0);
        assert_eq!(q.level(), 0);
        assert!((q.arg() + PI).abs() < 1e-15);
        assert_eq!(SurfacePoint::from_polar(0.1, 3.0 * PI).level(), 2);
        assert_eq!(SurfacePoint::from_polar(0.1, -PI - 1e-9).level(), -1);
    }

    #[test]
    fn series_backend_arithmetic() {
        let g = germ("name=q\nbackend=series\nbody=z - z^2\nalpha=2\nm=0\na=1\nC=0\nR=0.5\n");
        let p = SurfacePoint::from_z(Complex64::new(0.1, 0.0), 0);
        let q = g.step(&p).unwrap();
        assert!((q.z() - 0.09).norm() < 1e-16);
        assert_eq!(q.level(), 0);
        let back = g.inverse_step(&q).unwrap();
        assert!((back.zeta - p.zeta).norm() < 1e-14);
    }

    #[test]
    fn flow_backend_closed_form() {
        let g = germ("name=f\nbackend=flow\nbody=-z^2\nalpha=2\nm=0\na=1\nC=0\nR=1\n");
        let p = SurfacePoint::from_z(Complex64::new(0.1, 0.0), 0);
        let q = g.step(&p).unwrap();
        assert!((q.z() - 0.1 / 1.1).norm() < 1e-15);
        let z = Complex64::new(0.03, 0.04);
        let q = g.step(&SurfacePoint::from_z(z, 3)).unwrap();
        assert!((q.z() - z / (1.0 + z)).norm() < 1e-13 * z.norm());
        assert_eq!(q.level(), 3);
        let back = g.inverse_step(&q).unwrap();
        assert!((back.z() - z).norm() < 1e-13 * z.norm());
    }

    #[test]
    fn series_and_flow_backends_agree() {
        let flow = germ("name=g\nbackend=flow\nbody=z^2/(1+z)\nalpha=2\nm=0\na=-1\nC=0\nR=2\n");
        let s = flow.definition.series(TruncationBudget::new(crate::coeff::qi(24), 2)).unwrap();
        let mut def = flow.definition.clone();
        def.backend = Backend::Series(s);
        let series = NumericGerm::new(&def).unwrap();
        for (r, arg) in [(0.05, -PI), (0.02, -2.0), (0.08, 0.5 - PI), (0.03, 5.0)] {
            let p = SurfacePoint::from_polar(r, arg);
            let a = flow.step(&p).unwrap();
            let b = series.step(&p).unwrap();
            assert!((a.zeta - b.zeta).norm() < 1e-13, "{r} {arg}");
        }
    }

    #[test]
    fn expression_backend_tracks_levels() {
        let g = germ("name=e\nbackend=expression\nbody=z - z^2*l\nalpha=2\nm=1\na=1\nC=0\nR=1\n");
        let p = SurfacePoint::from_polar(0.01, 2.0 * PI * 5.0 + 0.2);
        let q = g.step(&p).unwrap();
        assert_eq!(q.level(), 5);
        let z = p.z();
        let want = z - z * z * p.l();
        assert!((q.z() - want).norm() < 1e-13 * want.norm());
        let back = g.inverse_step(&q).unwrap();
        assert!((back.zeta - p.zeta).norm() < 1e-13);
    }

    #[test]
    fn domain_membership() {
        let d = Domain { c: 1.0, r: 2.0 };
        assert!(d.contains(&SurfacePoint::new(Complex64::new(10.0, 0.0))));
        assert!(!d.contains(&SurfacePoint::new(Complex64::new(2.5, 0.0))));
        let b = d.boundary(7.0);
        assert!((d.xi(b.zeta).unwrap() - Complex64::new(2.0, 7.0)).norm() < 1e-10);
        let g = germ("name=q\nbackend=series\nbody=z - z^2\nalpha=2\nm=0\na=1\nC=1\nR=2\n");
        assert!(g.step(&SurfacePoint::from_z(Complex64::new(0.5, 0.0), 0)).is_err());
    }
}
