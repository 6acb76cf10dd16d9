//! Acceptance gate: runs criteria 1 to 10 and prints one PASS/FAIL line
//! per criterion. Exits nonzero when any criterion fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use num_complex::Complex64;

use dulac_core::coeff::{c_q, q, qi};
use dulac_core::gevrey::{flat_decay_check, Cusp, DELTA};
use dulac_core::horn::germ_invariants;
use dulac_core::normal_form::StepKind;
use dulac_core::numeric::SurfacePoint;
use dulac_core::transseries::{formal_flow, invert};
use dulac_core::{
    abel_residual, build_petal, build_petals, check_invariance, compare_moduli, compute_moduli, fit_radii, invariants_from_fatou,
    log_gevrey_order_estimate, model_germ, opening_at, parse_germ_file, reduce_to_normal_form, solve_abel, symmetry_check,
    CoefficientSequence, FatouCoordinate, FormalInvariants, HornGrid, ModelKind, Moduli, NumericGerm, PetalSign, Transseries,
    TruncationBudget, Q,
};

type Outcome = Result<String, String>;

fn germ(name: &str) -> NumericGerm {
    let path = format!("{}/../../germs/{name}", env!("CARGO_MANIFEST_DIR"));
    NumericGerm::new(&parse_germ_file(path).unwrap()).unwrap()
}

fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// The four normal forms `z - z^alpha l^m + rho z^(2 alpha - 1) l^(2m + 1)`.
fn model_suite(budget: impl Fn(Q) -> TruncationBudget) -> Vec<(FormalInvariants, Transseries)> {
    [(qi(2), 0, qi(0)), (qi(2), 0, q(1, 2)), (qi(2), 1, qi(0)), (qi(3), -1, qi(0))]
        .into_iter()
        .map(|(alpha, m, rho)| {
            let inv = FormalInvariants::new(alpha, m, c_q(rho));
            let f = model_germ(&inv, ModelKind::F, None, budget(alpha)).unwrap();
            (inv, f)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let mut slowest = Duration::ZERO;
    for (inv, f) in model_suite(|_| TruncationBudget::new(qi(6), 6)) {
        let t = Instant::now();
        let psi = solve_abel(&f, f.budget()).map_err(|e| format!("{inv}: {e}"))?;
        let r = abel_residual(&f, &psi).map_err(|e| format!("{inv}: {e}"))?;
        let dt = t.elapsed();
        slowest = slowest.max(dt);
        if !r.is_zero() {
            return Err(format!("{inv}: nonzero residual {r}"));
        }
        if dt > Duration::from_secs(10) {
            return Err(format!("{inv}: {dt:?} exceeds 10 s"));
        }
    }
    Ok(format!("4 residuals exactly zero up to z^6, slowest {slowest:.2?}"))
}

fn criterion_2() -> Outcome {
    let mut series: Vec<Transseries> = model_suite(|a| TruncationBudget::new(Q::from_integer(2) * a, 6)).into_iter().map(|x| x.1).collect();
    series.extend((0..20).map(|s| common::random_dulac(s, 6)));
    for f in &series {
        let r = reduce_to_normal_form(f).map_err(|e| format!("{f}: {e}"))?;
        let psi = solve_abel(&r.normalized_input, r.normalized_input.budget()).map_err(|e| format!("{f}: {e}"))?;
        let inv = invariants_from_fatou(&psi, r.invariants.alpha).map_err(|e| format!("{f}: {e}"))?;
        if inv != r.invariants {
            return Err(format!("{f}: {} vs {inv}", r.invariants));
        }
        let r2 = reduce_to_normal_form(&r.normal).map_err(|e| format!("{f}: {e}"))?;
        if r2.invariants != r.invariants {
            return Err(format!("{f}: reduction is not idempotent"));
        }
    }
    Ok(format!("{} series, both routes give identical (alpha, m, rho)", series.len()))
}

/// `a - b` vanishes and is known through `z^8`.
fn exact_to_z8(a: &Transseries, b: &Transseries) -> bool {
    let d = a.sub(b);
    d.is_zero() && d.coeff(qi(8), 0, 0).is_some()
}

fn criterion_3() -> Outcome {
    for seed in 0..10 {
        let f = common::random_parabolic(seed, 8);
        let id = Transseries::z(f.budget());
        let fi = invert(&f).map_err(|e| e.to_string())?;
        if !exact_to_z8(&fi.compose(&f).map_err(|e| e.to_string())?, &id) || !exact_to_z8(&f.compose(&fi).map_err(|e| e.to_string())?, &id) {
            return Err(format!("seed {seed}: inverse law fails"));
        }
        let xi = f.sub(&id);
        let (c, d) = (q(1, 2), q(-4, 3));
        let fc = formal_flow(&xi, c).map_err(|e| e.to_string())?;
        let fd = formal_flow(&xi, d).map_err(|e| e.to_string())?;
        let fcd = formal_flow(&xi, c + d).map_err(|e| e.to_string())?;
        if !exact_to_z8(&fc.compose(&fd).map_err(|e| e.to_string())?, &fcd) {
            return Err(format!("seed {seed}: flow law fails"));
        }
    }
    Ok("10 series: inverse and flow laws exact to z^8".into())
}

fn criterion_4() -> Outcome {
    let mut n = 0;
    for seed in 0..20 {
        let f = common::random_dulac(seed, 6);
        let r = reduce_to_normal_form(&f).map_err(|e| e.to_string())?;
        for s in r.steps.iter().filter(|s| s.kind != StepKind::FirstBlock) {
            n += 1;
            if !s.bracket_residual(f.budget()).is_zero() {
                return Err(format!("seed {seed}: bracket certificate fails at z^{}", s.beta));
            }
        }
    }
    ensure(n > 0, format!("{n} elimination steps certified exactly"))
}

fn criterion_5() -> Outcome {
    let t = Instant::now();
    let mut report = Vec::new();
    for (name, with_loglog) in [("ex1_g.germ", false), ("ex1_f.germ", true)] {
        let g = germ(name);
        let budget = TruncationBudget::new(qi(10), 4);
        let psi = solve_abel(&g.definition.series(budget).unwrap(), budget).map_err(|e| e.to_string())?;
        let petal = build_petal(&g, 0, PetalSign::Attracting, 0.0).map_err(|e| e.to_string())?;
        let fc = FatouCoordinate::new(&g, petal, &psi, 1e-12);
        let mut diffs = Vec::new();
        for i in 0..20 {
            let r = 0.02 + 0.08 * i as f64 / 19.0;
            let arg = fc.petal.axis_arg(r) + 0.6 * ((i % 5) as f64 / 4.0 - 0.5);
            let p = SurfacePoint::from_polar(r, arg);
            let v = fc.eval(&p).map_err(|e| format!("{name} at r = {r}: {e}"))?;
            let mut oracle = -1.0 / p.z() - p.zeta;
            if with_loglog {
                oracle += p.zeta.ln();
            }
            diffs.push(v - oracle);
        }
        let spread = diffs.iter().map(|d| (d - diffs[0]).norm()).fold(0.0, f64::max);
        if spread >= 1e-8 {
            return Err(format!("{name}: spread {spread:.3e}"));
        }
        report.push(format!("{name} spread {spread:.1e}"));
    }
    let dt = t.elapsed();
    ensure(dt < Duration::from_secs(60), format!("{}, {dt:.2?}", report.join(", ")))
}

/// Moduli of `z - z^2` on levels -4..=4, shared by criteria 6 and 7.
fn quadratic_moduli() -> Moduli {
    compute_moduli(&germ("z_minus_z2.germ"), -4..=4, HornGrid::default()).unwrap()
}

fn criterion_6(m: &Moduli) -> Outcome {
    let rep = symmetry_check(m, 1e-6).map_err(|e| e.to_string())?;
    let window: Vec<&(i64, f64)> = rep.per_level.iter().filter(|(j, _)| (-3..=3).contains(j)).collect();
    if window.len() != 7 {
        return Err(format!("only {} of 7 levels covered", window.len()));
    }
    let max = window.iter().map(|x| x.1).fold(0.0, f64::max);
    ensure(max < 1e-6, format!("max deviation {max:.2e} on j in [-3, 3]"))
}

fn criterion_7(quad: &Moduli) -> Outcome {
    let conj = compute_moduli(&germ("z_minus_z2_conj.germ"), -1..=1, HornGrid::default()).map_err(|e| e.to_string())?;
    let base = compute_moduli(&germ("z_minus_z2.germ"), -1..=1, HornGrid::default()).map_err(|e| e.to_string())?;
    let c = compare_moduli(&base, &conj, 1e-6);
    if !c.conjugate || c.residual >= 1e-6 {
        return Err(format!("conjugate pair: {} (residual {:.3e})", c.reason, c.residual));
    }
    let mf = compute_moduli(&germ("ex1_f.germ"), 0..=0, HornGrid::default()).map_err(|e| e.to_string())?;
    let mg = compute_moduli(&germ("ex1_g.germ"), 0..=0, HornGrid::default()).map_err(|e| e.to_string())?;
    let d = compare_moduli(&mf, &mg, 1e-6);
    if d.conjugate || !d.reason.starts_with("formal class") {
        return Err(format!("example pair: {}", d.reason));
    }
    let fit = fit_radii(quad);
    if fit.ln_radii.len() != 9 || !fit.holds {
        return Err(format!("radii bound fails: {fit:?}"));
    }
    Ok(format!(
        "conjugate residual {:.1e}; example pair: {}; radii bound with ln K1 = {:.2}, K = {:.3e}, C = {:.3}",
        c.residual, d.reason, fit.ln_k1, fit.k, fit.c
    ))
}

fn criterion_8() -> Outcome {
    let m = compute_moduli(&germ("f1_2_0_0.germ"), -1..=1, HornGrid::default()).map_err(|e| e.to_string())?;
    let inv = germ_invariants(&parse_germ_file(format!("{}/../../germs/f1_2_0_0.germ", env!("CARGO_MANIFEST_DIR"))).unwrap())
        .map_err(|e| e.to_string())?;
    let max = m.maps.iter().map(|h| h.linear_deviation).fold(0.0, f64::max);
    ensure(max < 1e-6, format!("{inv}: {} maps, max relative nonlinearity {max:.2e}", m.maps.len()))
}

fn criterion_9() -> Outcome {
    let lg = log_gevrey_order_estimate(&CoefficientSequence::synthetic(200, 3.0, 0.0, 1.0)).map_err(|e| e.to_string())?;
    if (lg.m_hat - 3.0).abs() > 0.3 {
        return Err(format!("estimate {:.4} for order 3", lg.m_hat));
    }
    let fact = log_gevrey_order_estimate(&CoefficientSequence::synthetic(200, 1.0, 1.0, 0.0)).map_err(|e| e.to_string())?;
    let tail = &fact.profile[fact.profile.len() / 2..];
    let decreasing = tail.windows(2).all(|w| w[1].1 < w[0].1);
    if fact.m_hat >= DELTA || !decreasing {
        return Err(format!("k! gives {:.4}", fact.m_hat));
    }
    let cusp = Cusp::new(PI / 4.0, 2.0, 20.0);
    let dbl = |l: Complex64| -(2.0 / l).exp();
    let single = |l: Complex64| -l.inv();
    let pd = flat_decay_check(&dbl, 2.0, &cusp, DELTA).map_err(|e| e.to_string())?;
    let ps = flat_decay_check(&single, 2.0, &cusp, DELTA).map_err(|e| e.to_string())?;
    ensure(
        pd.pass && !ps.pass,
        format!("m_hat {:.4} for p = 3; k! gives {:.4} and decreasing; flat check {} / {}", lg.m_hat, fact.m_hat, pd.pass, ps.pass),
    )
}

fn criterion_10() -> Outcome {
    let g = germ("z_minus_z2.germ");
    let petals = build_petals(&g, 0..=0, 0.0).map_err(|e| e.to_string())?;
    let mut tested = 0;
    for p in &petals {
        let rep = check_invariance(&g, p, 10_000);
        if rep.failures > 0 {
            return Err(format!("{} of {} points left V_0^{}", rep.failures, rep.tested, p.sign.symbol()));
        }
        tested += rep.tested;
    }
    let openings: Vec<f64> = [1e-2, 1e-4, 1e-6, 1e-8].iter().map(|r| opening_at(&g, &petals[0], *r, 2000)).collect();
    let last = *openings.last().unwrap();
    let monotone = openings.windows(2).all(|w| w[1] >= w[0] - 1e-9);
    ensure(
        monotone && (last - 2.0 * PI).abs() < 0.05 * 2.0 * PI && tested >= 10_000,
        format!("openings {:?}; {tested} boundary points stay in their petals", openings.iter().map(|o| format!("{o:.4}")).collect::<Vec<_>>()),
    )
}

fn main() {
    let quad = catch_unwind(quadratic_moduli);
    let with_quad = |f: fn(&Moduli) -> Outcome| -> Box<dyn FnOnce() -> Outcome> {
        match &quad {
            Ok(m) => {
                let m = m.clone();
                Box::new(move || f(&m))
            }
            Err(_) => Box::new(|| Err("moduli of z - z^2 could not be computed".into())),
        }
    };
    let criteria: Vec<(u32, Box<dyn FnOnce() -> Outcome>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, with_quad(criterion_6)),
        (7, with_quad(criterion_7)),
        (8, Box::new(criterion_8)),
        (9, Box::new(criterion_9)),
        (10, Box::new(criterion_10)),
    ];
    let mut failed = 0;
    for (n, run) in criteria {
        let t = Instant::now();
        let out = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match out {
            Ok(msg) => println!("criterion {n:>2}: PASS ({msg}) [{:.2?}]", t.elapsed()),
            Err(msg) => {
                failed += 1;
                println!("criterion {n:>2}: FAIL ({msg}) [{:.2?}]", t.elapsed());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
