//! `dulac`: command-line driver for the dulac toolkit.
//!
//! Every subcommand validates its flags before computing anything. Exit
//! codes: 0 ok, 2 validation, 3 numeric or formal failure, 4 failed check.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use dulac_core::coeff::{fmt_coeff, fmt_q, parse_rational, rat_to_q};
use dulac_core::error::FormalError;
use dulac_core::gevrey::GevreyEstimate;
use dulac_core::horn::germ_invariants;
use dulac_core::normal_form::StepKind;
use dulac_core::numeric::SurfacePoint;
use dulac_core::petals::REACH;
use dulac_core::{
    build_petal, build_petals, check_invariance, compare_moduli, compute_moduli, invariants_from_fatou, log_gevrey_order_estimate,
    orbit_csv, parse_germ_file, petals_svg, reduce_to_normal_form, rescale_to_alpha2, serialize, solve_abel, verify_uniform_bound,
    CoefficientSequence, Error, FatouCoordinate, GermDefinition, HornGrid, Moduli, NumericError, NumericGerm, PetalSign, Q,
    TruncationBudget,
};

#[derive(Parser)]
#[command(name = "dulac", version, about = "Formal and numeric invariants of parabolic Dulac germs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

/// Flags shared by all subcommands.
#[derive(Args, Clone, Debug, Default)]
struct Common {
    /// Largest z-exponent kept in formal computations.
    #[arg(long, global = true)]
    z_order: Option<String>,
    /// Largest power of l kept in formal computations.
    #[arg(long, global = true)]
    l_depth: Option<i64>,
    /// Numeric tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Level window `j_min:j_max`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    levels: Option<String>,
    /// Artifact path; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Worker threads for sampling.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
    Svg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Sign {
    Attracting,
    Repelling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Family {
    /// `p^-k (log k)^k e^(-k/log k)`
    LogGevrey,
    Factorial,
    InverseFactorial,
}

#[derive(Subcommand)]
enum Command {
    /// Formal invariants (alpha, m, rho), cross-checked by two routes.
    Invariants { germ: PathBuf },
    /// Elimination steps of the reduction to normal form.
    NormalForm { germ: PathBuf },
    /// Formal or numeric Fatou coordinate.
    Fatou {
        germ: PathBuf,
        #[arg(long, conflicts_with = "numeric")]
        formal: bool,
        #[arg(long)]
        numeric: bool,
        /// Point `re` or `re,im` in z.
        #[arg(long, allow_hyphen_values = true)]
        at: Option<String>,
        /// Level of the point on the surface of the logarithm.
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        level: i64,
        /// Petal; chosen from the point when absent.
        #[arg(long, value_enum)]
        petal: Option<Sign>,
    },
    /// Petals on a level window: SVG and radii table.
    Petals {
        germ: PathBuf,
        /// Boundary samples per petal in the invariance check.
        #[arg(long, default_value_t = 256)]
        samples: usize,
    },
    /// Orbit of a point as CSV.
    Orbit {
        germ: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        at: String,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        level: i64,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long)]
        backward: bool,
    },
    /// Horn maps on a level window as a JSON bundle.
    HornMaps { germ: PathBuf },
    /// Decides analytic conjugacy of two germs on a level window.
    Compare { f: PathBuf, g: PathBuf },
    /// Log-Gevrey order estimate of a coefficient sequence.
    Gevrey {
        /// CSV with columns `k,re,im`.
        #[arg(long, conflicts_with = "family")]
        coeffs: Option<PathBuf>,
        #[arg(long, value_enum)]
        family: Option<Family>,
        /// Parameter `p` of the log-Gevrey family.
        #[arg(long, default_value_t = 3.0)]
        p: f64,
        #[arg(long, default_value_t = 200)]
        k_max: usize,
        /// Order to test; a failed test exits with status 4.
        #[arg(long)]
        order: Option<f64>,
    },
}

/// Failure with its exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn validation(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: format!("error[validation]: {}", msg.into()) }
    }

    fn check(msg: impl Into<String>) -> Self {
        Failure { code: 4, msg: format!("check failed: {}", msg.into()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, module, inner) = match &e {
            Error::Parse(p) => (2, "germ-language", p.to_string()),
            Error::Formal(
                f @ (FormalError::NonParabolic(_)
                | FormalError::Malformed(_)
                | FormalError::ExponentOutsideBasis(_)
                | FormalError::IncompatibleBasis
                | FormalError::UnsupportedHomothety
                | FormalError::NotNormalized(_)),
            ) => (2, "formal", f.to_string()),
            Error::Formal(f) => (3, "formal", f.to_string()),
            Error::Numeric(n) => (3, "numeric", n.to_string()),
            Error::Check(c) => (4, "check", c.clone()),
        };
        Failure { code, msg: format!("error[{module}]: {inner}") }
    }
}

impl From<FormalError> for Failure {
    fn from(e: FormalError) -> Self {
        Error::from(e).into()
    }
}

impl From<NumericError> for Failure {
    fn from(e: NumericError) -> Self {
        Error::from(e).into()
    }
}

type Run = Result<(), Failure>;

/// Validated flags.
struct RunConfig {
    z_order: Option<Q>,
    l_depth: Option<i64>,
    tol: f64,
    levels: Option<(i64, i64)>,
    out: Option<PathBuf>,
    format: Option<Format>,
}

impl RunConfig {
    fn from_common(c: &Common) -> Result<Self, Failure> {
        let z_order = match &c.z_order {
            Some(s) => {
                let q = parse_rational(s).and_then(|r| rat_to_q(&r)).ok_or_else(|| Failure::validation(format!("--z-order: '{s}' is not a rational")))?;
                if q <= Q::from_integer(0) {
                    return Err(Failure::validation("--z-order must be positive"));
                }
                Some(q)
            }
            None => None,
        };
        if let Some(l) = c.l_depth {
            if l < 0 {
                return Err(Failure::validation("--l-depth must be nonnegative"));
            }
        }
        let tol = c.tol.unwrap_or(1e-6);
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Failure::validation("--tol must be a positive number"));
        }
        let levels = match &c.levels {
            Some(s) => {
                let (a, b) = s.split_once(':').ok_or_else(|| Failure::validation("--levels must read j_min:j_max"))?;
                let a: i64 = a.trim().parse().map_err(|_| Failure::validation("--levels: j_min is not an integer"))?;
                let b: i64 = b.trim().parse().map_err(|_| Failure::validation("--levels: j_max is not an integer"))?;
                if a > b {
                    return Err(Failure::validation("--levels: j_min exceeds j_max"));
                }
                Some((a, b))
            }
            None => None,
        };
        if let Some(w) = c.workers {
            if w == 0 {
                return Err(Failure::validation("--workers must be at least 1"));
            }
            // a second initialization only happens in tests; ignore it
            let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
        }
        Ok(RunConfig { z_order, l_depth: c.l_depth, tol, levels, out: c.out.clone(), format: c.format })
    }

    fn budget(&self, z: Q, l: i64) -> TruncationBudget {
        TruncationBudget::new(self.z_order.unwrap_or(z), self.l_depth.unwrap_or(l))
    }

    fn levels_or(&self, lo: i64, hi: i64) -> std::ops::RangeInclusive<i64> {
        let (a, b) = self.levels.unwrap_or((lo, hi));
        a..=b
    }

    fn format(&self, allowed: &[Format], default: Format) -> Result<Format, Failure> {
        let f = self.format.unwrap_or(default);
        if allowed.contains(&f) {
            Ok(f)
        } else {
            Err(Failure::validation(format!("--format {f:?} is not available here").to_lowercase()))
        }
    }

    /// Writes `artifact` to `--out` or stdout.
    fn emit(&self, artifact: &str) -> Run {
        match &self.out {
            Some(p) => std::fs::write(p, artifact).map_err(|e| Failure::validation(format!("cannot write {}: {e}", p.display()))),
            None => {
                print!("{artifact}");
                Ok(())
            }
        }
    }
}

fn load(path: &Path) -> Result<GermDefinition, Failure> {
    Ok(parse_germ_file(path)?)
}

fn two_alpha_plus_one(def: &GermDefinition) -> Q {
    Q::from_integer(2) * def.leading.alpha + Q::from_integer(1)
}

fn c_json(c: Complex64) -> serde_json::Value {
    json!([c.re, c.im])
}

fn fmt_c(c: Complex64) -> String {
    format!("{:.12} {} {:.12}i", c.re, if c.im < 0.0 { '-' } else { '+' }, c.im.abs())
}

fn parse_point(s: &str, level: i64) -> Result<SurfacePoint, Failure> {
    let bad = || Failure::validation(format!("--at: '{s}' is not `re` or `re,im`"));
    let (re, im) = match s.split_once(',') {
        Some((a, b)) => (a.trim().parse::<f64>().map_err(|_| bad())?, b.trim().parse::<f64>().map_err(|_| bad())?),
        None => (s.trim().parse::<f64>().map_err(|_| bad())?, 0.0),
    };
    let z = Complex64::new(re, im);
    if !(z.norm() > 0.0 && z.is_finite()) {
        return Err(Failure::validation("--at must be a nonzero finite point"));
    }
    Ok(SurfacePoint::from_z(z, level))
}

fn invariants(cfg: &RunConfig, path: &Path) -> Run {
    let format = cfg.format(&[Format::Text, Format::Json], Format::Text)?;
    let def = load(path)?;
    let f = def.series(cfg.budget(two_alpha_plus_one(&def), 6))?;
    let red = reduce_to_normal_form(&f)?;
    let psi = solve_abel(&red.normalized_input, red.normalized_input.budget())?;
    let via_fatou = invariants_from_fatou(&psi, red.invariants.alpha);
    let agree = via_fatou.as_ref().is_ok_and(|v| *v == red.invariants);
    let inv = &red.invariants;
    let rho = inv.rho.as_ref().map(fmt_coeff);
    let out = match format {
        Format::Json => {
            let v = json!({
                "germ": def.name, "alpha": fmt_q(inv.alpha), "m": inv.m, "rho": rho,
                "fatou_route_agrees": agree,
            });
            format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
        }
        _ => format!("{inv}\n"),
    };
    cfg.emit(&out)?;
    match via_fatou {
        Ok(_) if agree => Ok(()),
        Ok(v) => Err(Failure::check(format!("Fatou route gives {v}"))),
        Err(e) => Err(Failure::check(format!("Fatou route failed: {e}"))),
    }
}

fn normal_form(cfg: &RunConfig, path: &Path) -> Run {
    let format = cfg.format(&[Format::Text, Format::Json], Format::Text)?;
    let def = load(path)?;
    let f = def.series(cfg.budget(two_alpha_plus_one(&def), 6))?;
    let red = reduce_to_normal_form(&f)?;
    let kind = |k: StepKind| match k {
        StepKind::FirstBlock => "first-block",
        StepKind::HigherBlock => "higher-block",
        StepKind::ResidualBlock => "residual-block",
    };
    let norm = &red.normalization;
    let scale = norm.scale.as_ref().map(dulac_core::coeff::fmt_rat);
    let out = match format {
        Format::Json => {
            let steps: Vec<_> = red
                .steps
                .iter()
                .map(|s| json!({"kind": kind(s.kind), "gamma": fmt_q(s.gamma), "beta": fmt_q(s.beta), "change": serialize(&s.change(red.normal.budget()))}))
                .collect();
            let v = json!({
                "germ": def.name, "inverse": norm.inverse, "scale": scale, "steps": steps,
                "normal_form": serialize(&red.normal), "invariants": red.invariants.to_string(),
            });
            format!("{}\n", serde_json::to_string_pretty(&v).unwrap())
        }
        _ => {
            let mut s = String::new();
            writeln!(s, "germ {}", def.name).unwrap();
            writeln!(s, "inverse taken: {}", norm.inverse).unwrap();
            writeln!(s, "homothety: {}", scale.unwrap_or_else(|| "none".into())).unwrap();
            for (i, st) in red.steps.iter().enumerate() {
                let change = if st.is_identity() { "identity".to_string() } else { format!("phi = {}", serialize(&st.change(red.normal.budget()))) };
                writeln!(s, "step {i}: {} at z^{}: {change}", kind(st.kind), fmt_q(st.beta)).unwrap();
            }
            writeln!(s, "normal form: {}", serialize(&red.normal)).unwrap();
            writeln!(s, "{}", red.invariants).unwrap();
            s
        }
    };
    cfg.emit(&out)
}

fn fatou(cfg: &RunConfig, path: &Path, numeric: bool, at: Option<&str>, level: i64, petal: Option<Sign>) -> Run {
    let format = cfg.format(&[Format::Text, Format::Json], Format::Text)?;
    if numeric && at.is_none() {
        return Err(Failure::validation("--numeric needs --at"));
    }
    let def = load(path)?;
    if !numeric {
        let bud = cfg.budget(two_alpha_plus_one(&def), 6);
        let psi = solve_abel(&def.series(bud)?, bud)?;
        let out = match format {
            Format::Json => format!("{}\n", json!({"germ": def.name, "psi": serialize(&psi.body), "constant": "0"})),
            _ => format!("Psi = {} + C\nadditive constant C = 0 (constant term pinned)\n", serialize(&psi.body)),
        };
        return cfg.emit(&out);
    }
    let p = parse_point(at.unwrap(), level)?;
    let tol = cfg.tol.min(1e-10);
    let g = NumericGerm::new(&def)?;
    let bud = cfg.budget(Q::from_integer(10), 4);
    let psi = solve_abel(&def.series(bud)?, bud)?;
    let bound = verify_uniform_bound(&g, 64);
    let signs = match petal {
        Some(Sign::Attracting) => vec![PetalSign::Attracting],
        Some(Sign::Repelling) => vec![PetalSign::Repelling],
        None => vec![PetalSign::Attracting, PetalSign::Repelling],
    };
    // petal labels follow the argument of w, which may be offset by one
    // level from the argument of z
    let mut chosen = None;
    'search: for j in [level, level - 1, level + 1] {
        for sign in &signs {
            let pet = build_petal(&g, j, *sign, bound.c_est)?;
            if pet.contains(&g, &p) {
                chosen = Some(pet);
                break 'search;
            }
        }
    }
    let pet = chosen.ok_or_else(|| Failure::from(NumericError::OutsideDomain(format!("point is on no requested petal near level {level}"))))?;
    let fc = FatouCoordinate::new(&g, pet, &psi, tol);
    let v = fc.eval_traced(&p)?;
    let label = format!("V_{}^{}", fc.petal.j, fc.petal.sign.symbol());
    let out = match format {
        Format::Json => format!(
            "{}\n",
            json!({"germ": def.name, "petal": label, "z": c_json(p.z()), "level": p.level(), "psi": c_json(v.value),
                   "constant": c_json(fc.constant), "iterations": v.iterations, "tail": v.tail})
        ),
        _ => format!(
            "petal {label}\nz = {} (level {})\nPsi = {}\nadditive constant C = {} (formal normalization)\niterations {}, tail {:.3e}\n",
            fmt_c(p.z()),
            p.level(),
            fmt_c(v.value),
            fmt_c(fc.constant),
            v.iterations,
            v.tail
        ),
    };
    cfg.emit(&out)
}

fn petals(cfg: &RunConfig, path: &Path, samples: usize) -> Run {
    let format = cfg.format(&[Format::Text, Format::Csv, Format::Svg], Format::Text)?;
    let def = load(path)?;
    let g = NumericGerm::new(&def)?;
    let bound = verify_uniform_bound(&g, 64);
    let levels = cfg.levels_or(0, 0);
    let list = build_petals(&g, levels, bound.c_est)?;
    let reports: Vec<_> = list.par_iter().map(|p| check_invariance(&g, p, samples)).collect();
    let svg = petals_svg(&g, &list, 48, 96);
    let mut table = String::new();
    let csv = format == Format::Csv;
    if csv {
        table.push_str("j,sign,z_radius,r0,opening_target,invariance_tested,invariance_failures\n");
    } else {
        writeln!(table, "uniform bound c = {:.4e} (stable: {}), reach {REACH} steps", bound.c_est, bound.pass).unwrap();
        writeln!(table, "{:>4} {:>4} {:>12} {:>10} {:>10} {:>12}", "j", "sign", "radius", "r0", "opening", "invariance").unwrap();
    }
    for (p, r) in list.iter().zip(&reports) {
        if csv {
            writeln!(table, "{},{},{:.6e},{},{:.6},{},{}", p.j, p.sign.symbol(), p.z_radius(), p.r0, p.opening_target(), r.tested, r.failures).unwrap();
        } else {
            writeln!(
                table,
                "{:>4} {:>4} {:>12.4e} {:>10} {:>10.5} {:>6}/{:<5}",
                p.j,
                p.sign.symbol(),
                p.z_radius(),
                p.r0,
                p.opening_target(),
                r.tested - r.failures,
                r.tested
            )
            .unwrap();
        }
    }
    match (format, &cfg.out) {
        (Format::Svg, _) => cfg.emit(&svg)?,
        (_, Some(_)) => {
            cfg.emit(&svg)?;
            print!("{table}");
        }
        (_, None) => print!("{table}"),
    }
    let failures: usize = reports.iter().map(|r| r.failures).sum();
    if failures > 0 {
        return Err(Failure::check(format!("{failures} sampled points left their petal")));
    }
    Ok(())
}

fn orbit(cfg: &RunConfig, path: &Path, at: &str, level: i64, steps: usize, backward: bool) -> Run {
    let format = cfg.format(&[Format::Csv, Format::Json], Format::Csv)?;
    let def = load(path)?;
    let g = NumericGerm::new(&def)?;
    let p = parse_point(at, level)?;
    if !g.in_domain(&p) {
        return Err(NumericError::OutsideDomain("starting point is outside the domain".into()).into());
    }
    let pts = g.orbit(&p, steps, !backward);
    let out = match format {
        Format::Json => {
            let rows: Vec<_> = pts.iter().enumerate().map(|(n, q)| json!({"n": n, "zeta": c_json(q.zeta), "level": q.level()})).collect();
            format!("{}\n", serde_json::to_string_pretty(&rows).unwrap())
        }
        _ => orbit_csv(&pts),
    };
    cfg.emit(&out)?;
    if pts.len() < steps + 1 {
        return Err(NumericError::OutsideDomain(format!("orbit left the domain after {} steps", pts.len() - 1)).into());
    }
    Ok(())
}

/// Rescales to `alpha = 2` when needed and builds the moduli.
fn moduli_of(def: &GermDefinition, levels: std::ops::RangeInclusive<i64>) -> Result<(Moduli, bool), Failure> {
    let rescaled = def.leading.alpha != Q::from_integer(2);
    let d = rescale_to_alpha2(def)?;
    let g = NumericGerm::new(&d)?;
    Ok((compute_moduli(&g, levels, HornGrid::default())?, rescaled))
}

fn horn_maps(cfg: &RunConfig, path: &Path) -> Run {
    let format = cfg.format(&[Format::Json, Format::Text], Format::Json)?;
    let def = load(path)?;
    let (m, rescaled) = moduli_of(&def, cfg.levels_or(-1, 1))?;
    let mut summary = String::new();
    if rescaled {
        writeln!(summary, "rescaled to alpha = 2 by z = u^(1/(alpha-1))").unwrap();
    }
    writeln!(summary, "Fatou constants: 0 on every petal (formal normalization)").unwrap();
    writeln!(summary, "{:>4} {:>4} {:>12} {:>26} {:>12}", "j", "pole", "ln radius", "linear coefficient", "nonlinear").unwrap();
    for h in &m.maps {
        writeln!(summary, "{:>4} {:>4} {:>12.5} {:>26} {:>12.3e}", h.j, h.pole.symbol(), h.ln_radius, fmt_c(h.coeff(1)), h.linear_deviation).unwrap();
    }
    match format {
        Format::Text => cfg.emit(&summary),
        _ => {
            cfg.emit(&(m.to_json() + "\n"))?;
            if cfg.out.is_some() {
                print!("{summary}");
            }
            Ok(())
        }
    }
}

fn compare(cfg: &RunConfig, pf: &Path, pg: &Path) -> Run {
    let format = cfg.format(&[Format::Text, Format::Json], Format::Text)?;
    let (df, dg) = (load(pf)?, load(pg)?);
    let (fi, gi) = (germ_invariants(&df)?, germ_invariants(&dg)?);
    if fi != gi {
        let what = if fi.alpha != gi.alpha {
            "alpha differs"
        } else if fi.m != gi.m {
            "m differs"
        } else {
            "rho differs"
        };
        let out = match format {
            Format::Json => format!("{}\n", json!({"conjugate": false, "reason": format!("formal class ({what})"), "f": fi.to_string(), "g": gi.to_string()})),
            _ => format!("NOT conjugate: formal class ({what})\nf: {fi}\ng: {gi}\n"),
        };
        return cfg.emit(&out);
    }
    let levels = cfg.levels_or(-1, 1);
    let (mf, mg) = rayon::join(|| moduli_of(&df, levels.clone()), || moduli_of(&dg, levels.clone()));
    let ((mf, _), (mg, _)) = (mf?, mg?);
    let tol = cfg.tol;
    let c = compare_moduli(&mf, &mg, tol);
    let out = match format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&c).unwrap()),
        _ => {
            let mut s = String::new();
            if c.conjugate {
                writeln!(s, "conjugate: {} (residual {:.3e})", c.reason, c.residual).unwrap();
            } else {
                writeln!(s, "NOT conjugate: {} (residual {:.3e})", c.reason, c.residual).unwrap();
            }
            writeln!(s, "{fi}").unwrap();
            writeln!(s, "Fatou constants: 0 on every petal (formal normalization)").unwrap();
            for (i, a) in &c.a {
                writeln!(s, "gauge a_{i} = {}", fmt_c(Complex64::new(a[0], a[1]))).unwrap();
            }
            for (i, b) in &c.b {
                writeln!(s, "gauge b_{i} = {}", fmt_c(Complex64::new(b[0], b[1]))).unwrap();
            }
            s
        }
    };
    cfg.emit(&out)
}

fn read_coeffs(path: &Path) -> Result<CoefficientSequence, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::validation(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('k')) {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Failure::validation(format!("{}: line {} is not `k,re[,im]`", path.display(), i + 1));
        if cols.len() < 2 || cols.len() > 3 {
            return Err(bad());
        }
        let k: i64 = cols[0].parse().map_err(|_| bad())?;
        let re: f64 = cols[1].parse().map_err(|_| bad())?;
        let im: f64 = if cols.len() == 3 { cols[2].parse().map_err(|_| bad())? } else { 0.0 };
        rows.push((k, Complex64::new(re, im)));
    }
    rows.sort_by_key(|r| r.0);
    let (lo, hi) = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => (a.0, b.0),
        _ => return Err(Failure::validation("no coefficients")),
    };
    let mut a = vec![Complex64::new(0.0, 0.0); (hi - lo + 1) as usize];
    for (k, c) in rows {
        a[(k - lo) as usize] = c;
    }
    Ok(CoefficientSequence::from_complex(lo, &a))
}

fn gevrey(cfg: &RunConfig, coeffs: Option<&Path>, family: Option<Family>, p: f64, k_max: usize, order: Option<f64>) -> Run {
    let format = cfg.format(&[Format::Text, Format::Json, Format::Csv], Format::Text)?;
    if !(p > 0.0) {
        return Err(Failure::validation("--p must be positive"));
    }
    let (label, seq) = match (coeffs, family) {
        (Some(path), _) => (path.display().to_string(), read_coeffs(path)?),
        (None, Some(Family::LogGevrey)) => (format!("log-gevrey p={p}"), CoefficientSequence::synthetic(k_max, p, 0.0, 1.0)),
        (None, Some(Family::Factorial)) => ("k!".into(), CoefficientSequence::synthetic(k_max, 1.0, 1.0, 0.0)),
        (None, Some(Family::InverseFactorial)) => ("1/k!".into(), CoefficientSequence::synthetic(k_max, 1.0, -1.0, 0.0)),
        (None, None) => return Err(Failure::validation("give --coeffs or --family")),
    };
    let est: GevreyEstimate = log_gevrey_order_estimate(&seq)?;
    let verdict = order.map(|m| (m, est.supports(m)));
    let out = match format {
        Format::Json => format!("{}\n", json!({"sequence": label, "m_hat": est.m_hat, "order": order, "supported": verdict.map(|v| v.1), "profile": est.profile})),
        Format::Csv => est.profile_csv(),
        _ => {
            let mut s = format!("sequence {label}: {} coefficients\nestimated log-Gevrey order m_hat = {:.6}\n", seq.len(), est.m_hat);
            if let Some((m, ok)) = verdict {
                writeln!(s, "order {m}: {}", if ok { "PASS" } else { "FAIL" }).unwrap();
            }
            s
        }
    };
    cfg.emit(&out)?;
    match verdict {
        Some((m, false)) => Err(Failure::check(format!("estimate {:.4} does not support order {m}", est.m_hat))),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Run {
    let cfg = RunConfig::from_common(&cli.common)?;
    match &cli.command {
        Command::Invariants { germ } => invariants(&cfg, germ),
        Command::NormalForm { germ } => normal_form(&cfg, germ),
        Command::Fatou { germ, formal, numeric, at, level, petal } => {
            if !formal && !numeric {
                return Err(Failure::validation("choose --formal or --numeric"));
            }
            fatou(&cfg, germ, *numeric, at.as_deref(), *level, *petal)
        }
        Command::Petals { germ, samples } => petals(&cfg, germ, *samples),
        Command::Orbit { germ, at, level, steps, backward } => orbit(&cfg, germ, at, *level, *steps, *backward),
        Command::HornMaps { germ } => horn_maps(&cfg, germ),
        Command::Compare { f, g } => compare(&cfg, f, g),
        Command::Gevrey { coeffs, family, p, k_max, order } => gevrey(&cfg, coeffs.as_deref(), *family, *p, *k_max, *order),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_and_budget_validation() {
        let mut c = Common { levels: Some("-3:3".into()), ..Default::default() };
        let cfg = RunConfig::from_common(&c).unwrap();
        assert_eq!(cfg.levels, Some((-3, 3)));
        c.levels = Some("3:-3".into());
        assert_eq!(RunConfig::from_common(&c).err().unwrap().code, 2);
        c.levels = None;
        c.z_order = Some("0".into());
        assert_eq!(RunConfig::from_common(&c).err().unwrap().code, 2);
        c.z_order = Some("7/2".into());
        assert_eq!(RunConfig::from_common(&c).unwrap().z_order, Some(Q::new(7, 2)));
        c.tol = Some(-1.0);
        assert!(RunConfig::from_common(&c).is_err());
    }

    #[test]
    fn points_parse() {
        let p = parse_point("0.05", 0).unwrap();
        assert!((p.z() - Complex64::new(0.05, 0.0)).norm() < 1e-15);
        let p = parse_point("-0.1,0.02", 1).unwrap();
        assert_eq!(p.level(), 1);
        assert!(parse_point("0", 0).is_err());
        assert!(parse_point("a,b", 0).is_err());
    }

    #[test]
    fn error_codes() {
        assert_eq!(Failure::from(Error::Numeric(NumericError::Precondition("x".into()))).code, 3);
        assert_eq!(Failure::from(Error::Check("x".into())).code, 4);
        assert_eq!(Failure::from(FormalError::NonParabolic("x".into())).code, 2);
        assert_eq!(Failure::from(FormalError::BudgetExhausted("x".into())).code, 3);
    }
}
