//! Acceptance criteria, one line per criterion.
//!
//! Runs without the libtest harness so that every line is printed. Set
//! `ACCEPTANCE_ONLY=1,4` to run a subset.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use carleman_lab::fields::{ClosedForm, DiffMode, GridSpec, NonlinearityU, ScalarField, Sign};
use carleman_lab::geometry::{AdmissibleRegion, Dimension, SpacetimePoint};
use carleman_lab::quadrature::{integrate_cone, integrate_hyperboloid, integrate_hyperboloid_inverted, ModeFactor, Rule};
use carleman_lab::scalar::{Jet, Scalar};
use carleman_lab::solver::{
    compact_bump, counterexample_build, evolve_to, exact_dalembert, solve, static_multipole, InitialData, WaveProblem,
};
use carleman_lab::verifier::battery::{
    battery_grid, battery_nonlinearities, battery_region, battery_weights, split_params, BatteryField, DEFAULT_SEED,
};
use carleman_lab::verifier::carleman::proof_k;
use carleman_lab::verifier::identity::{convergence_record, identity_convergence};
use carleman_lab::verifier::limits::FixedCutoffs;
use carleman_lab::verifier::pipeline::PipelineSettings;
use carleman_lab::verifier::{
    boundary_limit_experiment, carleman_nl_check, carleman_split_check, induced_potential, pointwise_inequality,
    proof_rate, uniqueness_pipeline, LimitKind, LimitSequenceSpec, Problem, Verdict,
};
use carleman_lab::fields::decay_functionals;
use carleman_lab::weights::Potential;
use carleman_lab::Result;

struct Outcome {
    pass: bool,
    summary: String,
}

fn outcome(pass: bool, summary: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome { pass, summary: summary.into() })
}

fn dim3() -> Dimension {
    Dimension::new(3).unwrap()
}

// Solver fields do not depend on the weight, so build each grid level once.
struct SolverCache(HashMap<usize, ScalarField>);

impl SolverCache {
    fn get(&mut self, g: &GridSpec) -> Result<ScalarField> {
        if let Some(f) = self.0.get(&g.ns()) {
            return Ok(f.clone());
        }
        let f = BatteryField::SolverDalembert.build(g, &battery_weights()[0])?;
        self.0.insert(g.ns(), f.clone());
        Ok(f)
    }
}

/// 129 to 2049 nodes per axis; the fourth-order residual of the split
/// weights only drops below 1e-6 on the last level.
const C1_LEVELS: usize = 5;

fn c1_identity() -> Result<Outcome> {
    let base = battery_grid(129)?;
    let mut cache = SolverCache(HashMap::new());
    let mut levels = vec![base.clone()];
    for _ in 0..C1_LEVELS - 1 {
        let next = levels.last().unwrap().refined();
        levels.push(next);
    }
    for g in &levels {
        cache.get(g)?;
    }
    let mut failures = Vec::new();
    let mut orders = Vec::new();
    let mut finest_closed: f64 = 0.0;
    let mut combos = 0;
    for field in BatteryField::all(DEFAULT_SEED) {
        for rep in battery_weights() {
            for nl in battery_nonlinearities() {
                combos += 1;
                let build = |g: &GridSpec| -> Result<ScalarField> {
                    match field {
                        BatteryField::SolverDalembert => cache.0.get(&g.ns()).cloned().ok_or_else(|| {
                            carleman_lab::LabError::InvalidInput("solver level missing".into())
                        }),
                        _ => field.build(g, &rep),
                    }
                };
                let conv = identity_convergence(&build, &base.with_ell(field.ell()), C1_LEVELS, &rep, &nl, DiffMode::default())?;
                let tol = field.is_closed_form().then_some(1e-6);
                let name = format!("{}/{}/{}", field.name(), rep.label(), nl.label());
                let rec = convergence_record(&name, &conv, (1.5, 4.5), tol);
                if let Some(o) = conv.order {
                    if !conv.below_floor() {
                        orders.push(o);
                    }
                }
                if field.is_closed_form() {
                    finest_closed = finest_closed.max(conv.finest());
                }
                if !rec.passed() {
                    failures.push(format!("{name}: order {:?}, errors {:?}", conv.order, conv.errors));
                }
            }
        }
    }
    let lo = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = orders.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = format!(
        "{combos} combinations, fitted orders in [{lo:.2}, {hi:.2}] ({} fitted, rest at round-off), finest closed-form residual {finest_closed:.2e}",
        orders.len()
    );
    for f in &failures {
        s.push_str(&format!("\n      failed {f}"));
    }
    outcome(failures.is_empty(), s)
}

fn c2_pointwise() -> Result<Outcome> {
    let grid = battery_grid(129)?;
    let mut cache = SolverCache(HashMap::new());
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    let mut count = 0;
    for field in BatteryField::all(DEFAULT_SEED) {
        for rep in battery_weights() {
            let phi = match field {
                BatteryField::SolverDalembert => cache.get(&grid)?,
                _ => field.build(&grid, &rep)?,
            };
            for nl in battery_nonlinearities() {
                count += 1;
                let name = format!("{}/{}/{}", field.name(), rep.label(), nl.label());
                let rec = pointwise_inequality(&name, &phi, &rep, &nl, DiffMode::default())?;
                let res = rec.details["identity_residual"];
                let min = rec.details["min_margin"];
                if res > 0.0 {
                    worst = worst.min(min / res);
                }
                if !rec.passed() {
                    failures.push(format!("{name}: min margin {min:.3e}, residual {res:.3e}"));
                }
            }
        }
    }
    let mut s = format!("{count} combinations at 129x129, worst margin/residual ratio {worst:.3}");
    for f in &failures {
        s.push_str(&format!("\n      failed {f}"));
    }
    outcome(failures.is_empty(), s)
}

/// `box phi + V phi = 0` with a potential that saturates the decay envelope away from the cone.
fn saturating_potential() -> Potential {
    let p = split_params().p;
    // sup |V| / min(f^{(p-2)/2}, f^{-(p+2)/2}) on f <= 10 is about 0.87 eps,
    // just below the admissible 5.2e-2
    let eps = 0.05;
    Potential::new("saturating", ClosedForm::new(move |u: Jet, v: Jet| {
        let f = -(u * v);
        let f = if f.value() > 0.0 { f } else { Jet::constant(0.0) };
        (f + 1.0).powf(-(1.0 + p / 2.0)) * eps
    }))
}

fn saturating_problem(dr: f64) -> WaveProblem {
    WaveProblem {
        n: dim3(),
        ell: 0,
        nl: NonlinearityU::Power { sign: Sign::Plus, p: 1.0, v: saturating_potential() },
        data: InitialData::new(
            |r: f64| compact_bump(2.0, 1.5, 1.0)(Jet::constant(r)).value(),
            |_| 0.0,
            3.5,
        ),
        dr,
        courant: 0.5,
    }
}

fn carleman_fields(grid: &GridSpec) -> Result<Vec<(&'static str, ScalarField)>> {
    let rep = battery_weights()[0].clone();
    let mut out = Vec::new();
    for field in BatteryField::all(DEFAULT_SEED) {
        out.push((field.name(), field.build(grid, &rep)?));
    }
    let g1 = grid.with_ell(1);
    out.push(("static-multipole", ScalarField::from_closed_form(&g1, static_multipole(dim3(), 1))));
    out.push(("saturating-solver", solve(&saturating_problem(0.005), grid)?.0));
    Ok(out)
}

fn c3_split() -> Result<Outcome> {
    let region = battery_region();
    let params = split_params();
    let mut failures = Vec::new();
    let mut calibrated = Vec::new();
    let mut worst_cancel: f64 = 0.0;
    let mut sat = None;
    for nodes in [129, 257] {
        let grid = battery_grid(nodes)?;
        let mut c_cal = f64::INFINITY;
        let mut k_cal = f64::NEG_INFINITY;
        for (name, phi) in carleman_fields(&grid)? {
            let pot = (name == "saturating-solver").then(saturating_potential);
            let rep = carleman_split_check(&phi, params, &region, pot.as_ref(), DiffMode::default())?;
            worst_cancel = worst_cancel.max(rep.cancellation);
            if !rep.holds() {
                failures.push(format!(
                    "{name}@{nodes}: low margin {:.3e} raw {:.3e} tol {:.3e}; high margin {:.3e} raw {:.3e} tol {:.3e}",
                    rep.low.margin, rep.low.raw_margin, rep.low.tolerance, rep.high.margin, rep.high.raw_margin, rep.high.tolerance
                ));
            }
            if let Some(c) = rep.c_max {
                c_cal = c_cal.min(c);
            }
            if let Some(k) = rep.k_min {
                k_cal = k_cal.max(k);
            }
            if name == "saturating-solver" {
                sat = Some((rep.b_field, rep.b_admissible, rep.absorbed()));
            }
        }
        calibrated.push((c_cal, k_cal));
    }
    let (c0, k0) = calibrated[0];
    let (c1, k1) = calibrated[1];
    let stable = |a: f64, b: f64| (a - b).abs() <= 0.1 * b.abs();
    let c_stable = stable(c0, c1);
    let k_stable = stable(k0, k1);
    let cancel_ok = worst_cancel <= 1e-10;
    let mut s = format!(
        "proof constants C = 1, K = {:.4}; calibrated C_max {c0:.4} -> {c1:.4}, K_min {k0:.4} -> {k1:.4}; f=1 cancellation {worst_cancel:.1e}",
        proof_k()
    );
    if let Some((bf, ba, absorbed)) = sat {
        s.push_str(&format!(
            "; saturating field B = {} vs admissible {ba:.3e} ({})",
            bf.map_or("n/a".to_string(), |b| format!("{b:.3e}")),
            match absorbed {
                Some(true) => "absorbed",
                Some(false) => "not absorbed",
                None => "n/a",
            }
        ));
    }
    if !c_stable || !k_stable {
        failures.push("calibrated constants moved by more than 10%".into());
    }
    if !cancel_ok {
        failures.push("flux through f = 1 does not cancel".into());
    }
    for f in &failures {
        s.push_str(&format!("\n      failed {f}"));
    }
    outcome(failures.is_empty(), s)
}

fn c4_nonlinear() -> Result<Outcome> {
    let grid = battery_grid(129)?;
    let region = battery_region();
    let a = 0.1;
    let cases = [(Sign::Plus, 1.0, 1.0, 0.3), (Sign::Plus, 2.0, 0.5 - a, 0.3), (Sign::Minus, 3.0, 2.0 * a, 0.5)];
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for (sign, p, gamma_expected, amp) in cases {
        let v = Potential::constant(1.0);
        let problem = WaveProblem {
            n: dim3(),
            ell: 0,
            nl: NonlinearityU::Power { sign, p, v: v.clone() },
            data: InitialData::new(move |r: f64| compact_bump(2.0, 1.5, amp)(Jet::constant(r)).value(), |_| 0.0, 3.5),
            dr: 0.005,
            courant: 0.5,
        };
        let phi = solve(&problem, &grid)?.0;
        let rep = carleman_nl_check(&phi, a, sign, p, &v, &region, DiffMode::default())?;
        let label = format!("({}, p={p})", sign.value());
        let gamma_ok = (rep.gamma_range.0 - gamma_expected).abs() < 1e-12 && (rep.gamma_range.1 - gamma_expected).abs() < 1e-12;
        if !gamma_ok {
            failures.push(format!("{label}: sign*Gamma in {:?}, expected {gamma_expected}", rep.gamma_range));
        }
        if !rep.holds() {
            failures.push(format!("{label}: margin {:.3e} below -{:.3e}", rep.margin, rep.tolerance));
        }
        parts.push(format!("{label} Gamma={gamma_expected:.2} margin/lhs={:.3}", rep.margin / rep.lhs.abs().max(1e-300)));
    }
    let mut s = parts.join(", ");
    for f in &failures {
        s.push_str(&format!("\n      failed {f}"));
    }
    outcome(failures.is_empty(), s)
}

// Independent oracle: composite Simpson over the level set's own parameter,
// with the induced length element from finite-difference tangents.
fn simpson(a: f64, b: f64, m: usize, g: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / m as f64;
    let mut acc = g(a) + g(b);
    for k in 1..m {
        acc += g(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

fn induced_oracle(curve: impl Fn(f64) -> SpacetimePoint, a: f64, b: f64, psi: &dyn Fn(SpacetimePoint) -> f64) -> f64 {
    let eps = 1e-5;
    simpson(a, b, 20000, |x| {
        let (p0, p1) = (curve(x - eps), curve(x + eps));
        let dt = (p1.t() - p0.t()) / (2.0 * eps);
        let dr = (p1.r() - p0.r()) / (2.0 * eps);
        let q = curve(x);
        psi(q) * q.r().powi(2) * (dr * dr - dt * dt).abs().sqrt()
    })
}

fn c5_coarea() -> Result<Outcome> {
    let n = dim3();
    let rule = Rule::new(128)?;
    let m = ModeFactor::Normalized;
    let psi = |q: SpacetimePoint| (-(q.t() * q.t() + q.r() * q.r()) / 10.0).exp() * (1.0 + 0.3 * q.t() * q.r());
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut worst: f64 = 0.0;
    for (omega, sigma, tau) in [(0.5, 0.2, 5.0), (2.0, 0.1, 3.0), (9.0, 0.5, 8.0)] {
        let direct = integrate_hyperboloid(omega, sigma, tau, &psi, n, m, &rule)?;
        let so = f64::sqrt(omega);
        let oracle = induced_oracle(|y| SpacetimePoint::new(-so * (-y / 2.0).exp(), so * (y / 2.0).exp()), sigma.ln(), tau.ln(), &psi);
        worst = worst.max(rel(direct, oracle));
    }
    for (tau, rho, omega) in [(2.0, 0.1, 4.0), (0.3, 0.5, 6.0)] {
        let direct = integrate_cone(tau, rho, omega, &psi, n, m, &rule)?;
        let y = f64::ln(tau);
        let oracle = induced_oracle(|s| SpacetimePoint::new(-((s - y) / 2.0).exp(), ((s + y) / 2.0).exp()), rho.ln(), omega.ln(), &psi);
        worst = worst.max(rel(direct, oracle));
    }
    let mut worst_inv: f64 = 0.0;
    for omega in [0.25, 1.0, 9.0] {
        let direct = integrate_hyperboloid(omega, 0.2, 6.0, &psi, n, m, &rule)?;
        let inv = integrate_hyperboloid_inverted(omega, 0.2, 6.0, &psi, n, m, &rule)?;
        worst_inv = worst_inv.max(rel(inv, direct));
    }
    outcome(
        worst <= 1e-6 && worst_inv <= 1e-6,
        format!("coarea vs induced-measure oracle {worst:.2e}, inverted vs direct {worst_inv:.2e} (tolerance 1e-6)"),
    )
}

fn c6_limits() -> Result<Outcome> {
    let n = dim3();
    let (delta, alpha, beta) = (1.0, 0.5, 0.5);
    let near = move |q: SpacetimePoint| (1.0 + q.r()).powf(-(2.0 + delta));
    let far = move |q: SpacetimePoint| (q.r() + q.f()).powf(-(2.0 + delta));
    let cut = FixedCutoffs::default();
    let runs: [(LimitKind, f64, f64, &(dyn Fn(SpacetimePoint) -> f64 + Sync)); 4] = [
        (LimitKind::TauToInfinity, 1e4, 0.0, &near),
        (LimitKind::SigmaToZero, 1e-4, 0.0, &near),
        (LimitKind::RhoToZero, 1e-4, alpha, &near),
        (LimitKind::OmegaToInfinity, 1e2, beta, &far),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, start, exponent, psi) in runs {
        let spec = LimitSequenceSpec::new(kind, start, exponent);
        let rep = boundary_limit_experiment(psi, &spec, &cut, n, 32)?;
        let predicted = proof_rate(kind, delta, exponent);
        let rec = rep.record(&format!("{kind:?}"), predicted, 0.1);
        ok &= rec.passed();
        parts.push(format!("{kind:?} {:.4} vs {predicted}", rep.slope.unwrap_or(f64::NAN)));
    }
    outcome(ok, parts.join(", "))
}

fn c7_counterexample() -> Result<Outcome> {
    let b = counterexample_build(dim3(), 6.0, 2.5)?;
    let exact = b.q_plus == 2.0 && b.q_minus == -3.0;
    let slope_ok = (b.tail_slope - b.q_minus).abs() <= 0.01 * b.q_minus.abs();
    let ok = exact && b.leak == 0.0 && b.residual < 1e-10 && slope_ok;
    outcome(
        ok,
        format!(
            "q+ = {}, q- = {}, l = {}, |U| outside [1,2] = {}, residual {:.2e}, tail slope {:.5}",
            b.q_plus, b.q_minus, b.ell, b.leak, b.residual, b.tail_slope
        ),
    )
}

fn c8_pipeline() -> Result<Outcome> {
    let n = dim3();
    let (beta, p) = (2.0, 0.5);
    let cx = counterexample_build(n, 6.0, 2.5)?;
    let cases: Vec<(&str, ClosedForm, u32, Problem, fn(&Verdict) -> bool)> = vec![
        (
            "zero",
            ClosedForm::constant(0.0),
            0,
            Problem::Linear { v: None, big_b: None, beta, p },
            |v| *v == Verdict::BulkForcedToZero,
        ),
        (
            "multipole",
            static_multipole(n, 1),
            1,
            Problem::Linear { v: None, big_b: None, beta, p },
            |v| matches!(v, Verdict::NonVanishingTerm { term } if term == "I1"),
        ),
        (
            "counterexample",
            cx.profile.clone(),
            cx.ell,
            Problem::Linear { v: Some(cx.potential.clone()), big_b: None, beta, p },
            |v| matches!(v, Verdict::HypothesisViolated { hypothesis, .. } if hypothesis == "potential bound"),
        ),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, form, ell, problem, expect) in cases {
        let base = PipelineSettings::default();
        let v0 = uniqueness_pipeline(&form, n, ell, &problem, &base)?.verdict;
        let v1 = uniqueness_pipeline(&form, n, ell, &problem, &base.refined())?.verdict;
        let good = expect(&v0) && v0 == v1;
        ok &= good;
        parts.push(format!("{name}: {}{}", v0.label(), if v0 == v1 { " (stable)" } else { " (changed under refinement)" }));
    }
    outcome(ok, parts.join(", "))
}

fn c9_falsifiability() -> Result<Outcome> {
    let n = dim3();
    let (beta, p) = (1.0, 0.5);
    let params = Problem::linear_weights(beta, p)?;
    let b_adm = params.b * (params.a * params.p / proof_k()).sqrt() / (p * (beta - p).min(p));
    let grid = GridSpec::over_region(&AdmissibleRegion::new(0.01, 100.0, 0.01, 100.0)?, n, 0, 129, 129)?;
    let fields: Vec<(&str, ClosedForm)> = vec![
        ("(1+t^2+r^2)^-2", ClosedForm::new(|u, v| ((u + v).square() + (v - u).square() + 1.0).powf(-2.0))),
        ("(1+t^2+r^2)^-5/2", ClosedForm::new(|u, v| ((u + v).square() + (v - u).square() + 1.0).powf(-2.5))),
        (
            "(2+sin t)(1+t^2+r^2)^-2",
            ClosedForm::new(|u, v| ((u + v).sin() + 2.0) * ((u + v).square() + (v - u).square() + 1.0).powf(-2.0)),
        ),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, cf) in fields {
        let phi = ScalarField::from_closed_form(&grid, cf);
        let decay = decay_functionals(&phi, beta, None, DiffMode::Analytic)?;
        let ind = induced_potential(&phi, 1e-12, b_adm, beta, p, DiffMode::Analytic)?;
        let consistent = decay.verdict == carleman_lab::fields::DecayVerdict::Consistent;
        let good = consistent && !ind.violations.is_empty();
        ok &= good;
        parts.push(format!(
            "{name}: decay {:?}, {} of {} nodes violate (B needed {:.2e})",
            decay.verdict,
            ind.violations.len(),
            ind.total - ind.masked,
            ind.b_required
        ));
    }
    outcome(ok, format!("admissible B = {b_adm:.3e}; {}", parts.join(", ")))
}

fn c10_solver() -> Result<Outcome> {
    let n = dim3();
    let g = compact_bump(-2.0, 1.0, 1.0);
    let exact = exact_dalembert(g);
    let t_final = 2.0;
    let mut errs = Vec::new();
    let drs = [0.04, 0.02, 0.01, 0.005];
    for &dr in &drs {
        let problem = WaveProblem {
            n,
            ell: 0,
            nl: NonlinearityU::Zero,
            data: InitialData::from_closed_form(&exact, 3.0),
            dr,
            courant: 0.5,
        };
        let slice = evolve_to(&problem, t_final, 8.0)?;
        let mut num = 0.0;
        let mut den = 0.0;
        for (r, phi) in slice.r.iter().zip(&slice.phi) {
            let e = exact.rect_jet(slice.t, *r).value();
            num += r * r * (phi - e).powi(2);
            den += r * r * e * e;
        }
        errs.push((num / den).sqrt());
    }
    let xs: Vec<f64> = drs.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|x| x.ln()).collect();
    let order = carleman_lab::verifier::least_squares_slope(&xs, &ys);

    // the stencil reaches one cell per step, so cells beyond the data support
    // plus one cell per step (and one for the start-up step) see nothing
    let dr = 0.01;
    let problem = WaveProblem {
        n,
        ell: 0,
        nl: NonlinearityU::Zero,
        data: InitialData::from_closed_form(&exact, 3.0),
        dr,
        courant: 0.5,
    };
    let slice = evolve_to(&problem, t_final, 8.0)?;
    let steps = (t_final / (0.5 * dr)).round();
    let reach = 3.0 + (steps + 2.0) * dr;
    let untouched: Vec<f64> = slice.r.iter().zip(&slice.phi).filter(|(r, _)| **r > reach).map(|(_, p)| *p).collect();
    let exact_zero = !untouched.is_empty() && untouched.iter().all(|x| *x == 0.0);

    let kg = WaveProblem {
        n,
        ell: 0,
        nl: NonlinearityU::Power { sign: Sign::Plus, p: 1.0, v: Potential::constant(1.0) },
        data: InitialData::from_closed_form(&exact, 3.0),
        dr: 0.01,
        courant: 0.5,
    };
    let grid = GridSpec::new(n, 0, (0.25, 4.0), 33, (0.25, 4.0), 33)?;
    let drift = solve(&kg, &grid)?.1.energy_drift.unwrap_or(f64::NAN);
    let order_ok = (order - 2.0).abs() <= 0.3;
    outcome(
        order_ok && exact_zero && drift < 0.01,
        format!(
            "L2 errors {:?}, order {order:.3}; {} untouched cells exactly zero: {exact_zero}; Klein-Gordon energy drift {drift:.2e}",
            errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>(),
            untouched.len()
        ),
    )
}

type Criterion = fn() -> Result<Outcome>;

fn main() -> ExitCode {
    let criteria: [(u32, &str, Criterion); 10] = [
        (1, "divergence identity converges", c1_identity),
        (2, "pointwise inequality within residual", c2_pointwise),
        (3, "split Carleman estimate", c3_split),
        (4, "nonlinear Carleman estimate", c4_nonlinear),
        (5, "coarea and inversion", c5_coarea),
        (6, "boundary-limit slopes", c6_limits),
        (7, "counterexample", c7_counterexample),
        (8, "pipeline discrimination", c8_pipeline),
        (9, "falsifiability", c9_falsifiability),
        (10, "solver", c10_solver),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (id, title, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (pass, summary) = match run() {
            Ok(o) => (o.pass, o.summary),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {} {title} ({:.1}s): {summary}",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
