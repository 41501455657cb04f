//! One function per command, each turning a validated config into an [`Outcome`].

use std::collections::BTreeMap;

use super::config::{region, Command, FieldConfig, NlConfig, ProblemConfig, RunConfig};
use super::report::{Constants, Outcome};
use crate::error::Result;
use crate::fields::{ClosedForm, DiffMode, GridSpec, NonlinearityU, ScalarField};
use crate::geometry::{Dimension, SpacetimePoint};
use crate::scalar::{Jet, Scalar};
use crate::solver::{compact_bump, counterexample_build, radiation_weight, solve, static_multipole, InitialData, WaveProblem};
use crate::verifier::battery::{dalembert_problem, dalembert_profile, gaussian_bump, BATTERY_SOLVER_DR};
use crate::verifier::carleman::proof_k;
use crate::verifier::identity::{convergence_record, identity_convergence};
use crate::verifier::limits::FixedCutoffs;
use crate::verifier::pipeline::PipelineSettings;
use crate::verifier::{
    boundary_limit_experiment, carleman_nl_check, carleman_split_check, pointwise_inequality, proof_rate,
    uniqueness_pipeline, CheckRecord, LimitKind, LimitSequenceSpec, Problem, Status,
};
use crate::weights::{Potential, Reparametrization};

fn dimension(cfg: &RunConfig) -> Result<Dimension> {
    Dimension::new(cfg.n)
}

/// Closed form of the configured field and its mode, if it has one.
pub fn closed_form(cfg: &RunConfig, rep: &Reparametrization) -> Result<Option<(ClosedForm, u32)>> {
    let n = dimension(cfg)?;
    Ok(match cfg.field {
        FieldConfig::Zero => Some((ClosedForm::constant(0.0), 0)),
        FieldConfig::Constant { value } => Some((ClosedForm::constant(value), 0)),
        FieldConfig::PsiOne => Some((rep.closed_form_exp_minus(-1.0)?, 0)),
        FieldConfig::GaussianBump => Some((gaussian_bump(cfg.seed), 1)),
        FieldConfig::Dalembert => None,
        FieldConfig::StaticMultipole { ell } => Some((static_multipole(n, ell), ell)),
        FieldConfig::Counterexample { a, k } => {
            let b = counterexample_build(n, a, k)?;
            Some((b.profile, b.ell))
        }
    })
}

/// The configured field on `grid`, whose mode is replaced by the field's own.
pub fn build_field(cfg: &RunConfig, grid: &GridSpec, rep: &Reparametrization) -> Result<ScalarField> {
    match closed_form(cfg, rep)? {
        Some((cf, ell)) => Ok(ScalarField::from_closed_form(&grid.with_ell(ell), cf)),
        None => Ok(solve(&dalembert_problem(grid.dimension(), BATTERY_SOLVER_DR), &grid.with_ell(0))?.0),
    }
}

fn field_ell(cfg: &RunConfig) -> u32 {
    match cfg.field {
        FieldConfig::GaussianBump => 1,
        FieldConfig::StaticMultipole { ell } => ell,
        // the eigenvalue fixes the mode; the builder rejects anything else
        FieldConfig::Counterexample { a, .. } => {
            let nn = cfg.n as f64;
            ((-(nn - 2.0) + ((nn - 2.0).powi(2) + 4.0 * a).sqrt()) / 2.0).round() as u32
        }
        _ => 0,
    }
}

fn refined_nodes(nodes: usize, refine: usize) -> usize {
    (nodes - 1) * (1 << refine) + 1
}

fn grid(cfg: &RunConfig, refine: usize) -> Result<GridSpec> {
    let nodes = refined_nodes(cfg.grid.nodes, refine);
    GridSpec::over_region(&region(cfg)?, dimension(cfg)?, field_ell(cfg), nodes, nodes)
}

/// Runs the configured command with `refine` extra refinement levels.
pub fn run_command(cfg: &RunConfig, refine: usize) -> Result<Outcome> {
    match cfg.command {
        Command::VerifyIdentity => verify_identity(cfg, refine),
        Command::VerifyCarleman => verify_carleman(cfg, refine),
        Command::VerifyNl => verify_nl(cfg, refine),
        Command::Limits => limits(cfg, refine),
        Command::Counterexample => counterexample(cfg),
        Command::Solve => solve_command(cfg, refine),
        Command::Pipeline => pipeline(cfg, refine),
    }
}

fn verify_identity(cfg: &RunConfig, refine: usize) -> Result<Outcome> {
    let rep = cfg.weight.rep();
    let nl = cfg.nonlinearity.nonlinearity();
    let base = grid(cfg, 0)?;
    let label = format!("{}/{}/{}", cfg.field.name(), rep.label(), nl.label());
    let build = |g: &GridSpec| build_field(cfg, g, &rep);
    let levels = cfg.grid.levels + refine;
    let conv = identity_convergence(&build, &base, levels, &rep, &nl, DiffMode::default())?;
    let finest_tol = match cfg.field {
        FieldConfig::Dalembert => None,
        _ => cfg.tolerances.identity_finest,
    };
    let identity = convergence_record(&format!("identity/{label}"), &conv, cfg.tolerances.order_range, finest_tol);
    let phi = build_field(cfg, &base, &rep)?;
    let pointwise = pointwise_inequality(&format!("pointwise/{label}"), &phi, &rep, &nl, DiffMode::default())?;
    Ok(Outcome { records: vec![identity, pointwise], ..Outcome::default() })
}

fn verify_carleman(cfg: &RunConfig, refine: usize) -> Result<Outcome> {
    let params = cfg.split.params();
    let rep = Reparametrization::PowerLog { a: params.a };
    let g = grid(cfg, refine)?;
    let phi = build_field(cfg, &g, &rep)?;
    let rep = carleman_split_check(&phi, params, &region(cfg)?, None, DiffMode::default())?;
    let k = proof_k();
    let name = cfg.field.name();
    let side = |label: &str, s: &crate::verifier::SideReport| {
        CheckRecord::inequality(format!("carleman/{name}/{label}"), s.lhs, k * s.box_term + s.boundary.total(), s.tolerance)
            .with_status(Status::from_bool(s.holds()))
            .with_detail("raw_margin", s.raw_margin)
            .with_detail("box_term", s.box_term)
            .with_detail("boundary", s.boundary.total())
    };
    let records = vec![
        side("low", &rep.low),
        side("high", &rep.high),
        CheckRecord::inequality(format!("carleman/{name}/flux-cancellation"), rep.cancellation, cfg.tolerances.cancellation, 0.0)
            .with_detail("flux_low", rep.flux_at_one.0)
            .with_detail("flux_high", rep.flux_at_one.1),
    ];
    let constants = Constants { c: rep.c_max, k: rep.k_min, b_admissible: Some(rep.b_admissible), b_required: None };
    Ok(Outcome { records, constants, ..Outcome::default() })
}

fn verify_nl(cfg: &RunConfig, refine: usize) -> Result<Outcome> {
    let c = cfg.nonlinear;
    let v = Potential::constant(c.v);
    let amp = c.amplitude;
    let problem = WaveProblem {
        n: dimension(cfg)?,
        ell: 0,
        nl: NonlinearityU::Power { sign: c.sign, p: c.p, v: v.clone() },
        data: InitialData::new(move |r: f64| compact_bump(2.0, 1.5, amp)(Jet::constant(r)).value(), |_| 0.0, 3.5),
        dr: c.dr,
        courant: 0.5,
    };
    let nodes = refined_nodes(cfg.grid.nodes, refine);
    let g = GridSpec::over_region(&region(cfg)?, dimension(cfg)?, 0, nodes, nodes)?;
    let phi = solve(&problem, &g)?.0;
    let rep = carleman_nl_check(&phi, c.a, c.sign, c.p, &v, &region(cfg)?, DiffMode::default())?;
    let tag = format!("nl/({},p={})", c.sign.value(), c.p);
    let records = vec![
        CheckRecord::flag(format!("{tag}/coercive"), rep.coercive())
            .with_detail("gamma_min", rep.gamma_range.0)
            .with_detail("gamma_max", rep.gamma_range.1),
        CheckRecord::inequality(format!("{tag}/estimate"), rep.lhs, rep.box_term + rep.boundary.total(), rep.tolerance)
            .with_detail("box_term", rep.box_term)
            .with_detail("boundary", rep.boundary.total()),
        CheckRecord::close_to(format!("{tag}/bulk-formula"), rep.lhs, rep.lhs_formula, rep.tolerance.max(1e-12 * rep.lhs.abs())),
    ];
    Ok(Outcome { records, ..Outcome::default() })
}

fn limit_kind_name(kind: LimitKind) -> &'static str {
    match kind {
        LimitKind::SigmaToZero => "sigma-to-zero",
        LimitKind::TauToInfinity => "tau-to-infinity",
        LimitKind::RhoToZero => "rho-to-zero",
        LimitKind::OmegaToInfinity => "omega-to-infinity",
    }
}

fn limits(cfg: &RunConfig, refine: usize) -> Result<Outcome> {
    let l = cfg.limits;
    let delta = l.delta;
    let near = move |q: SpacetimePoint| (1.0 + q.r()).powf(-(2.0 + delta));
    let far = move |q: SpacetimePoint| (q.r() + q.f()).powf(-(2.0 + delta));
    let psi: &(dyn Fn(SpacetimePoint) -> f64 + Sync) = match l.kind {
        LimitKind::OmegaToInfinity => &far,
        _ => &near,
    };
    let exponent = match l.kind {
        LimitKind::RhoToZero | LimitKind::OmegaToInfinity => l.exponent,
        _ => 0.0,
    };
    let spec = LimitSequenceSpec {
        kind: l.kind,
        start: l.start_or_default(),
        ratio: l.ratio,
        count: l.count,
        fit_last: l.fit_last,
        exponent,
    };
    let cutoffs = FixedCutoffs { f_range: l.f_range, t_window: l.t_window };
    let rep = boundary_limit_experiment(psi, &spec, &cutoffs, dimension(cfg)?, l.nodes << refine)?;
    let predicted = proof_rate(l.kind, delta, exponent);
    let rec = rep.record(&format!("limits/{}", limit_kind_name(l.kind)), predicted, l.rel_tol).with_detail("predicted", predicted);
    Ok(Outcome { records: vec![rec], ..Outcome::default() })
}

fn counterexample(cfg: &RunConfig) -> Result<Outcome> {
    let c = cfg.counterexample;
    let b = counterexample_build(dimension(cfg)?, c.a, c.k)?;
    let records = vec![
        CheckRecord::close_to("counterexample/decay-fit", b.tail_slope, b.q_minus, 0.01 * b.q_minus.abs())
            .with_detail("q_plus", b.q_plus)
            .with_detail("q_minus", b.q_minus)
            .with_detail("ell", b.ell as f64),
        CheckRecord::inequality("counterexample/residual", b.residual, 1e-10, 0.0),
        CheckRecord::flag("counterexample/support", b.leak == 0.0).with_detail("leak", b.leak),
        CheckRecord::flag("counterexample/decay-order", b.q_minus.abs() > c.k).with_detail("k", c.k),
    ];
    let mut notes = BTreeMap::new();
    notes.insert("counterexample.q_minus".to_string(), format!("{}", b.q_minus));
    Ok(Outcome { records, notes, ..Outcome::default() })
}

fn solve_command(cfg: &RunConfig, refine: usize) -> Result<Outcome> {
    let s = cfg.solve;
    let n = dimension(cfg)?;
    let data = match cfg.field {
        FieldConfig::Dalembert => InitialData::from_closed_form(&dalembert_profile(), 3.5),
        _ => InitialData::new(|_| 0.0, |_| 0.0, 1.0),
    };
    let problem = WaveProblem { n, ell: 0, nl: cfg.nonlinearity.nonlinearity(), data, dr: s.dr / (1 << refine) as f64, courant: s.courant };
    let nodes = refined_nodes(cfg.grid.nodes, refine);
    let g = GridSpec::over_region(&region(cfg)?, n, 0, nodes, nodes)?;
    let (phi, stats) = solve(&problem, &g)?;
    let mut records = vec![CheckRecord::flag("solve/radiation-suprema", true).with_series(radiation_weight(&phi))];
    if let Some(drift) = stats.energy_drift {
        records.push(CheckRecord::inequality("solve/energy-drift", drift.abs(), s.energy_tolerance, 0.0));
    }
    let exact = match cfg.field {
        FieldConfig::Dalembert if n.get() == 3 && matches!(cfg.nonlinearity, NlConfig::Zero) => Some(dalembert_profile()),
        FieldConfig::Zero => Some(ClosedForm::constant(0.0)),
        _ => None,
    };
    if let Some(cf) = exact {
        let mut err: f64 = 0.0;
        for i in 0..g.ns() {
            for j in 0..g.ny() {
                err = err.max((phi.value(i, j) - cf.value_at(g.point(i, j))).abs());
            }
        }
        records.push(CheckRecord::inequality("solve/sup-error", err, s.error_tolerance, 0.0));
    }
    let mut artifacts = Vec::new();
    if s.snapshot {
        let mut buf = Vec::new();
        phi.write_csv(&mut buf)?;
        artifacts.push(("field.csv".to_string(), buf));
    }
    let mut notes = BTreeMap::new();
    notes.insert("solve.steps".to_string(), format!("{}+{}", stats.steps_forward, stats.steps_backward));
    Ok(Outcome { records, artifacts, notes, ..Outcome::default() })
}

fn pipeline(cfg: &RunConfig, refine: usize) -> Result<Outcome> {
    let n = dimension(cfg)?;
    let rep = Reparametrization::PowerLog { a: 1.0 };
    let (form, ell) = closed_form(cfg, &rep)?.expect("validated: pipeline fields are closed forms");
    let problem = match cfg.pipeline.problem {
        ProblemConfig::Linear { beta, p, big_b } => {
            let v = match cfg.field {
                FieldConfig::Counterexample { a, k } => Some(counterexample_build(n, a, k)?.potential),
                _ => None,
            };
            Problem::Linear { v, big_b, beta, p }
        }
        ProblemConfig::Nonlinear { sign, p, a, v } => Problem::Nonlinear { sign, p, v: Potential::constant(v), a },
    };
    let mut settings = PipelineSettings::default();
    for _ in 0..refine {
        settings = settings.refined();
    }
    let rep = uniqueness_pipeline(&form, n, ell, &problem, &settings)?;
    let label = rep.verdict.label();
    let name = cfg.field.name();
    let ok = cfg.pipeline.expect.as_ref().is_none_or(|e| *e == label);
    let mut verdict = CheckRecord::flag(format!("pipeline/{name}/verdict"), ok);
    if let Some(b) = rep.b_required {
        verdict = verdict.with_detail("b_required", b);
    }
    if let Some(b) = rep.b_admissible {
        verdict = verdict.with_detail("b_admissible", b);
    }
    let mut records = vec![verdict];
    for t in &rep.terms {
        let mut r = CheckRecord::flag(format!("pipeline/{name}/term/{}", t.name), true)
            .with_detail("vanishing", if t.vanishing { 1.0 } else { 0.0 })
            .with_detail("discardable", if t.discardable { 1.0 } else { 0.0 })
            .with_series(t.params.iter().copied().zip(t.values.iter().copied()).collect());
        if let Some(s) = t.slope {
            r = r.with_detail("slope", s);
        }
        records.push(r);
    }
    let mut notes = BTreeMap::new();
    notes.insert(format!("pipeline.{name}.verdict"), label);
    let constants = Constants { b_required: rep.b_required, b_admissible: rep.b_admissible, ..Constants::default() };
    Ok(Outcome { records, constants, notes, ..Outcome::default() })
}
