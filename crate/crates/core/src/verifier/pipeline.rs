//! The uniqueness argument replayed on a concrete field: check the potential
//! hypothesis, then follow every boundary term of the summed estimate along
//! its limit sequence.

use ndarray::Array2;
use serde::Serialize;

use crate::currents::{contract_f, contract_h, current_point};
use crate::error::{LabError, Result};
use crate::fields::{derivatives, ClosedForm, DiffMode, GridSpec, NonlinearityU, ScalarField, Sign, INTERIOR_MARGIN};
use crate::geometry::{AdmissibleRegion, Dimension, SpacetimePoint};
use crate::quadrature::{integrate_cone, integrate_hyperboloid, ModeFactor, Rule};
use crate::verifier::carleman::{proof_k, PROOF_C};
use crate::verifier::least_squares_slope;
use crate::weights::{finite_order_bound, gamma_v, Potential, Reparametrization, SplitParams};

/// The potential `V = -box phi / phi` a field would need, and where it breaks the decay bound.
#[derive(Clone, Debug)]
pub struct InducedPotential {
    /// `NaN` at masked nodes.
    pub values: Array2<f64>,
    pub masked: usize,
    pub total: usize,
    /// `(f, h)` of interior nodes where `|V|` exceeds the bound.
    pub violations: Vec<(f64, f64)>,
    /// Smallest `B` for which the bound holds at every unmasked interior node.
    pub b_required: f64,
}

/// Reads `V` off `box phi + V phi = 0`; nodes with `|phi| < floor * sup|phi|` are masked.
pub fn induced_potential(
    field: &ScalarField,
    floor: f64,
    big_b: f64,
    beta: f64,
    p: f64,
    mode: DiffMode,
) -> Result<InducedPotential> {
    let g = field.grid();
    let d = derivatives(field, mode)?;
    let sup = d.phi.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let (ns, ny) = g.shape();
    let m = INTERIOR_MARGIN;
    let mut values = Array2::from_elem(g.shape(), f64::NAN);
    let mut masked = 0;
    let mut total = 0;
    let mut violations = Vec::new();
    let mut b_required = 0.0_f64;
    for i in m..ns - m {
        let f = g.s(i).exp();
        let unit = finite_order_bound(1.0, beta, p, f);
        for j in m..ny - m {
            total += 1;
            let phi = d.phi[[i, j]];
            if !(phi.abs() > floor * sup) {
                masked += 1;
                continue;
            }
            let v = -d.box_phi[[i, j]] / phi;
            values[[i, j]] = v;
            b_required = b_required.max(v.abs() / unit);
            if v.abs() > big_b * unit {
                violations.push((f, g.y(j).exp()));
            }
        }
    }
    if 2 * masked > total {
        return Err(LabError::MostlyMasked { masked, total });
    }
    Ok(InducedPotential { values, masked, total, violations, b_required })
}

/// The equation the field is supposed to solve.
#[derive(Clone, Debug)]
pub enum Problem {
    /// `box phi + V phi = 0` with `|V|` bounded by `B` times the decay envelope of order `(beta, p)`.
    /// Without `big_b` the smallest bound `V` satisfies is used.
    Linear { v: Option<ClosedForm>, big_b: Option<f64>, beta: f64, p: f64 },
    /// `box phi +- V |phi|^{p-1} phi = 0`, weight `F = -a log f`.
    Nonlinear { sign: Sign, p: f64, v: Potential, a: f64 },
}

impl Problem {
    /// Weight parameters `(a, b, p)` the linear argument uses for `(beta, p)`.
    pub fn linear_weights(beta: f64, p: f64) -> Result<SplitParams> {
        let a = beta / 4.0 + p / 4.0;
        let b = (beta - p).min(8.0 * p) / 16.0;
        SplitParams::new(a, b, p)
    }
}

#[derive(Clone, Debug)]
pub struct PipelineSettings {
    /// Gauss-Legendre nodes per panel.
    pub nodes: usize,
    /// `h`-cutoffs `(1/window, window)` standing in for `(0, infinity)`.
    pub window: f64,
    /// Fixed `(rho, omega)` on the cones.
    pub f_range: (f64, f64),
    pub omega_start: f64,
    pub rho_start: f64,
    pub tau_start: f64,
    pub ratio: f64,
    pub count: usize,
    pub fit_last: usize,
    /// Decay rate (in the log of the parameter) below which a term counts as not vanishing.
    pub rate_tolerance: f64,
    /// Nodes per axis of the grid on which the potential bound is sampled.
    pub sample_nodes: usize,
    pub sample_range: (f64, f64),
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            nodes: 32,
            window: 1e8,
            f_range: (0.25, 4.0),
            omega_start: 4.0,
            rho_start: 0.25,
            tau_start: 16.0,
            ratio: 2.0,
            count: 6,
            fit_last: 4,
            rate_tolerance: 0.05,
            sample_nodes: 129,
            sample_range: (1e-2, 1e2),
        }
    }
}

impl PipelineSettings {
    /// Twice the quadrature nodes and a once-refined sampling grid.
    pub fn refined(&self) -> Self {
        PipelineSettings { nodes: 2 * self.nodes, sample_nodes: 2 * self.sample_nodes - 1, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermTrace {
    pub name: String,
    pub params: Vec<f64>,
    pub values: Vec<f64>,
    /// Log-log slope of `|value|` over the trailing points.
    pub slope: Option<f64>,
    pub vanishing: bool,
    /// Non-positive along the whole sequence, so the estimate can drop it.
    pub discardable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    BulkForcedToZero,
    NonVanishingTerm { term: String },
    HypothesisViolated { hypothesis: String, required: f64, admissible: f64 },
}

impl Verdict {
    pub fn label(&self) -> String {
        match self {
            Verdict::BulkForcedToZero => "bulk forced to 0".into(),
            Verdict::NonVanishingTerm { term } => format!("non-vanishing {term}"),
            Verdict::HypothesisViolated { hypothesis, .. } => format!("{hypothesis} violated"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PipelineReport {
    pub verdict: Verdict,
    pub terms: Vec<TermTrace>,
    pub b_required: Option<f64>,
    pub b_admissible: Option<f64>,
}

fn sequence(start: f64, ratio: f64, count: usize, up: bool) -> Vec<f64> {
    let d = if up { 1.0 } else { -1.0 };
    (0..count).map(|k| start * ratio.powf(d * k as f64)).collect()
}

fn trace(
    name: &str,
    params: Vec<f64>,
    values: Vec<f64>,
    up: bool,
    settings: &PipelineSettings,
    may_discard: bool,
) -> TermTrace {
    let scale = values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let tail = params.len().saturating_sub(settings.fit_last);
    let slope = if scale > 0.0 && values[tail..].iter().all(|x| *x != 0.0) {
        let xs: Vec<f64> = params[tail..].iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = values[tail..].iter().map(|x| x.abs().ln()).collect();
        Some(least_squares_slope(&xs, &ys))
    } else {
        None
    };
    let direction = if up { 1.0 } else { -1.0 };
    let vanishing = scale <= 1e-13 || slope.is_some_and(|s| -direction * s > settings.rate_tolerance);
    let discardable = may_discard && values.iter().all(|x| *x <= 0.0);
    TermTrace { name: name.into(), params, values, slope, vanishing, discardable }
}

type Current<'a> = Box<dyn Fn(SpacetimePoint) -> (f64, f64) + Sync + 'a>;

struct Fluxes<'a> {
    n: Dimension,
    nodes: usize,
    window: f64,
    cur: Current<'a>,
}

impl Fluxes<'_> {
    // int_{f = w} f^{-1/2} g(P) over the h-window
    fn hyperboloid(&self, w: f64, g: &(dyn Fn(SpacetimePoint, (f64, f64)) -> f64 + Sync)) -> Result<f64> {
        let rule = Rule::graded(self.nodes, 0.0, 0.25 * w.sqrt())?;
        let integrand = |q: SpacetimePoint| g(q, (self.cur)(q)) / q.f().sqrt();
        integrate_hyperboloid(w, 1.0 / self.window, self.window, &integrand, self.n, ModeFactor::Normalized, &rule)
    }

    // int_{h = x, rho < f < omega} u^2 f^{-1/2} P . grad h
    fn cone(&self, x: f64, rho: f64, omega: f64) -> Result<f64> {
        let rule = Rule::new(self.nodes)?;
        let integrand = |q: SpacetimePoint| {
            let (pu, pv) = (self.cur)(q);
            contract_h(q, pu, pv) / q.f().sqrt()
        };
        integrate_cone(x, rho, omega, &integrand, self.n, ModeFactor::Normalized, &rule)
    }
}

fn flux_f(q: SpacetimePoint, p: (f64, f64)) -> f64 {
    contract_f(q, p.0, p.1)
}

fn sample_grid(n: Dimension, ell: u32, s: &PipelineSettings) -> Result<GridSpec> {
    GridSpec::new(n, ell, s.sample_range, s.sample_nodes, s.sample_range, s.sample_nodes)
}

/// Replays the uniqueness argument for a closed-form field in mode `ell`.
pub fn uniqueness_pipeline(
    field: &ClosedForm,
    n: Dimension,
    ell: u32,
    problem: &Problem,
    settings: &PipelineSettings,
) -> Result<PipelineReport> {
    let lambda = n.angular_eigenvalue(ell);
    let s = settings;
    let omegas = sequence(s.omega_start, s.ratio, s.count, true);
    let rhos = sequence(s.rho_start, s.ratio, s.count, false);
    let taus = sequence(s.tau_start, s.ratio, s.count, true);
    let sigmas: Vec<f64> = taus.iter().map(|t| 1.0 / t).collect();
    let (f0, f1) = s.f_range;
    let map = |xs: &[f64], g: &dyn Fn(f64) -> Result<f64>| xs.iter().map(|&x| g(x)).collect::<Result<Vec<f64>>>();

    match problem {
        Problem::Linear { v, big_b, beta, p } => {
            let params = Problem::linear_weights(*beta, *p)?;
            let b_adm_prime = params.b * (PROOF_C * params.a * params.p / proof_k()).sqrt();
            let b_admissible = b_adm_prime / (p * (beta - p).min(*p));
            let mut b_required = None;
            if let Some(v) = v {
                let grid = sample_grid(n, ell, s)?;
                let req = grid
                    .map_nodes(|i, j| {
                        let q = grid.point(i, j);
                        v.value_at(q).abs() / finite_order_bound(1.0, *beta, *p, q.f())
                    })
                    .into_iter()
                    .fold(0.0_f64, f64::max);
                b_required = Some(req);
                let claimed = big_b.unwrap_or(req);
                if req > claimed * (1.0 + 1e-12) {
                    return Ok(PipelineReport {
                        verdict: Verdict::HypothesisViolated {
                            hypothesis: "potential bound".into(),
                            required: req,
                            admissible: claimed,
                        },
                        terms: Vec::new(),
                        b_required,
                        b_admissible: Some(b_admissible),
                    });
                }
                if claimed > b_admissible {
                    return Ok(PipelineReport {
                        verdict: Verdict::HypothesisViolated {
                            hypothesis: "potential bound".into(),
                            required: claimed,
                            admissible: b_admissible,
                        },
                        terms: Vec::new(),
                        b_required,
                        b_admissible: Some(b_admissible),
                    });
                }
            }
            let low = Reparametrization::SplitLow(params);
            let high = Reparametrization::SplitHigh(params);
            let mk = |rep: Reparametrization| Fluxes {
                n,
                nodes: s.nodes,
                window: s.window,
                cur: Box::new(move |q| current_point(field, q, &rep, &NonlinearityU::Zero, n, lambda).unwrap_or((f64::NAN, f64::NAN))),
            };
            let lo = mk(low);
            let hi = mk(high);
            let i1 = map(&omegas, &|w| hi.hyperboloid(w, &flux_f))?;
            let i2 = map(&rhos, &|r| Ok(-lo.hyperboloid(r, &flux_f)?))?;
            let j1 = map(&taus, &|t| lo.cone(t, f0, 1.0))?;
            let j2 = map(&taus, &|t| hi.cone(t, 1.0, f1))?;
            let j3 = map(&sigmas, &|x| Ok(-lo.cone(x, f0, 1.0)?))?;
            let j4 = map(&sigmas, &|x| Ok(-hi.cone(x, 1.0, f1)?))?;
            let terms = vec![
                trace("I1", omegas.clone(), i1, true, s, false),
                trace("I2", rhos.clone(), i2, false, s, false),
                trace("J1", taus.clone(), j1, true, s, false),
                trace("J2", taus.clone(), j2, true, s, false),
                trace("J3", sigmas.clone(), j3, false, s, false),
                trace("J4", sigmas.clone(), j4, false, s, false),
            ];
            Ok(finish(terms, b_required, Some(b_admissible)))
        }
        Problem::Nonlinear { sign, p, v, a } => {
            let grid = sample_grid(n, ell, s)?;
            let sg = sign.value();
            let gammas = grid
                .map_nodes(|i, j| gamma_v(v, *a, *p, grid.point(i, j), n).map(|g| sg * g))
                .into_iter()
                .collect::<Result<Vec<f64>>>()?;
            let gmin = gammas.iter().copied().fold(f64::INFINITY, f64::min);
            if !(gmin > 0.0) {
                return Ok(PipelineReport {
                    verdict: Verdict::HypothesisViolated {
                        hypothesis: "potential monotonicity".into(),
                        required: gmin,
                        admissible: 0.0,
                    },
                    terms: Vec::new(),
                    b_required: None,
                    b_admissible: None,
                });
            }
            let nl = NonlinearityU::Power { sign: *sign, p: *p, v: v.clone() };
            nl.check_mode(ell)?;
            let rep = Reparametrization::PowerLog { a: *a };
            let fl = Fluxes {
                n,
                nodes: s.nodes,
                window: s.window,
                cur: Box::new(|q| current_point(field, q, &rep, &nl, n, lambda).unwrap_or((f64::NAN, f64::NAN))),
            };
            // the part of P . grad f carried by U is e^{-2F} f U
            let u_part = |q: SpacetimePoint, _: (f64, f64)| {
                let phi = field.value_at(q);
                q.f().powf(2.0 * a) * q.f() * nl.values(q, phi).u
            };
            let without_u = |q: SpacetimePoint, pp: (f64, f64)| flux_f(q, pp) - u_part(q, pp);
            let i1 = map(&omegas, &|w| fl.hyperboloid(w, &without_u))?;
            let i2 = map(&rhos, &|r| Ok(-fl.hyperboloid(r, &without_u)?))?;
            let j1 = map(&taus, &|t| fl.cone(t, f0, f1))?;
            let j2 = map(&sigmas, &|x| Ok(-fl.cone(x, f0, f1)?))?;
            let z1 = map(&omegas, &|w| fl.hyperboloid(w, &u_part))?;
            let z2 = map(&rhos, &|r| Ok(-fl.hyperboloid(r, &u_part)?))?;
            let terms = vec![
                trace("I1", omegas.clone(), i1, true, s, false),
                trace("I2", rhos.clone(), i2, false, s, false),
                trace("J1", taus.clone(), j1, true, s, false),
                trace("J2", sigmas.clone(), j2, false, s, false),
                trace("Z1", omegas.clone(), z1, true, s, true),
                trace("Z2", rhos.clone(), z2, false, s, true),
            ];
            Ok(finish(terms, None, None))
        }
    }
}

fn finish(terms: Vec<TermTrace>, b_required: Option<f64>, b_admissible: Option<f64>) -> PipelineReport {
    let verdict = match terms.iter().find(|t| !t.vanishing && !t.discardable) {
        Some(t) => Verdict::NonVanishingTerm { term: t.name.clone() },
        None => Verdict::BulkForcedToZero,
    };
    PipelineReport { verdict, terms, b_required, b_admissible }
}

/// The region the linear argument integrates over, for reports.
pub fn pipeline_region(s: &PipelineSettings) -> Result<AdmissibleRegion> {
    AdmissibleRegion::new(s.f_range.0, s.f_range.1, 1.0 / s.window, s.window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ScalarField;
    use crate::verifier::battery::battery_grid;

    #[test]
    fn zero_field_forces_the_bulk_to_zero() {
        let n = Dimension::new(3).unwrap();
        let problem = Problem::Linear { v: None, big_b: None, beta: 2.0, p: 0.5 };
        let rep = uniqueness_pipeline(&ClosedForm::constant(0.0), n, 0, &problem, &PipelineSettings::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::BulkForcedToZero);
        assert!(rep.terms.iter().all(|t| t.vanishing));
        assert_eq!(rep.verdict.label(), "bulk forced to 0");
    }

    #[test]
    fn linear_weights_reject_beta_below_p() {
        assert!(Problem::linear_weights(0.5, 1.0).is_err());
        let w = Problem::linear_weights(2.0, 0.5).unwrap();
        assert_eq!((w.a, w.b, w.p), (0.625, 0.09375, 0.5));
    }

    #[test]
    fn vanishing_field_is_mostly_masked() {
        let g = battery_grid(17).unwrap();
        let err = induced_potential(&ScalarField::zeros(&g), 1e-12, 1.0, 1.0, 0.5, DiffMode::Analytic).unwrap_err();
        assert!(matches!(err, LabError::MostlyMasked { .. }));
    }
}
