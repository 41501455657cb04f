//! The pointwise divergence identity and the inequality it implies.

use ndarray::Array2;
use serde::Serialize;

use crate::currents::{bulk_at, current_from_derivs, current_jet, divergence_exact, HalfGSign};
use crate::error::{LabError, Result};
use crate::fields::{
    box_from_jet, derivatives, interior_sup, ClosedForm, DiffMode, FdOrder, GridSpec, NonlinearityU, ScalarField,
    INTERIOR_MARGIN,
};
use crate::scalar::{Jet, Scalar};
use crate::verifier::{CheckRecord, Convergence, Status};
use crate::weights::{gh, Reparametrization, WeightAt};

/// Both sides of the identity at every node.
#[derive(Clone, Debug)]
pub struct IdentityTerms {
    /// `L psi * S_* psi`.
    pub lhs: Array2<f64>,
    /// `2F' |S_* psi|^2 + (f F' G + H) psi^2 + B + div P`.
    pub rhs: Array2<f64>,
    pub residual: Array2<f64>,
    /// `|F'|^{-1}|L psi|^2/8 - (f|F'|G - H) psi^2 + B + div P`; meaningful where `F' < 0`.
    pub margin: Array2<f64>,
    /// `F'` per `s` row.
    pub fprime: Vec<f64>,
    /// Size of the largest term, for relative floors.
    pub scale: f64,
}

struct NodeTerms {
    lhs: f64,
    rhs: f64,
    margin: f64,
    scale: f64,
}

#[allow(clippy::too_many_arguments)]
fn node_terms(
    f: f64,
    w: &WeightAt<f64>,
    gh: (f64, f64),
    l: f64,
    s_star: f64,
    psi: f64,
    bulk: f64,
    div: f64,
) -> NodeTerms {
    let (g, h) = gh;
    let fp = w.fp;
    let sq = 2.0 * fp * s_star * s_star;
    let zero = (f * fp * g + h) * psi * psi;
    let lhs = l * s_star;
    let rhs = sq + zero + bulk + div;
    let margin = l * l / (8.0 * fp.abs()) - (f * fp.abs() * g - h) * psi * psi + bulk + div;
    let scale = [lhs, sq, zero, bulk, div].iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    NodeTerms { lhs, rhs, margin, scale }
}

/// Evaluates the identity on the field's grid with derivatives from `mode`.
pub fn identity_terms(
    field: &ScalarField,
    rep: &Reparametrization,
    nl: &NonlinearityU,
    mode: DiffMode,
    sign: HalfGSign,
) -> Result<IdentityTerms> {
    let g = field.grid();
    nl.check_mode(g.ell())?;
    let d = derivatives(field, mode)?;
    let order = match mode {
        DiffMode::FiniteDifference(o) => o,
        DiffMode::Analytic => FdOrder::Fourth,
    };
    let div = current_from_derivs(g, &d, rep, nl, sign)?.divergence(order);
    let n = g.dimension().as_f64();
    let rows: Vec<(f64, WeightAt<f64>, (f64, f64))> = (0..g.ns())
        .map(|i| {
            let f = g.s(i).exp();
            Ok((f, rep.at(f)?, gh(rep, f)?))
        })
        .collect::<Result<_>>()?;
    let nodes = g.map_nodes(|i, j| {
        let (f, w, ghv) = &rows[i];
        let p = g.point(i, j);
        let phi = d.phi[[i, j]];
        let e = (-w.big_f).exp();
        let uv = nl.values(p, phi);
        let sphi = 0.5 * (p.u * d.phi_u[[i, j]] + p.v * d.phi_v[[i, j]]);
        let c1 = (n - 1.0) / 4.0 - f * w.fp;
        let l = e * (d.box_phi[[i, j]] + uv.udot);
        let s_star = e * (sphi + c1 * phi);
        let bulk = bulk_at(p, phi, w, nl, n);
        node_terms(*f, w, *ghv, l, s_star, e * phi, bulk, div[[i, j]])
    });
    Ok(assemble(g, &nodes, rows.iter().map(|r| r.1.fp).collect()))
}

fn assemble(g: &GridSpec, nodes: &[NodeTerms], fprime: Vec<f64>) -> IdentityTerms {
    let pick = |sel: &dyn Fn(&NodeTerms) -> f64| {
        Array2::from_shape_vec(g.shape(), nodes.iter().map(sel).collect()).expect("shape")
    };
    let lhs = pick(&|t| t.lhs);
    let rhs = pick(&|t| t.rhs);
    let residual = &lhs - &rhs;
    IdentityTerms {
        lhs,
        rhs,
        residual,
        margin: pick(&|t| t.margin),
        fprime,
        scale: nodes.iter().fold(0.0_f64, |m, t| m.max(t.scale)),
    }
}

/// Evaluates the identity exactly through jets of a closed-form field.
pub fn identity_terms_exact(
    cf: &ClosedForm,
    grid: &GridSpec,
    rep: &Reparametrization,
    nl: &NonlinearityU,
    sign: HalfGSign,
) -> Result<IdentityTerms> {
    nl.check_mode(grid.ell())?;
    let n = grid.dimension();
    let nn = n.as_f64();
    let lambda = grid.lambda();
    let rows: Vec<(f64, WeightAt<f64>, (f64, f64))> = (0..grid.ns())
        .map(|i| {
            let f = grid.s(i).exp();
            Ok((f, rep.at(f)?, gh(rep, f)?))
        })
        .collect::<Result<_>>()?;
    let nodes = grid.map_nodes(|i, j| -> Result<NodeTerms> {
        let (f, w, ghv) = &rows[i];
        let p = grid.point(i, j);
        let jet = cf.eval(Jet::variable(0, p.u), Jet::variable(1, p.v));
        let phi = jet.value();
        let e = (-w.big_f).exp();
        let uv = nl.values(p, phi);
        let sphi = 0.5 * (p.u * jet.d0() + p.v * jet.d1());
        let c1 = (nn - 1.0) / 4.0 - f * w.fp;
        let l = e * (box_from_jet(&jet, p, n, lambda) + uv.udot);
        let s_star = e * (sphi + c1 * phi);
        let bulk = bulk_at(p, phi, w, nl, nn);
        let (pu, pv) = current_jet(cf, p, rep, nl, n, lambda, sign)?;
        let div = divergence_exact(&pu, &pv, p, n);
        Ok(node_terms(*f, w, *ghv, l, s_star, e * phi, bulk, div))
    });
    let nodes: Vec<NodeTerms> = nodes.into_iter().collect::<Result<_>>()?;
    Ok(assemble(grid, &nodes, rows.iter().map(|r| r.1.fp).collect()))
}

/// Sup of the identity residual over interior nodes.
pub fn identity_residual(field: &ScalarField, rep: &Reparametrization, nl: &NonlinearityU, mode: DiffMode) -> Result<f64> {
    let t = identity_terms(field, rep, nl, mode, HalfGSign::Derived)?;
    Ok(interior_sup(&t.residual, INTERIOR_MARGIN))
}

/// Sup of the exact identity residual over all nodes.
pub fn identity_residual_exact(
    cf: &ClosedForm,
    grid: &GridSpec,
    rep: &Reparametrization,
    nl: &NonlinearityU,
    sign: HalfGSign,
) -> Result<f64> {
    let t = identity_terms_exact(cf, grid, rep, nl, sign)?;
    Ok(interior_sup(&t.residual, 0))
}

/// Relative noise floor below which residuals count as round-off.
pub const RESIDUAL_FLOOR: f64 = 1e-11;

/// Identity residual under repeated refinement of `base`.
pub fn identity_convergence(
    build: &(dyn Fn(&GridSpec) -> Result<ScalarField> + Sync),
    base: &GridSpec,
    levels: usize,
    rep: &Reparametrization,
    nl: &NonlinearityU,
    mode: DiffMode,
) -> Result<Convergence> {
    let mut grid = base.clone();
    let mut spacings = Vec::with_capacity(levels);
    let mut errors = Vec::with_capacity(levels);
    let mut scale = 0.0_f64;
    for k in 0..levels {
        if k > 0 {
            grid = grid.refined();
        }
        let field = build(&grid)?;
        let t = identity_terms(&field, rep, nl, mode, HalfGSign::Derived)?;
        scale = scale.max(t.scale);
        spacings.push(grid.ds().max(grid.dy()));
        errors.push(interior_sup(&t.residual, INTERIOR_MARGIN));
    }
    Ok(Convergence::fit(spacings, errors, RESIDUAL_FLOOR * scale.max(1.0)))
}

/// Minimum pointwise margin of the inequality, judged against the identity residual.
///
/// Passes iff the margin is at least `-2` times the sup residual.
pub fn pointwise_inequality(
    name: &str,
    field: &ScalarField,
    rep: &Reparametrization,
    nl: &NonlinearityU,
    mode: DiffMode,
) -> Result<CheckRecord> {
    let g = field.grid();
    for i in 0..g.ns() {
        let f = g.s(i).exp();
        let fp = rep.at(f)?.fp;
        if !(fp < 0.0) {
            return Err(LabError::NotInwardDirected { f, fp });
        }
    }
    let t = identity_terms(field, rep, nl, mode, HalfGSign::Derived)?;
    let res = interior_sup(&t.residual, INTERIOR_MARGIN);
    let m = INTERIOR_MARGIN;
    let (ns, ny) = g.shape();
    let mut min_margin = f64::INFINITY;
    let mut violations = 0usize;
    let allowance = 2.0 * res + 1e-14 * t.scale;
    for i in m..ns.saturating_sub(m) {
        for j in m..ny.saturating_sub(m) {
            let x = t.margin[[i, j]];
            min_margin = min_margin.min(x);
            if x < -allowance {
                violations += 1;
            }
        }
    }
    if !min_margin.is_finite() {
        min_margin = 0.0;
    }
    Ok(CheckRecord::inequality(name, -min_margin, 0.0, allowance)
        .with_detail("min_margin", min_margin)
        .with_detail("identity_residual", res)
        .with_detail("violating_nodes", violations as f64)
        .with_detail("scale", t.scale))
}

/// Exact identity residual under both conventions for the sign of `G/2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HalfGComparison {
    pub derived: f64,
    pub expansion: f64,
}

pub fn half_g_comparison(
    cf: &ClosedForm,
    grid: &GridSpec,
    rep: &Reparametrization,
    nl: &NonlinearityU,
) -> Result<HalfGComparison> {
    Ok(HalfGComparison {
        derived: identity_residual_exact(cf, grid, rep, nl, HalfGSign::Derived)?,
        expansion: identity_residual_exact(cf, grid, rep, nl, HalfGSign::Expansion)?,
    })
}

/// Record for a refinement study of the identity residual.
///
/// Passes when the fitted order lies in `order_range`, or when the residual
/// never leaves the round-off floor.
pub fn convergence_record(name: &str, conv: &Convergence, order_range: (f64, f64), finest_tol: Option<f64>) -> CheckRecord {
    let finest = conv.finest();
    let order_ok = match conv.order {
        Some(o) => conv.below_floor() || (o >= order_range.0 && o <= order_range.1),
        None => true,
    };
    let finest_ok = finest_tol.is_none_or(|tol| finest <= tol);
    let status = Status::from_bool(order_ok && finest_ok);
    CheckRecord::inequality(name, finest, finest_tol.unwrap_or(f64::INFINITY), 0.0)
        .with_order(conv.order)
        .with_status(status)
        .with_detail("floor", conv.floor)
        .with_series(conv.series())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dimension;
    use crate::verifier::battery::{battery_grid, battery_weights, gaussian_bump, split_params};
    use crate::verifier::Status;
    use crate::weights::Potential;

    fn small_grid() -> GridSpec {
        GridSpec::new(Dimension::new(3).unwrap(), 0, (0.2, 5.0), 17, (0.2, 5.0), 17).unwrap()
    }

    #[test]
    fn zero_field_has_zero_terms() {
        let g = small_grid();
        let phi = ScalarField::zeros(&g);
        for rep in battery_weights() {
            let t = identity_terms(&phi, &rep, &NonlinearityU::Zero, DiffMode::default(), HalfGSign::Derived).unwrap();
            assert!(t.residual.iter().all(|x| *x == 0.0));
            assert!(t.margin.iter().all(|x| *x == 0.0));
            let rec = pointwise_inequality("zero", &phi, &rep, &NonlinearityU::Zero, DiffMode::default()).unwrap();
            assert!(rec.passed());
        }
    }

    #[test]
    fn psi_one_residual_is_round_off() {
        let g = small_grid();
        for rep in battery_weights() {
            let cf = rep.closed_form_exp_minus(-1.0).unwrap();
            let t = identity_terms_exact(&cf, &g, &rep, &NonlinearityU::Zero, HalfGSign::Derived).unwrap();
            let res = interior_sup(&t.residual, 0);
            assert!(res < 1e-9 * t.scale.max(1.0), "{}: {res}", rep.label());
        }
    }

    #[test]
    fn only_the_derived_half_g_sign_closes_the_identity() {
        let g = small_grid().with_ell(1);
        let nl = NonlinearityU::Power { sign: crate::fields::Sign::Plus, p: 1.0, v: Potential::constant(1.0) };
        let rep = Reparametrization::SplitLow(split_params());
        let c = half_g_comparison(&gaussian_bump(3), &g, &rep, &nl).unwrap();
        assert!(c.derived < 1e-10, "{c:?}");
        assert!(c.expansion > 1e-4, "{c:?}");
    }

    #[test]
    fn fd_convergence_on_a_bump_is_fourth_order() {
        let base = battery_grid(33).unwrap().with_ell(1);
        let rep = Reparametrization::PowerLog { a: 1.0 };
        let build = |g: &GridSpec| Ok(ScalarField::from_closed_form(g, gaussian_bump(7)));
        let conv = identity_convergence(&build, &base, 3, &rep, &NonlinearityU::Zero, DiffMode::default()).unwrap();
        let order = conv.order.unwrap();
        assert!((3.0..=4.8).contains(&order), "{conv:?}");
        let rec = convergence_record("bump", &conv, (1.5, 4.5), None);
        assert_eq!(rec.status, Status::from_bool(order <= 4.5));
    }

    #[test]
    fn outward_weight_is_rejected() {
        let g = small_grid();
        let phi = ScalarField::zeros(&g);
        let rep = Reparametrization::PowerLog { a: -1.0 };
        let err = pointwise_inequality("x", &phi, &rep, &NonlinearityU::Zero, DiffMode::default()).unwrap_err();
        assert!(matches!(err, LabError::NotInwardDirected { .. }));
    }
}
