//! Integrated Carleman estimates on grid-aligned admissible regions.

use ndarray::Array2;
use serde::Serialize;

use crate::currents::{current_from_derivs, HalfGSign};
use crate::error::{LabError, Result};
use crate::fields::{derivatives, DiffMode, FdOrder, NonlinearityU, ScalarField, Sign};
use crate::geometry::AdmissibleRegion;
use crate::quadrature::{boundary_sum, integrate_bulk_grid, BoundaryTerms, GridRegion};
use crate::verifier::identity::identity_terms;
use crate::weights::{gamma_v, gh, Branch, Potential, Reparametrization, SplitParams};

/// Constant in front of the zero-order bulk that the weight bounds deliver.
pub const PROOF_C: f64 = 1.0;

/// Constant in front of the wave-operator bulk that the weight bounds deliver.
pub fn proof_k() -> f64 {
    std::f64::consts::E.powi(2) / 4.0
}

fn order_of(mode: DiffMode) -> FdOrder {
    match mode {
        DiffMode::FiniteDifference(o) => o,
        DiffMode::Analytic => FdOrder::Fourth,
    }
}

/// One half of the split estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SideReport {
    pub region: AdmissibleRegion,
    /// `b^2 p int f^{2(a-+b)} f^{+-p-1} phi^2`.
    pub lhs: f64,
    /// `a^{-1} int f^{2(a-+b)} f |box phi|^2`.
    pub box_term: f64,
    pub boundary: BoundaryTerms,
    /// `int e^{-2F}(f|F'|G - H) phi^2`.
    pub raw_lhs: f64,
    /// `int e^{-2F}|F'|^{-1}|box phi|^2 / 8` plus the boundary flux.
    pub raw_rhs: f64,
    /// Integrated identity residual plus divergence-theorem mismatch.
    pub tolerance: f64,
    /// `K box + boundary - C lhs` with the proof constants.
    pub margin: f64,
    pub raw_margin: f64,
    /// `(K box + boundary) / lhs`, the largest admissible `C` at the proof `K`.
    pub c_max: Option<f64>,
    /// `(C lhs - boundary) / box`, the smallest admissible `K` at the proof `C`.
    pub k_min: Option<f64>,
}

impl SideReport {
    pub fn holds(&self) -> bool {
        self.margin >= -self.tolerance && self.raw_margin >= -self.tolerance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitCarlemanReport {
    pub low: SideReport,
    pub high: SideReport,
    /// Flux of `P^-` and `P^+` through `f = 1`.
    pub flux_at_one: (f64, f64),
    pub cancellation: f64,
    pub c_max: Option<f64>,
    pub k_min: Option<f64>,
    /// `sup |V| / m(f)` with `m = min(f^{(p-2)/2}, f^{-(p+2)/2})`, for a field solving `box phi + V phi = 0`.
    pub b_field: Option<f64>,
    /// Largest such constant the proof constants can absorb, `b sqrt(C a p / K)`.
    pub b_admissible: f64,
}

impl SplitCarlemanReport {
    pub fn holds(&self) -> bool {
        self.low.holds() && self.high.holds()
    }

    /// Whether the potential bound lets the wave-operator bulk be absorbed.
    pub fn absorbed(&self) -> Option<bool> {
        self.b_field.map(|b| b <= self.b_admissible)
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    if den.abs() > 1e-300 && num.is_finite() {
        Some(num / den)
    } else {
        None
    }
}

/// Checks both halves of the split estimate on `region`, cut at `f = 1`.
///
/// The field's grid must contain `region` with `rho`, `1`, `omega`, `sigma`
/// and `tau` on nodes. If the field solves `box phi + V phi = 0`, passing `V`
/// reports how its size compares with what the estimate can absorb.
pub fn carleman_split_check(
    field: &ScalarField,
    params: SplitParams,
    region: &AdmissibleRegion,
    potential: Option<&Potential>,
    mode: DiffMode,
) -> Result<SplitCarlemanReport> {
    crate::weights::validate_params(params.a, params.b, params.p)?;
    if !(region.rho < 1.0 && region.omega > 1.0) {
        return Err(LabError::RegionMismatch(format!(
            "split regions need rho < 1 < omega, got ({}, {})",
            region.rho, region.omega
        )));
    }
    let (low_region, high_region) = region.split_at(1.0)?;
    let g = field.grid();
    GridRegion::locate(g, region)?;
    let d = derivatives(field, mode)?;
    let nl = NonlinearityU::Zero;
    let SplitParams { a, b, p } = params;
    let k = proof_k();

    let side = |branch: Branch, sub: &AdmissibleRegion| -> Result<SideReport> {
        let rep = match branch {
            Branch::Low => Reparametrization::SplitLow(params),
            Branch::High => Reparametrization::SplitHigh(params),
        };
        let (exp_w, exp_p) = match branch {
            Branch::Low => (2.0 * (a - b), p - 1.0),
            Branch::High => (2.0 * (a + b), -p - 1.0),
        };
        let cur = current_from_derivs(g, &d, &rep, &nl, HalfGSign::Derived)?;
        let boundary = boundary_sum(&cur, sub)?;
        let bnd = boundary.total();
        let div = cur.divergence(order_of(mode));
        let div_mismatch = (integrate_bulk_grid(&div, g, sub)? - bnd).abs();
        let terms = identity_terms(field, &rep, &nl, mode, HalfGSign::Derived)?;
        let res_abs = terms.residual.mapv(f64::abs);
        let tolerance = integrate_bulk_grid(&res_abs, g, sub)? + div_mismatch;

        let mut lhs_d = Array2::zeros(g.shape());
        let mut box_d = Array2::zeros(g.shape());
        let mut raw_l = Array2::zeros(g.shape());
        let mut raw_r = Array2::zeros(g.shape());
        for i in 0..g.ns() {
            let f = g.s(i).exp();
            let w = rep.at(f)?;
            let (gg, hh) = gh(&rep, f)?;
            let fw = f.powf(exp_w);
            for j in 0..g.ny() {
                let phi = d.phi[[i, j]];
                let bx = d.box_phi[[i, j]];
                lhs_d[[i, j]] = b * b * p * fw * f.powf(exp_p) * phi * phi;
                box_d[[i, j]] = fw * f * bx * bx / a;
                raw_l[[i, j]] = w.e2f * (f * w.fp.abs() * gg - hh) * phi * phi;
                raw_r[[i, j]] = w.e2f * bx * bx / (8.0 * w.fp.abs());
            }
        }
        let lhs = integrate_bulk_grid(&lhs_d, g, sub)?;
        let box_term = integrate_bulk_grid(&box_d, g, sub)?;
        let raw_lhs = integrate_bulk_grid(&raw_l, g, sub)?;
        let raw_rhs = integrate_bulk_grid(&raw_r, g, sub)? + bnd;
        Ok(SideReport {
            region: *sub,
            lhs,
            box_term,
            boundary,
            raw_lhs,
            raw_rhs,
            tolerance,
            margin: k * box_term + bnd - PROOF_C * lhs,
            raw_margin: raw_rhs - raw_lhs,
            c_max: ratio(k * box_term + bnd, lhs),
            k_min: ratio(PROOF_C * lhs - bnd, box_term),
        })
    };
    let low = side(Branch::Low, &low_region)?;
    let high = side(Branch::High, &high_region)?;
    let flux_at_one = (low.boundary.outer, high.boundary.inner);
    let cancellation = (flux_at_one.0 - flux_at_one.1).abs();
    let bnd = low.boundary.total() + high.boundary.total();
    let c_max = ratio(k * (low.box_term + high.box_term) + bnd, low.lhs + high.lhs);
    let k_min = ratio(PROOF_C * (low.lhs + high.lhs) - bnd, low.box_term + high.box_term);

    let gr = GridRegion::locate(g, region)?;
    let b_field = potential.map(|v| {
        let mut sup = 0.0_f64;
        for i in gr.i0..=gr.i1 {
            let f = g.s(i).exp();
            let m = f.powf((p - 2.0) / 2.0).min(f.powf(-(p + 2.0) / 2.0));
            for j in gr.j0..=gr.j1 {
                sup = sup.max(v.value_at(g.point(i, j)).abs() / m);
            }
        }
        sup
    });
    Ok(SplitCarlemanReport {
        low,
        high,
        flux_at_one,
        cancellation,
        c_max,
        k_min,
        b_field,
        b_admissible: b * (PROOF_C * a * p / k).sqrt(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NlCarlemanReport {
    /// Range of `+-Gamma_V` over the region's nodes.
    pub gamma_range: (f64, f64),
    /// `int -B`, i.e. `+-(1/(p+1)) int f^{2a} V Gamma_V |phi|^{p+1}`.
    pub lhs: f64,
    /// The same bulk evaluated from the closed formula in `Gamma_V`.
    pub lhs_formula: f64,
    /// `(1/(8a)) int f^{2a} f |box_V phi|^2`.
    pub box_term: f64,
    pub boundary: BoundaryTerms,
    pub tolerance: f64,
    /// `box_term + boundary - lhs`.
    pub margin: f64,
}

impl NlCarlemanReport {
    pub fn holds(&self) -> bool {
        self.margin >= -self.tolerance
    }

    /// Whether the bulk has the sign the estimate needs.
    pub fn coercive(&self) -> bool {
        self.gamma_range.0 > 0.0
    }
}

/// Checks the nonlinear estimate with `F = -a log f` on a grid-aligned region.
pub fn carleman_nl_check(
    field: &ScalarField,
    a: f64,
    sign: Sign,
    p: f64,
    v: &Potential,
    region: &AdmissibleRegion,
    mode: DiffMode,
) -> Result<NlCarlemanReport> {
    if !(a > 0.0) {
        return Err(LabError::InvalidWeightParams { condition: format!("a = {a} must be positive") });
    }
    let g = field.grid();
    let nl = NonlinearityU::Power { sign, p, v: v.clone() };
    nl.check_mode(g.ell())?;
    let gr = GridRegion::locate(g, region)?;
    let n = g.dimension();
    let s = sign.value();
    let mut gmin = f64::INFINITY;
    let mut gmax = f64::NEG_INFINITY;
    let mut gamma = Array2::zeros(g.shape());
    for i in 0..g.ns() {
        for j in 0..g.ny() {
            let x = s * gamma_v(v, a, p, g.point(i, j), n)?;
            gamma[[i, j]] = x;
            if (gr.i0..=gr.i1).contains(&i) && (gr.j0..=gr.j1).contains(&j) {
                gmin = gmin.min(x);
                gmax = gmax.max(x);
            }
        }
    }
    if gmin < 0.0 && gmax > 0.0 {
        return Err(LabError::GammaSignIndefinite { min: gmin, max: gmax });
    }
    let rep = Reparametrization::PowerLog { a };
    let d = derivatives(field, mode)?;
    let cur = current_from_derivs(g, &d, &rep, &nl, HalfGSign::Derived)?;
    let boundary = boundary_sum(&cur, region)?;
    let bnd = boundary.total();
    let div = cur.divergence(order_of(mode));
    let div_mismatch = (integrate_bulk_grid(&div, g, region)? - bnd).abs();
    let terms = identity_terms(field, &rep, &nl, mode, HalfGSign::Derived)?;
    let tolerance = integrate_bulk_grid(&terms.residual.mapv(f64::abs), g, region)? + div_mismatch;

    let nn = n.as_f64();
    let mut minus_b = Array2::zeros(g.shape());
    let mut formula = Array2::zeros(g.shape());
    let mut box_d = Array2::zeros(g.shape());
    for i in 0..g.ns() {
        let f = g.s(i).exp();
        let w = rep.at(f)?;
        let fw = f.powf(2.0 * a);
        for j in 0..g.ny() {
            let q = g.point(i, j);
            let phi = d.phi[[i, j]];
            let uv = nl.values(q, phi);
            minus_b[[i, j]] = -crate::currents::bulk_at(q, phi, &w, &nl, nn);
            formula[[i, j]] = fw * v.value_at(q) * gamma[[i, j]] * phi.abs().powf(p + 1.0) / (p + 1.0);
            let bv = d.box_phi[[i, j]] + uv.udot;
            box_d[[i, j]] = fw * f * bv * bv / (8.0 * a);
        }
    }
    let lhs = integrate_bulk_grid(&minus_b, g, region)?;
    let box_term = integrate_bulk_grid(&box_d, g, region)?;
    Ok(NlCarlemanReport {
        gamma_range: (gmin, gmax),
        lhs,
        lhs_formula: integrate_bulk_grid(&formula, g, region)?,
        box_term,
        boundary,
        tolerance,
        margin: box_term + bnd - lhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ClosedForm;
    use crate::scalar::Scalar;
    use crate::verifier::battery::{battery_grid, battery_region, gaussian_bump, split_params};

    #[test]
    fn flux_through_one_cancels() {
        let g = battery_grid(33).unwrap().with_ell(1);
        let phi = ScalarField::from_closed_form(&g, gaussian_bump(7));
        let rep = carleman_split_check(&phi, split_params(), &battery_region(), None, DiffMode::default()).unwrap();
        assert!(rep.cancellation <= 1e-12 * rep.flux_at_one.0.abs().max(1.0), "{:?}", rep.flux_at_one);
        assert!(rep.holds());
        assert_eq!(rep.absorbed(), None);
    }

    #[test]
    fn region_must_straddle_one() {
        let g = battery_grid(17).unwrap();
        let phi = ScalarField::zeros(&g);
        let r = AdmissibleRegion::new(1.0, 10.0, 0.1, 10.0).unwrap();
        assert!(matches!(
            carleman_split_check(&phi, split_params(), &r, None, DiffMode::default()),
            Err(LabError::RegionMismatch(_))
        ));
    }

    #[test]
    fn indefinite_gamma_is_rejected() {
        // V = e^{1-f} at p = 1 gives Gamma_V = 1 - f
        let g = battery_grid(17).unwrap();
        let phi = ScalarField::zeros(&g);
        let v = Potential::new("exp(1-f)", ClosedForm::new(|u, v| (u * v + 1.0).exp()));
        let err = carleman_nl_check(&phi, 0.1, Sign::Plus, 1.0, &v, &battery_region(), DiffMode::default()).unwrap_err();
        assert!(matches!(err, LabError::GammaSignIndefinite { .. }), "{err:?}");
    }

    #[test]
    fn proof_constants() {
        assert_eq!(PROOF_C, 1.0);
        assert!((proof_k() - 1.847_264_024_732_662_5).abs() < 1e-15);
    }
}
