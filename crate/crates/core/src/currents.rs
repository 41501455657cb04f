//! The weighted current `P^F` and the bulk term `B_U^F`.
//!
//! Components are covariant, `P = P_u du + P_v dv`, and are averaged over the
//! sphere against the normalised harmonic of the field's mode. All formulas
//! are generic over [`Scalar`] so that the same code yields pointwise values
//! on a grid and exact jets for closed-form fields.

use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{derivatives, fd_first, ClosedForm, DiffMode, FdOrder, FieldDerivs, GridSpec, NonlinearityU, ScalarField, Sign};
use crate::geometry::{Dimension, SpacetimePoint};
use crate::scalar::{Jet, Scalar};
use crate::weights::{Branch, Potential, Reparametrization, SplitParams, WeightAt};

/// Which sign the `G/2` term of the zero-order coefficient carries.
///
/// `Derived` follows from the conjugated operator and closes the divergence
/// identity. `Expansion` flips it, matching an alternative expansion of the
/// flux through the hyperboloids; it is kept to show that it does not close.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum HalfGSign {
    #[default]
    Derived,
    Expansion,
}

/// Field data at a point.
#[derive(Clone, Copy, Debug)]
pub struct PointState<T> {
    pub u: T,
    pub v: T,
    pub phi: T,
    pub phi_u: T,
    pub phi_v: T,
}

/// `(P_u, P_v)` at a point; `u_val` is `U(Q, phi(Q))`.
pub fn current_at<T: Scalar>(st: &PointState<T>, w: &WeightAt<T>, u_val: T, n: f64, lambda: f64, sign: HalfGSign) -> (T, T) {
    let PointState { u, v, phi, phi_u, phi_v } = *st;
    let q = (n - 1.0) / 4.0;
    let f = -(u * v);
    let r = v - u;
    let sphi = (u * phi_u + v * phi_v) * 0.5;
    let grad2 = -(phi_u * phi_v) + phi * phi * lambda / (r * r);
    let ffp = f * w.fp;
    let c1 = -ffp + q;
    let half_g = match sign {
        HalfGSign::Derived => w.g * -0.5,
        HalfGSign::Expansion => w.g * 0.5,
    };
    let c2 = (ffp - q) * w.fp + half_g;
    let phi2 = phi * phi;
    let comp = |dphi: T, df: T| w.e2f * (sphi * dphi - df * grad2 * 0.5 + df * u_val + c1 * phi * dphi + c2 * df * phi2);
    (comp(phi_u, -v), comp(phi_v, -u))
}

/// `B_U^F` at a point.
pub fn bulk_at(p: SpacetimePoint, phi: f64, w: &WeightAt<f64>, nl: &NonlinearityU, n: f64) -> f64 {
    let uv = nl.values(p, phi);
    let ffp = p.f() * w.fp;
    w.e2f * (((n - 1.0) / 4.0 - ffp) * uv.udot * phi - uv.su - 2.0 * ((n + 1.0) / 4.0 - ffp) * uv.u)
}

/// `P . grad f` from covariant components.
pub fn contract_f(p: SpacetimePoint, pu: f64, pv: f64) -> f64 {
    0.5 * (p.u * pu + p.v * pv)
}

/// `u^2 P . grad h` from covariant components.
pub fn contract_h(p: SpacetimePoint, pu: f64, pv: f64) -> f64 {
    0.5 * (p.u * pu - p.v * pv)
}

/// A current sampled on a grid.
#[derive(Clone, Debug)]
pub struct CurrentField {
    grid: GridSpec,
    pub p_u: Array2<f64>,
    pub p_v: Array2<f64>,
}

impl CurrentField {
    pub fn new(grid: &GridSpec, p_u: Array2<f64>, p_v: Array2<f64>) -> Result<Self> {
        if p_u.dim() != grid.shape() || p_v.dim() != grid.shape() {
            return Err(LabError::InvalidInput("current components do not match the grid".into()));
        }
        Ok(CurrentField { grid: grid.clone(), p_u, p_v })
    }

    /// Samples a current given pointwise.
    pub fn from_fn(grid: &GridSpec, g: impl Fn(SpacetimePoint) -> (f64, f64) + Sync) -> Self {
        let data = grid.map_nodes(|i, j| g(grid.point(i, j)));
        let p_u = Array2::from_shape_vec(grid.shape(), data.iter().map(|x| x.0).collect()).expect("shape");
        let p_v = Array2::from_shape_vec(grid.shape(), data.iter().map(|x| x.1).collect()).expect("shape");
        CurrentField { grid: grid.clone(), p_u, p_v }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `(P . grad f, u^2 P . grad h)` at every node.
    pub fn contract(&self) -> (Array2<f64>, Array2<f64>) {
        let g = &self.grid;
        let pf = g.array(|i, j| contract_f(g.point(i, j), self.p_u[[i, j]], self.p_v[[i, j]]));
        let ph = g.array(|i, j| contract_h(g.point(i, j), self.p_u[[i, j]], self.p_v[[i, j]]));
        (pf, ph)
    }

    /// Divergence from the null-coordinate formula, differencing in `(s, y)`.
    pub fn divergence(&self, order: FdOrder) -> Array2<f64> {
        let g = &self.grid;
        let nm1 = g.dimension().as_f64() - 1.0;
        let rn = g.array(|i, j| g.point(i, j).r().powf(nm1));
        let qu = &self.p_u * &rn;
        let qv = &self.p_v * &rn;
        let (ds, dy) = (g.ds(), g.dy());
        let qv_s = fd_first(&qv, 0, ds, order);
        let qv_y = fd_first(&qv, 1, dy, order);
        let qu_s = fd_first(&qu, 0, ds, order);
        let qu_y = fd_first(&qu, 1, dy, order);
        g.array(|i, j| {
            let p = g.point(i, j);
            let du_qv = (qv_s[[i, j]] - qv_y[[i, j]]) / p.u;
            let dv_qu = (qu_s[[i, j]] + qu_y[[i, j]]) / p.v;
            -(du_qv + dv_qu) / (2.0 * rn[[i, j]])
        })
    }

    /// Writes `u,v,P_u,P_v` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["u", "v", "P_u", "P_v"])?;
        for i in 0..self.grid.ns() {
            for j in 0..self.grid.ny() {
                let p = self.grid.point(i, j);
                let row = [p.u, p.v, self.p_u[[i, j]], self.p_v[[i, j]]];
                wr.write_record(row.iter().map(|x| format!("{x:e}")))?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Current from precomputed field derivatives.
pub fn current_from_derivs(
    grid: &GridSpec,
    d: &FieldDerivs,
    rep: &Reparametrization,
    nl: &NonlinearityU,
    sign: HalfGSign,
) -> Result<CurrentField> {
    nl.check_mode(grid.ell())?;
    let n = grid.dimension().as_f64();
    let lambda = grid.lambda();
    let weights: Vec<WeightAt<f64>> = (0..grid.ns()).map(|i| rep.at(grid.s(i).exp())).collect::<Result<_>>()?;
    Ok(CurrentField::from_fn(grid, |_| (0.0, 0.0)).with_nodes(|i, j| {
        let p = grid.point(i, j);
        let st = PointState { u: p.u, v: p.v, phi: d.phi[[i, j]], phi_u: d.phi_u[[i, j]], phi_v: d.phi_v[[i, j]] };
        let uval = nl.values(p, st.phi).u;
        current_at(&st, &weights[i], uval, n, lambda, sign)
    }))
}

impl CurrentField {
    fn with_nodes(mut self, g: impl Fn(usize, usize) -> (f64, f64) + Sync) -> Self {
        let data = self.grid.map_nodes(&g);
        self.p_u = Array2::from_shape_vec(self.grid.shape(), data.iter().map(|x| x.0).collect()).expect("shape");
        self.p_v = Array2::from_shape_vec(self.grid.shape(), data.iter().map(|x| x.1).collect()).expect("shape");
        self
    }
}

/// `P^F` for an arbitrary weight and nonlinearity.
pub fn current_general(field: &ScalarField, rep: &Reparametrization, nl: &NonlinearityU, mode: DiffMode) -> Result<CurrentField> {
    let d = derivatives(field, mode)?;
    current_from_derivs(field.grid(), &d, rep, nl, HalfGSign::Derived)
}

/// `P^-` or `P^+` of the split weight; the grid must lie on the branch's side of `f = 1`.
pub fn current_split(field: &ScalarField, params: SplitParams, branch: Branch, mode: DiffMode) -> Result<CurrentField> {
    let reg = field.grid().region();
    let tol = 1e-12;
    match branch {
        Branch::Low if reg.omega > 1.0 + tol => {
            return Err(LabError::RangeMismatch(format!("low branch on a grid reaching f = {}", reg.omega)))
        }
        Branch::High if reg.rho < 1.0 - tol => {
            return Err(LabError::RangeMismatch(format!("high branch on a grid reaching f = {}", reg.rho)))
        }
        _ => {}
    }
    current_general(field, &split_rep(params, branch), &NonlinearityU::Zero, mode)
}

pub fn split_rep(params: SplitParams, branch: Branch) -> Reparametrization {
    match branch {
        Branch::Low => Reparametrization::SplitLow(params),
        Branch::High => Reparametrization::SplitHigh(params),
    }
}

/// `P^{+-V}` with the weight `F = -a log f`.
pub fn current_nl(field: &ScalarField, a: f64, sign: Sign, p: f64, v: &Potential, mode: DiffMode) -> Result<CurrentField> {
    let nl = NonlinearityU::Power { sign, p, v: v.clone() };
    current_general(field, &Reparametrization::PowerLog { a }, &nl, mode)
}

/// `B_U^F` at every node.
pub fn bulk_b(field: &ScalarField, rep: &Reparametrization, nl: &NonlinearityU) -> Result<ScalarField> {
    let g = field.grid();
    nl.check_mode(g.ell())?;
    let n = g.dimension().as_f64();
    let weights: Vec<WeightAt<f64>> = (0..g.ns()).map(|i| rep.at(g.s(i).exp())).collect::<Result<_>>()?;
    ScalarField::from_values(g, g.array(|i, j| bulk_at(g.point(i, j), field.value(i, j), &weights[i], nl, n)))
}

/// Exact current jets (valid to first order) for a closed-form field.
pub fn current_jet(
    cf: &ClosedForm,
    p: SpacetimePoint,
    rep: &Reparametrization,
    nl: &NonlinearityU,
    n: Dimension,
    lambda: f64,
    sign: HalfGSign,
) -> Result<(Jet, Jet)> {
    let u = Jet::variable(0, p.u);
    let v = Jet::variable(1, p.v);
    let phi = cf.eval(u, v);
    let st = PointState { u, v, phi, phi_u: phi.diff(0), phi_v: phi.diff(1) };
    let w = rep.at(-(u * v))?;
    let uval = nl.jet(u, v, phi);
    Ok(current_at(&st, &w, uval, n.as_f64(), lambda, sign))
}

/// Exact divergence of the current of a closed-form field.
pub fn divergence_exact(pu: &Jet, pv: &Jet, p: SpacetimePoint, n: Dimension) -> f64 {
    let u = Jet::variable(0, p.u);
    let v = Jet::variable(1, p.v);
    let rn = (v - u).powf(n.as_f64() - 1.0);
    let qu = rn * *pu;
    let qv = rn * *pv;
    -(qv.d0() + qu.d1()) / (2.0 * rn.value())
}

/// Pointwise `(P_u, P_v)` for a closed-form field.
pub fn current_point(
    cf: &ClosedForm,
    p: SpacetimePoint,
    rep: &Reparametrization,
    nl: &NonlinearityU,
    n: Dimension,
    lambda: f64,
) -> Result<(f64, f64)> {
    let j = cf.jet_at(p);
    let st = PointState { u: p.u, v: p.v, phi: j.value(), phi_u: j.d0(), phi_v: j.d1() };
    let w = rep.at(p.f())?;
    let uval = nl.values(p, st.phi).u;
    Ok(current_at(&st, &w, uval, n.as_f64(), lambda, HalfGSign::Derived))
}

/// The current families whose boundary fluxes are bounded by field energies.
#[derive(Clone, Debug)]
pub enum CurrentKind {
    Split { params: SplitParams, branch: Branch },
    Nonlinear { a: f64, sign: Sign, p: f64, v: Potential },
}

impl CurrentKind {
    pub fn rep(&self) -> Reparametrization {
        match self {
            CurrentKind::Split { params, branch } => split_rep(*params, *branch),
            CurrentKind::Nonlinear { a, .. } => Reparametrization::PowerLog { a: *a },
        }
    }

    pub fn nl(&self) -> NonlinearityU {
        match self {
            CurrentKind::Split { .. } => NonlinearityU::Zero,
            CurrentKind::Nonlinear { sign, p, v, .. } => NonlinearityU::Power { sign: *sign, p: *p, v: v.clone() },
        }
    }

    fn weight_exponent(&self) -> (f64, f64) {
        match self {
            CurrentKind::Split { params, branch: Branch::Low } => (params.a, 2.0 * (params.a - params.b)),
            CurrentKind::Split { params, branch: Branch::High } => (params.a, 2.0 * (params.a + params.b)),
            CurrentKind::Nonlinear { a, .. } => (*a, 2.0 * a),
        }
    }
}

/// Smallest constants making the flux bounds hold at every node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FluxBoundReport {
    /// For `-P . grad f` against the angular and zero-order energy.
    pub k_f_inward: f64,
    /// For `P . grad f` against the full energy.
    pub k_f_outward: f64,
    /// For `|u^2 P . grad h|` against the full energy.
    pub k_h: f64,
}

/// Calibrates the constants in the pointwise flux bounds.
///
/// The low branch is bounded from below by `f |slash grad phi|^2` and `phi^2`
/// only; the other contractions by `(u phi_u)^2 + (v phi_v)^2 + phi^2`. The
/// nonlinear kinds subtract the exact `f U` part of `P . grad f` first.
pub fn boundary_bound_check(field: &ScalarField, kind: &CurrentKind, mode: DiffMode) -> Result<FluxBoundReport> {
    let g = field.grid();
    let d = derivatives(field, mode)?;
    let pcur = current_from_derivs(g, &d, &kind.rep(), &kind.nl(), HalfGSign::Derived)?;
    let nl = kind.nl();
    let (a, expo) = kind.weight_exponent();
    let nn = g.dimension().as_f64();
    let lambda = g.lambda();
    let mut rep = FluxBoundReport { k_f_inward: 0.0, k_f_outward: 0.0, k_h: 0.0 };
    let ratio = |num: f64, den: f64| {
        if num <= 0.0 {
            0.0
        } else if den > 0.0 {
            num / den
        } else {
            f64::INFINITY
        }
    };
    for i in 0..g.ns() {
        for j in 0..g.ny() {
            let p = g.point(i, j);
            let f = p.f();
            let w = f.powf(expo);
            let phi = d.phi[[i, j]];
            let zero = (nn + a).powi(2) * phi * phi;
            let ang = f * lambda * phi * phi / (p.r() * p.r());
            let full = (p.u * d.phi_u[[i, j]]).powi(2) + (p.v * d.phi_v[[i, j]]).powi(2) + zero;
            let pf = contract_f(p, pcur.p_u[[i, j]], pcur.p_v[[i, j]]);
            let ph = contract_h(p, pcur.p_u[[i, j]], pcur.p_v[[i, j]]);
            let fu = f * w * nl.values(p, phi).u;
            rep.k_f_inward = rep.k_f_inward.max(ratio(-(pf - fu), w * (ang + zero)));
            rep.k_f_outward = rep.k_f_outward.max(ratio(pf - fu, w * full));
            rep.k_h = rep.k_h.max(ratio(ph.abs(), w * full));
        }
    }
    Ok(rep)
}
