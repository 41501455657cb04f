//! Scalar fields sampled on a logarithmic grid over the exterior region.
//!
//! Nodes are uniform in `s = log f` and `y = log h`, so that level sets of
//! `f` and `h` are grid lines. In these coordinates `u d_u = d_s - d_y`,
//! `v d_v = d_s + d_y` and the scaling field `S` is `d_s`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{AdmissibleRegion, Dimension, SpacetimePoint};
use crate::scalar::{Jet, Scalar};
use crate::weights::{Potential, Reparametrization};

type Profile = dyn Fn(Jet, Jet) -> Jet + Send + Sync;

/// A function of `(u, v)` that can be evaluated with exact derivatives.
#[derive(Clone)]
pub struct ClosedForm(Arc<Profile>);

impl fmt::Debug for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ClosedForm")
    }
}

impl ClosedForm {
    pub fn new(f: impl Fn(Jet, Jet) -> Jet + Send + Sync + 'static) -> Self {
        ClosedForm(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        ClosedForm::new(move |_, _| Jet::constant(c))
    }

    /// A function of `r` only, as a mode profile.
    pub fn radial(g: impl Fn(Jet) -> Jet + Send + Sync + 'static) -> Self {
        ClosedForm::new(move |u, v| g(v - u))
    }

    pub fn eval(&self, u: Jet, v: Jet) -> Jet {
        (self.0)(u, v)
    }

    /// Third-order jet in `(u, v)` at `p`.
    pub fn jet_at(&self, p: SpacetimePoint) -> Jet {
        self.eval(Jet::variable(0, p.u), Jet::variable(1, p.v))
    }

    pub fn value_at(&self, p: SpacetimePoint) -> f64 {
        self.eval(Jet::constant(p.u).truncated(0), Jet::constant(p.v).truncated(0)).value()
    }

    /// Third-order jet in `(t, r)`.
    pub fn rect_jet(&self, t: f64, r: f64) -> Jet {
        let tj = Jet::variable(0, t);
        let rj = Jet::variable(1, r);
        self.eval((tj - rj) * 0.5, (tj + rj) * 0.5)
    }

    pub fn product(&self, other: &ClosedForm) -> ClosedForm {
        let (a, b) = (self.clone(), other.clone());
        ClosedForm::new(move |u, v| a.eval(u, v) * b.eval(u, v))
    }

    pub fn scaled(&self, c: f64) -> ClosedForm {
        let a = self.clone();
        ClosedForm::new(move |u, v| a.eval(u, v) * c)
    }
}

/// Uniform axis `x_k = lo + k (hi - lo)/(count - 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis1 {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis1 {
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }
    pub fn at(&self, k: usize) -> f64 {
        if k + 1 == self.count {
            self.hi
        } else {
            self.lo + k as f64 * self.step()
        }
    }
    /// Index of a node at `x`, if `x` sits on one.
    pub fn node_of(&self, x: f64) -> Option<usize> {
        let k = ((x - self.lo) / self.step()).round();
        if k < 0.0 || k > (self.count - 1) as f64 {
            return None;
        }
        let k = k as usize;
        if (self.at(k) - x).abs() <= 1e-9 * self.step() {
            Some(k)
        } else {
            None
        }
    }
}

/// Nodes of the `(s, y) = (log f, log h)` grid together with the mode data.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    n: Dimension,
    ell: u32,
    s_axis: Axis1,
    y_axis: Axis1,
}

pub const MIN_NODES: usize = 8;

impl GridSpec {
    /// `f` in `[f_lo, f_hi]` with `ns` nodes and `h` in `[h_lo, h_hi]` with `ny` nodes.
    pub fn new(n: Dimension, ell: u32, f_range: (f64, f64), ns: usize, h_range: (f64, f64), ny: usize) -> Result<Self> {
        let region = AdmissibleRegion::new(f_range.0, f_range.1, h_range.0, h_range.1)?;
        if ns < MIN_NODES || ny < MIN_NODES {
            return Err(LabError::GridTooCoarse(format!(
                "need at least {MIN_NODES} nodes per axis, got {ns} x {ny}"
            )));
        }
        Ok(GridSpec {
            n,
            ell,
            s_axis: Axis1 { lo: region.rho.ln(), hi: region.omega.ln(), count: ns },
            y_axis: Axis1 { lo: region.sigma.ln(), hi: region.tau.ln(), count: ny },
        })
    }

    pub fn over_region(region: &AdmissibleRegion, n: Dimension, ell: u32, ns: usize, ny: usize) -> Result<Self> {
        GridSpec::new(n, ell, (region.rho, region.omega), ns, (region.sigma, region.tau), ny)
    }

    /// Halves both spacings.
    pub fn refined(&self) -> GridSpec {
        let mut g = self.clone();
        g.s_axis.count = 2 * (self.s_axis.count - 1) + 1;
        g.y_axis.count = 2 * (self.y_axis.count - 1) + 1;
        g
    }

    pub fn with_ell(&self, ell: u32) -> GridSpec {
        GridSpec { ell, ..self.clone() }
    }

    pub fn dimension(&self) -> Dimension {
        self.n
    }
    pub fn ell(&self) -> u32 {
        self.ell
    }
    /// `l(l+n-2)`.
    pub fn lambda(&self) -> f64 {
        self.n.angular_eigenvalue(self.ell)
    }
    pub fn ns(&self) -> usize {
        self.s_axis.count
    }
    pub fn ny(&self) -> usize {
        self.y_axis.count
    }
    pub fn shape(&self) -> (usize, usize) {
        (self.ns(), self.ny())
    }
    pub fn s_axis(&self) -> Axis1 {
        self.s_axis
    }
    pub fn y_axis(&self) -> Axis1 {
        self.y_axis
    }
    pub fn s(&self, i: usize) -> f64 {
        self.s_axis.at(i)
    }
    pub fn y(&self, j: usize) -> f64 {
        self.y_axis.at(j)
    }
    pub fn ds(&self) -> f64 {
        self.s_axis.step()
    }
    pub fn dy(&self) -> f64 {
        self.y_axis.step()
    }
    pub fn point(&self, i: usize, j: usize) -> SpacetimePoint {
        let (s, y) = (self.s(i), self.y(j));
        SpacetimePoint::new(-(0.5 * (s - y)).exp(), (0.5 * (s + y)).exp())
    }
    pub fn region(&self) -> AdmissibleRegion {
        AdmissibleRegion {
            rho: self.s_axis.lo.exp(),
            omega: self.s_axis.hi.exp(),
            sigma: self.y_axis.lo.exp(),
            tau: self.y_axis.hi.exp(),
        }
    }

    /// Evaluates `g(i, j)` at every node, in parallel over rows.
    pub fn map_nodes<T: Send>(&self, g: impl Fn(usize, usize) -> T + Sync) -> Vec<T> {
        (0..self.ns())
            .into_par_iter()
            .flat_map_iter(|i| (0..self.ny()).map(move |j| (i, j)).collect::<Vec<_>>())
            .map(|(i, j)| g(i, j))
            .collect()
    }

    pub fn array(&self, g: impl Fn(usize, usize) -> f64 + Sync) -> Array2<f64> {
        Array2::from_shape_vec(self.shape(), self.map_nodes(g)).expect("shape matches node count")
    }
}

/// Finite-difference order in the grid interior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FdOrder {
    Second,
    #[default]
    Fourth,
}

/// How derivatives of a field are obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiffMode {
    /// Exact derivatives from the closed form.
    Analytic,
    FiniteDifference(FdOrder),
}

impl Default for DiffMode {
    fn default() -> Self {
        DiffMode::FiniteDifference(FdOrder::Fourth)
    }
}

fn d1_lane(x: ArrayView1<f64>, mut out: ArrayViewMut1<f64>, h: f64, order: FdOrder) {
    let n = x.len();
    out[0] = (-3.0 * x[0] + 4.0 * x[1] - x[2]) / (2.0 * h);
    out[n - 1] = (3.0 * x[n - 1] - 4.0 * x[n - 2] + x[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = if order == FdOrder::Fourth && i >= 2 && i + 2 < n {
            (-x[i + 2] + 8.0 * x[i + 1] - 8.0 * x[i - 1] + x[i - 2]) / (12.0 * h)
        } else {
            (x[i + 1] - x[i - 1]) / (2.0 * h)
        };
    }
}

fn d2_lane(x: ArrayView1<f64>, mut out: ArrayViewMut1<f64>, h: f64, order: FdOrder) {
    let n = x.len();
    let h2 = h * h;
    out[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) / h2;
    out[n - 1] = (2.0 * x[n - 1] - 5.0 * x[n - 2] + 4.0 * x[n - 3] - x[n - 4]) / h2;
    for i in 1..n - 1 {
        out[i] = if order == FdOrder::Fourth && i >= 2 && i + 2 < n {
            (-x[i + 2] + 16.0 * x[i + 1] - 30.0 * x[i] + 16.0 * x[i - 1] - x[i - 2]) / (12.0 * h2)
        } else {
            (x[i + 1] - 2.0 * x[i] + x[i - 1]) / h2
        };
    }
}

fn apply_lanes(a: &Array2<f64>, axis: usize, h: f64, kernel: impl Fn(ArrayView1<f64>, ArrayViewMut1<f64>)) -> Array2<f64> {
    let mut out = Array2::zeros(a.raw_dim());
    for (lane, o) in a.lanes(Axis(axis)).into_iter().zip(out.lanes_mut(Axis(axis))) {
        kernel(lane, o);
    }
    let _ = h;
    out
}

/// First derivative along `axis` (0 = s, 1 = y).
pub fn fd_first(a: &Array2<f64>, axis: usize, h: f64, order: FdOrder) -> Array2<f64> {
    apply_lanes(a, axis, h, |x, o| d1_lane(x, o, h, order))
}

pub fn fd_second(a: &Array2<f64>, axis: usize, h: f64, order: FdOrder) -> Array2<f64> {
    apply_lanes(a, axis, h, |x, o| d2_lane(x, o, h, order))
}

/// Nodes at least this far from the grid edge only see centred stencils,
/// including stencils applied to quantities that were themselves differenced.
pub const INTERIOR_MARGIN: usize = 4;

/// Largest absolute value over nodes at least `margin` away from the edges.
pub fn interior_sup(a: &Array2<f64>, margin: usize) -> f64 {
    let (ns, ny) = a.dim();
    let mut m: f64 = 0.0;
    for i in margin..ns.saturating_sub(margin) {
        for j in margin..ny.saturating_sub(margin) {
            let x = a[[i, j]];
            m = if x.is_nan() { f64::NAN } else { m.max(x.abs()) };
            if m.is_nan() {
                return m;
            }
        }
    }
    m
}

/// A sampled mode amplitude `phi_hat` of `phi = phi_hat Y_l`.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: GridSpec,
    values: Array2<f64>,
    closed_form: Option<ClosedForm>,
}

impl ScalarField {
    pub fn from_closed_form(grid: &GridSpec, form: ClosedForm) -> Self {
        let values = grid.array(|i, j| form.value_at(grid.point(i, j)));
        ScalarField { grid: grid.clone(), values, closed_form: Some(form) }
    }

    pub fn from_values(grid: &GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != grid.shape() {
            return Err(LabError::InvalidInput(format!(
                "values have shape {:?}, grid is {:?}",
                values.dim(),
                grid.shape()
            )));
        }
        if let Some(x) = values.iter().find(|x| !x.is_finite()) {
            return Err(LabError::InvalidInput(format!("non-finite sample {x}")));
        }
        Ok(ScalarField { grid: grid.clone(), values, closed_form: None })
    }

    pub fn from_fn(grid: &GridSpec, g: impl Fn(SpacetimePoint) -> f64 + Sync) -> Result<Self> {
        ScalarField::from_values(grid, grid.array(|i, j| g(grid.point(i, j))))
    }

    pub fn zeros(grid: &GridSpec) -> Self {
        ScalarField::from_closed_form(grid, ClosedForm::constant(0.0))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
    pub fn closed_form(&self) -> Option<&ClosedForm> {
        self.closed_form.as_ref()
    }
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    /// The same profile resampled on another grid; requires a closed form.
    pub fn resampled(&self, grid: &GridSpec) -> Result<ScalarField> {
        match &self.closed_form {
            Some(cf) => Ok(ScalarField::from_closed_form(grid, cf.clone())),
            None => Err(LabError::ClosedFormRequired("resampling a grid-only field".into())),
        }
    }

    fn derived(&self, values: Array2<f64>) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values, closed_form: None }
    }

    /// Writes `u,v,f,h,value` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["u", "v", "f", "h", "value"])?;
        for i in 0..self.grid.ns() {
            for j in 0..self.grid.ny() {
                let p = self.grid.point(i, j);
                let row = [p.u, p.v, p.f(), p.h(), self.values[[i, j]]];
                wr.write_record(row.iter().map(|x| format!("{x:e}")))?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

/// Values and first derivatives of a field plus its mode-reduced wave operator.
#[derive(Clone, Debug)]
pub struct FieldDerivs {
    pub phi: Array2<f64>,
    pub phi_u: Array2<f64>,
    pub phi_v: Array2<f64>,
    pub box_phi: Array2<f64>,
}

/// Mode-reduced wave operator from a third-order jet in `(u, v)`.
pub fn box_from_jet(j: &Jet, p: SpacetimePoint, n: Dimension, lambda: f64) -> f64 {
    let r = p.r();
    -j.d01() + (n.as_f64() - 1.0) / (2.0 * r) * (j.d1() - j.d0()) - lambda * j.value() / (r * r)
}

/// Mode-reduced wave operator in `(t, r)` form from a jet in `(t, r)`.
pub fn box_from_rect_jet(j: &Jet, r: f64, n: Dimension, lambda: f64) -> f64 {
    -j.d00() + j.d11() + (n.as_f64() - 1.0) / r * j.d1() - lambda * j.value() / (r * r)
}

pub fn derivatives(field: &ScalarField, mode: DiffMode) -> Result<FieldDerivs> {
    let grid = &field.grid;
    let n = grid.dimension();
    let lambda = grid.lambda();
    match mode {
        DiffMode::Analytic => {
            let cf = field
                .closed_form
                .as_ref()
                .ok_or_else(|| LabError::ClosedFormRequired("analytic derivatives".into()))?;
            let data = grid.map_nodes(|i, j| {
                let p = grid.point(i, j);
                let jet = cf.jet_at(p);
                (jet.value(), jet.d0(), jet.d1(), box_from_jet(&jet, p, n, lambda))
            });
            let pick = |k: usize| {
                Array2::from_shape_vec(
                    grid.shape(),
                    data.iter()
                        .map(|d| match k {
                            0 => d.0,
                            1 => d.1,
                            2 => d.2,
                            _ => d.3,
                        })
                        .collect(),
                )
                .expect("shape")
            };
            Ok(FieldDerivs { phi: pick(0), phi_u: pick(1), phi_v: pick(2), box_phi: pick(3) })
        }
        DiffMode::FiniteDifference(order) => {
            let phi = field.values.clone();
            let (ds, dy) = (grid.ds(), grid.dy());
            let ps = fd_first(&phi, 0, ds, order);
            let py = fd_first(&phi, 1, dy, order);
            let pss = fd_second(&phi, 0, ds, order);
            let pyy = fd_second(&phi, 1, dy, order);
            let nn = n.as_f64();
            let mut phi_u = Array2::zeros(grid.shape());
            let mut phi_v = Array2::zeros(grid.shape());
            let mut box_phi = Array2::zeros(grid.shape());
            for i in 0..grid.ns() {
                for j in 0..grid.ny() {
                    let p = grid.point(i, j);
                    let (a, b) = (ps[[i, j]], py[[i, j]]);
                    phi_u[[i, j]] = (a - b) / p.u;
                    phi_v[[i, j]] = (a + b) / p.v;
                    let th = (0.5 * grid.y(j)).tanh();
                    let r = p.r();
                    box_phi[[i, j]] = (pss[[i, j]] - pyy[[i, j]] + 0.5 * (nn - 1.0) * (a - th * b)) / p.f()
                        - lambda * phi[[i, j]] / (r * r);
                }
            }
            Ok(FieldDerivs { phi, phi_u, phi_v, box_phi })
        }
    }
}

pub fn diff_u(field: &ScalarField, mode: DiffMode) -> Result<ScalarField> {
    Ok(field.derived(derivatives(field, mode)?.phi_u))
}

pub fn diff_v(field: &ScalarField, mode: DiffMode) -> Result<ScalarField> {
    Ok(field.derived(derivatives(field, mode)?.phi_v))
}

/// The mode-reduced wave operator applied to `phi_hat`.
pub fn box_op(field: &ScalarField, mode: DiffMode) -> Result<ScalarField> {
    Ok(field.derived(derivatives(field, mode)?.box_phi))
}

/// `S phi = (u d_u + v d_v) phi / 2`.
pub fn scaling(field: &ScalarField, mode: DiffMode) -> Result<ScalarField> {
    let d = derivatives(field, mode)?;
    let g = &field.grid;
    Ok(field.derived(g.array(|i, j| {
        let p = g.point(i, j);
        0.5 * (p.u * d.phi_u[[i, j]] + p.v * d.phi_v[[i, j]])
    })))
}

/// `S* phi = S phi + (n-1)/4 phi`.
pub fn scaling_star(field: &ScalarField, mode: DiffMode) -> Result<ScalarField> {
    let c = (field.grid.dimension().as_f64() - 1.0) / 4.0;
    let s = scaling(field, mode)?;
    Ok(field.derived(&s.values + &(&field.values * c)))
}

/// `psi = e^{-F(f)} phi`, keeping a closed form when the input has one.
pub fn conjugate(field: &ScalarField, rep: &Reparametrization) -> Result<ScalarField> {
    let g = &field.grid;
    let mut factors = Array2::zeros(g.shape());
    for i in 0..g.ns() {
        let f = g.s(i).exp();
        let d = rep.derivatives(f)?;
        let e = (-d[0]).exp();
        if !e.is_finite() || e == 0.0 {
            return Err(LabError::WeightOverflow(format!("e^(-F) = {e} at f = {f}")));
        }
        factors.row_mut(i).fill(e);
    }
    let values = &field.values * &factors;
    let closed_form = match &field.closed_form {
        Some(cf) => Some(cf.product(&rep.closed_form_exp_minus(1.0)?)),
        None => None,
    };
    Ok(ScalarField { grid: g.clone(), values, closed_form })
}

/// Sign of a power nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// `U(Q, phi) = sign V(Q) |phi|^{p+1}/(p+1)`, or no nonlinearity.
#[derive(Clone, Debug)]
pub enum NonlinearityU {
    Zero,
    Power { sign: Sign, p: f64, v: Potential },
}

/// Pointwise data of `U` along a field value.
#[derive(Clone, Copy, Debug, Default)]
pub struct UValues {
    /// `U(phi)`.
    pub u: f64,
    /// `dU/dphi`.
    pub udot: f64,
    /// `grad f . grad_Q U`, i.e. the explicit spacetime derivative only.
    pub su: f64,
}

impl NonlinearityU {
    pub fn label(&self) -> String {
        match self {
            NonlinearityU::Zero => "U=0".into(),
            NonlinearityU::Power { sign, p, v } => {
                format!("U={}|phi|^{}:{}", if *sign == Sign::Plus { "+" } else { "-" }, p + 1.0, v.label)
            }
        }
    }

    /// Checks that the nonlinearity is compatible with the angular mode.
    pub fn check_mode(&self, ell: u32) -> Result<()> {
        match self {
            NonlinearityU::Power { p, .. } if (*p - 1.0).abs() > 0.0 && ell != 0 => Err(LabError::ModeNotSupported(
                format!("power nonlinearity with p = {p} requires l = 0, got l = {ell}"),
            )),
            NonlinearityU::Power { p, .. } if !(*p >= 1.0) => {
                Err(LabError::InvalidInput(format!("power exponent p = {p} must be >= 1")))
            }
            _ => Ok(()),
        }
    }

    pub fn values(&self, p: SpacetimePoint, phi: f64) -> UValues {
        match self {
            NonlinearityU::Zero => UValues::default(),
            NonlinearityU::Power { sign, p: pw, v } => {
                let j = v.form().jet_at(p);
                let vv = j.value();
                let sv = 0.5 * (p.u * j.d0() + p.v * j.d1());
                let a = phi.abs();
                let apow = if *pw == 1.0 { phi * phi } else { a.powf(pw + 1.0) };
                let s = sign.value();
                UValues {
                    u: s * vv * apow / (pw + 1.0),
                    udot: if *pw == 1.0 { s * vv * phi } else { s * vv * a.powf(pw - 1.0) * phi },
                    su: s * sv * apow / (pw + 1.0),
                }
            }
        }
    }

    /// `U(Q, phi(Q))` as a jet.
    pub fn jet(&self, u: Jet, v: Jet, phi: Jet) -> Jet {
        match self {
            NonlinearityU::Zero => Jet::constant(0.0),
            NonlinearityU::Power { sign, p, v: pot } => {
                let vv = pot.jet_at(u, v);
                let apow = if *p == 1.0 {
                    phi * phi
                } else if phi.value() == 0.0 {
                    Jet::constant(0.0)
                } else {
                    phi.abs().powf(p + 1.0)
                };
                vv * apow * (sign.value() / (p + 1.0))
            }
        }
    }
}

/// `e^{-F} box_U(e^F psi)` minus its expansion in `psi`; vanishes identically.
pub fn conjugated_wave_residual(
    phi: &ScalarField,
    rep: &Reparametrization,
    nl: &NonlinearityU,
    mode: DiffMode,
) -> Result<ScalarField> {
    let g = phi.grid.clone();
    nl.check_mode(g.ell())?;
    let psi = conjugate(phi, rep)?;
    let dphi = derivatives(phi, mode)?;
    let dpsi = derivatives(&psi, mode)?;
    let c = (g.dimension().as_f64() - 1.0) / 4.0;
    let mut out = Array2::zeros(g.shape());
    for i in 0..g.ns() {
        let f = g.s(i).exp();
        let w = rep.at(f)?;
        let e_minus_f = (-w.big_f).exp();
        for j in 0..g.ny() {
            let p = g.point(i, j);
            let udot = nl.values(p, dphi.phi[[i, j]]).udot;
            let direct = e_minus_f * (dphi.box_phi[[i, j]] + udot);
            let ps = dpsi.phi[[i, j]];
            let s_psi = 0.5 * (p.u * dpsi.phi_u[[i, j]] + p.v * dpsi.phi_v[[i, j]]);
            let expanded = dpsi.box_phi[[i, j]]
                + 2.0 * w.fp * (s_psi + c * ps)
                + (f * w.fp * w.fp - w.g) * ps
                + e_minus_f * udot;
            out[[i, j]] = direct - expanded;
        }
    }
    Ok(phi.derived(out))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DecayVerdict {
    /// Suprema stay flat as the truncation radius grows.
    Consistent,
    /// Suprema keep growing with the truncation radius.
    Violated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub beta: f64,
    pub sup_derivative: f64,
    pub sup_angular: f64,
    pub sup_field: f64,
    pub sup_focusing: Option<f64>,
    /// Log-log slope of the combined supremum against the truncation radius.
    pub truncation_trend: f64,
    pub verdict: DecayVerdict,
}

/// Growth slope above which the decay report is `Violated`.
pub const DECAY_TREND_THRESHOLD: f64 = 0.1;

/// Weighted suprema of a field and their trend under radial truncation.
///
/// Weights use `1 + r + f`, comparable to `(1+|u|)(1+|v|)`. Angular
/// derivatives use the sphere mean `|slash grad phi| = sqrt(lambda)|phi|/r`.
pub fn decay_functionals(
    field: &ScalarField,
    beta: f64,
    focusing: Option<(&Potential, f64)>,
    mode: DiffMode,
) -> Result<DecayReport> {
    let g = &field.grid;
    let d = derivatives(field, mode)?;
    let nn = g.dimension().as_f64();
    let k = (nn - 1.0 + beta) / 2.0;
    let sl = g.lambda().sqrt();
    struct Node {
        w: f64,
        deriv: f64,
        ang: f64,
        fld: f64,
        foc: f64,
    }
    let nodes: Vec<Node> = g.map_nodes(|i, j| {
        let p = g.point(i, j);
        let (f, r) = (p.f(), p.r());
        let w = 1.0 + r + f;
        let phi = d.phi[[i, j]];
        let deriv = w.powf(k) * ((p.u * d.phi_u[[i, j]]).abs() + (p.v * d.phi_v[[i, j]]).abs());
        let ang = if f < 1.0 { (1.0 + r).powf(k) * f.sqrt() * sl * phi.abs() / r } else { 0.0 };
        let fld = w.powf(k) * phi.abs();
        let foc = match focusing {
            Some((pot, pw)) if f > 1.0 => {
                let e = 1.0 / (pw + 1.0);
                w.powf((nn - 1.0 + beta) * e) * f.powf(e) * pot.value_at(p).abs().powf(e) * phi.abs()
            }
            _ => 0.0,
        };
        Node { w, deriv, ang, fld, foc }
    });
    let sup = |sel: &dyn Fn(&Node) -> f64, cap: f64| {
        nodes.iter().filter(|n| n.w <= cap).map(sel).fold(0.0_f64, f64::max)
    };
    let wmax = nodes.iter().map(|n| n.w).fold(0.0_f64, f64::max);
    let wmin = nodes.iter().map(|n| n.w).fold(f64::INFINITY, f64::min);
    let combined = |n: &Node| n.deriv.max(n.fld);
    let levels = 6;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for l in 0..levels {
        let cap = wmax / 2f64.powi(levels - 1 - l);
        if cap < wmin {
            continue;
        }
        let m = sup(&combined, cap);
        if m > 0.0 {
            xs.push(cap.ln());
            ys.push(m.ln());
        }
    }
    let trend = if xs.len() >= 2 {
        let take = xs.len().min(4);
        crate::verifier::least_squares_slope(&xs[xs.len() - take..], &ys[ys.len() - take..])
    } else {
        0.0
    };
    Ok(DecayReport {
        beta,
        sup_derivative: sup(&|n| n.deriv, f64::INFINITY),
        sup_angular: sup(&|n| n.ang, f64::INFINITY),
        sup_field: sup(&|n| n.fld, f64::INFINITY),
        sup_focusing: focusing.map(|_| sup(&|n| n.foc, f64::INFINITY)),
        truncation_trend: trend,
        verdict: if trend > DECAY_TREND_THRESHOLD { DecayVerdict::Violated } else { DecayVerdict::Consistent },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: u32, ell: u32, k: usize) -> GridSpec {
        GridSpec::new(Dimension::new(n).unwrap(), ell, (0.25, 4.0), k, (0.25, 4.0), k).unwrap()
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let n = Dimension::new(3).unwrap();
        assert!(matches!(GridSpec::new(n, 0, (0.5, 2.0), 4, (0.5, 2.0), 16), Err(LabError::GridTooCoarse(_))));
    }

    #[test]
    fn derivative_of_log_f_is_exact() {
        // phi = log f = s is linear on the grid, so u d_u phi = 1 exactly
        let g = grid(3, 0, 33);
        let phi = ScalarField::from_closed_form(&g, ClosedForm::new(|u, v| (-(u * v)).ln()));
        let du = diff_u(&phi, DiffMode::default()).unwrap();
        for i in 0..g.ns() {
            for j in 0..g.ny() {
                let p = g.point(i, j);
                assert!((p.u * du.value(i, j) - 1.0).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn derivative_of_u_converges() {
        let mut errs = Vec::new();
        for k in [65, 129, 257] {
            let g = grid(3, 0, k);
            let phi = ScalarField::from_closed_form(&g, ClosedForm::new(|u, _| u));
            let du = diff_u(&phi, DiffMode::default()).unwrap();
            errs.push(interior_sup(&(du.values() - 1.0), 2));
        }
        assert!(errs[2] < 1e-9, "{errs:?}");
        assert!(errs[0] / errs[1] > 12.0 && errs[1] / errs[2] > 12.0, "{errs:?}");
    }

    #[test]
    fn box_of_f_is_half_n_plus_one() {
        for n in [2, 3, 5] {
            let g = grid(n, 0, 33);
            let phi = ScalarField::from_closed_form(&g, ClosedForm::new(|u, v| -(u * v)));
            for mode in [DiffMode::Analytic, DiffMode::default()] {
                let b = box_op(&phi, mode).unwrap();
                // f = e^s is not a polynomial in s, so differencing is only fourth order
                let (margin, tol) = if mode == DiffMode::Analytic { (0, 1e-12) } else { (INTERIOR_MARGIN, 1e-4) };
                let err = interior_sup(&(b.values() - (n as f64 + 1.0) / 2.0), margin);
                assert!(err < tol, "n={n} {mode:?} err={err}");
            }
        }
    }

    #[test]
    fn box_null_and_rect_forms_agree() {
        let n = Dimension::new(3).unwrap();
        let cf = ClosedForm::new(|u, v| (u * 0.3 + v * v * 0.2).sin() * (v - u).recip());
        for (t, r) in [(0.2, 1.3), (-1.0, 2.5), (3.0, 4.0)] {
            let p = SpacetimePoint::from_rect(t, r).unwrap();
            for ell in [0, 1, 3] {
                let lam = n.angular_eigenvalue(ell);
                let a = box_from_jet(&cf.jet_at(p), p, n, lam);
                let b = box_from_rect_jet(&cf.rect_jet(t, r), r, n, lam);
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn constant_field_has_flat_scaling_star() {
        let g = grid(3, 0, 17);
        let one = ScalarField::from_closed_form(&g, ClosedForm::constant(1.0));
        let s = scaling_star(&one, DiffMode::default()).unwrap();
        assert!(s.values().iter().all(|x| (x - 0.5).abs() < 1e-14));
    }

    #[test]
    fn nonlinear_power_requires_radial_mode() {
        let nl = NonlinearityU::Power { sign: Sign::Plus, p: 2.0, v: Potential::constant(1.0) };
        assert!(matches!(nl.check_mode(1), Err(LabError::ModeNotSupported(_))));
        assert!(nl.check_mode(0).is_ok());
    }

    #[test]
    fn csv_header() {
        let g = grid(3, 0, 8);
        let mut buf = Vec::new();
        ScalarField::zeros(&g).write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("u,v,f,h,value\n"));
        assert_eq!(text.lines().count(), 65);
    }
}
