//! Integrals over level sets and regions of the exterior.
//!
//! Closure integrands use Gauss-Legendre rules on the coarea
//! parametrisations; grid integrands use composite Simpson rules on node
//! aligned regions. Both report per unit solid angle unless a mode factor
//! says otherwise.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::currents::{contract_f, contract_h, CurrentField};
use crate::error::{LabError, Result};
use crate::fields::{FdOrder, GridSpec};
use crate::geometry::{invert, AdmissibleRegion, Dimension, SpacetimePoint};

/// Neumaier compensated sum in the given order.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(LabError::InvalidInput("Gauss-Legendre rule needs at least one node".into()));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = nf * (x * pn - pm) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(GaussLegendre { nodes, weights })
    }
}

/// How an interval is cut into panels before applying the rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum Panels {
    #[default]
    Single,
    /// Panels grow geometrically away from `center`, starting at `min_width`.
    Graded { center: f64, min_width: f64, ratio: f64 },
}

impl Panels {
    fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        match *self {
            Panels::Single => vec![a, b],
            Panels::Graded { center, min_width, ratio } => {
                let c = center.clamp(a, b);
                let mut left = vec![c];
                let mut w = min_width;
                while *left.last().unwrap() > a {
                    left.push((left.last().unwrap() - w).max(a));
                    w *= ratio;
                }
                let mut right = vec![c];
                let mut w = min_width;
                while *right.last().unwrap() < b {
                    right.push((right.last().unwrap() + w).min(b));
                    w *= ratio;
                }
                left.reverse();
                left.pop();
                left.extend(right);
                left.dedup();
                left
            }
        }
    }
}

/// A Gauss-Legendre rule applied panelwise.
#[derive(Clone, Debug)]
pub struct Rule {
    gl: GaussLegendre,
    pub panels: Panels,
}

impl Rule {
    pub fn new(nodes: usize) -> Result<Self> {
        Ok(Rule { gl: GaussLegendre::new(nodes)?, panels: Panels::Single })
    }

    pub fn graded(nodes: usize, center: f64, min_width: f64) -> Result<Self> {
        Ok(Rule { gl: GaussLegendre::new(nodes)?, panels: Panels::Graded { center, min_width, ratio: 2.0 } })
    }

    pub fn nodes(&self) -> usize {
        self.gl.nodes.len()
    }

    /// `(x, w)` pairs for `[a, b]`.
    pub fn points(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let bp = self.panels.breakpoints(a, b);
        let mut out = Vec::with_capacity(self.gl.nodes.len() * (bp.len() - 1));
        for win in bp.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            let (m, hw) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (x, w) in self.gl.nodes.iter().zip(&self.gl.weights) {
                out.push((m + hw * x, hw * w));
            }
        }
        out
    }

    pub fn integrate(&self, a: f64, b: f64, g: impl Fn(f64) -> f64 + Sync) -> f64 {
        let pts = self.points(a, b);
        let vals: Vec<f64> = pts.par_iter().map(|&(x, w)| w * g(x)).collect();
        compensated_sum(vals)
    }
}

/// Multiplier turning a per-solid-angle integral into a full one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ModeFactor {
    /// Quadratic single-mode integrand against a normalised harmonic.
    #[default]
    Normalized,
    /// Integrand independent of the angles.
    ModeFree,
}

impl ModeFactor {
    pub fn value(self, n: Dimension) -> f64 {
        match self {
            ModeFactor::Normalized => 1.0,
            ModeFactor::ModeFree => n.sphere_area(),
        }
    }
}

pub type Integrand<'a> = &'a (dyn Fn(SpacetimePoint) -> f64 + Sync);

fn check_cutoffs(lo: f64, hi: f64, what: &str) -> Result<()> {
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(LabError::InvalidCutoffs(format!("{what}: need 0 < {lo} < {hi}")));
    }
    Ok(())
}

/// Point on `f = omega` at time `t`.
pub fn hyperboloid_point(omega: f64, t: f64) -> SpacetimePoint {
    let r = (t * t + 4.0 * omega).sqrt();
    // v = (t + r)/2 and u = -omega/v, avoiding cancellation in (t - r)/2
    let v = if t >= 0.0 { 0.5 * (t + r) } else { 2.0 * omega / (r - t) };
    SpacetimePoint::new(-omega / v, v)
}

/// `int_{f=omega, sigma<h<tau} Psi` via `2 omega^{1/2} int Psi r^{n-2} dt`.
pub fn integrate_hyperboloid(
    omega: f64,
    sigma: f64,
    tau: f64,
    psi: Integrand,
    n: Dimension,
    mode: ModeFactor,
    rule: &Rule,
) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(LabError::InvalidInput(format!("omega = {omega} must be positive")));
    }
    check_cutoffs(sigma, tau, "hyperboloid h-cutoffs")?;
    let so = omega.sqrt();
    let t0 = so * (sigma.sqrt() - 1.0 / sigma.sqrt());
    let t1 = so * (tau.sqrt() - 1.0 / tau.sqrt());
    let nm2 = n.as_f64() - 2.0;
    let i = rule.integrate(t0, t1, |t| {
        let p = hyperboloid_point(omega, t);
        psi(p) * p.r().powf(nm2)
    });
    Ok(2.0 * so * i * mode.value(n))
}

/// `int_{h=tau, rho<f<omega} Psi` via `2 int f^{1/2} Psi r^{n-2} dr`.
pub fn integrate_cone(
    tau: f64,
    rho: f64,
    omega: f64,
    psi: Integrand,
    n: Dimension,
    mode: ModeFactor,
    rule: &Rule,
) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(LabError::InvalidInput(format!("tau = {tau} must be positive")));
    }
    check_cutoffs(rho, omega, "cone f-cutoffs")?;
    let st = tau.sqrt();
    let c = st + 1.0 / st;
    let nm2 = n.as_f64() - 2.0;
    let i = rule.integrate(rho.sqrt() * c, omega.sqrt() * c, |r| {
        let sf = r / c;
        let p = SpacetimePoint::new(-sf / st, sf * st);
        sf * psi(p) * r.powf(nm2)
    });
    Ok(2.0 * i * mode.value(n))
}

/// Same hyperboloid integral computed in inverted coordinates.
pub fn integrate_hyperboloid_inverted(
    omega: f64,
    sigma: f64,
    tau: f64,
    psi: Integrand,
    n: Dimension,
    mode: ModeFactor,
    rule: &Rule,
) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(LabError::InvalidInput(format!("omega = {omega} must be positive")));
    }
    check_cutoffs(sigma, tau, "hyperboloid h-cutoffs")?;
    let fbar = 1.0 / omega;
    let sb = fbar.sqrt();
    let t0 = sb * (sigma.sqrt() - 1.0 / sigma.sqrt());
    let t1 = sb * (tau.sqrt() - 1.0 / tau.sqrt());
    let nm2 = n.as_f64() - 2.0;
    let i = rule.integrate(t0, t1, |tb| {
        let q = hyperboloid_point(fbar, tb);
        let p = invert(q).expect("inverted hyperboloid point is exterior");
        psi(p) * q.r().powf(nm2)
    });
    Ok(2.0 * omega.powf(n.as_f64() - 0.5) * i * mode.value(n))
}

/// Bulk integral over a region with tensor Gauss-Legendre in `(log f, log h)`.
pub fn integrate_bulk(region: &AdmissibleRegion, psi: Integrand, n: Dimension, mode: ModeFactor, rule: &Rule) -> Result<f64> {
    let nm1 = n.as_f64() - 1.0;
    let ys = rule.points(region.sigma.ln(), region.tau.ln());
    let ss = rule.points(region.rho.ln(), region.omega.ln());
    let rows: Vec<f64> = ss
        .par_iter()
        .map(|&(s, ws)| {
            let row = ys.iter().map(|&(y, wy)| {
                let p = SpacetimePoint::new(-(0.5 * (s - y)).exp(), (0.5 * (s + y)).exp());
                wy * psi(p) * p.f() * p.r().powf(nm1)
            });
            ws * compensated_sum(row)
        })
        .collect();
    Ok(compensated_sum(rows) * mode.value(n))
}

/// Node index ranges of a grid-aligned region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GridRegion {
    pub i0: usize,
    pub i1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl GridRegion {
    pub fn locate(grid: &GridSpec, region: &AdmissibleRegion) -> Result<GridRegion> {
        let (sa, ya) = (grid.s_axis(), grid.y_axis());
        let tol = 1e-9;
        let inside = |x: f64, lo: f64, hi: f64, step: f64| x >= lo - tol * step && x <= hi + tol * step;
        let bounds = [
            (region.rho.ln(), sa, "rho"),
            (region.omega.ln(), sa, "omega"),
            (region.sigma.ln(), ya, "sigma"),
            (region.tau.ln(), ya, "tau"),
        ];
        let mut idx = [0usize; 4];
        for (k, (x, ax, name)) in bounds.iter().enumerate() {
            if !inside(*x, ax.lo, ax.hi, ax.step()) {
                return Err(LabError::RegionOutOfGrid(format!("{name} = {} lies outside the grid", x.exp())));
            }
            idx[k] = ax.node_of(*x).ok_or_else(|| {
                LabError::RegionMismatch(format!("{name} = {} is not on a grid node", x.exp()))
            })?;
        }
        if idx[1] < idx[0] + 2 || idx[3] < idx[2] + 2 {
            return Err(LabError::GridTooCoarse("region spans fewer than two cells".into()));
        }
        Ok(GridRegion { i0: idx[0], i1: idx[1], j0: idx[2], j1: idx[3] })
    }
}

/// Composite weights for `m + 1` equispaced nodes: Simpson, with a 3/8 panel
/// at the end when `m` is odd.
pub fn composite_weights(m: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; m + 1];
    if m == 1 {
        w[0] = 0.5 * h;
        w[1] = 0.5 * h;
        return w;
    }
    let simpson_end = if m.is_multiple_of(2) { m } else { m - 3 };
    let mut k = 0;
    while k < simpson_end {
        w[k] += h / 3.0;
        w[k + 1] += 4.0 * h / 3.0;
        w[k + 2] += h / 3.0;
        k += 2;
    }
    if m % 2 == 1 {
        let b = simpson_end;
        let c = 3.0 * h / 8.0;
        w[b] += c;
        w[b + 1] += 3.0 * c;
        w[b + 2] += 3.0 * c;
        w[b + 3] += c;
    }
    w
}

/// `int_region values dV` for a grid quantity, per unit solid angle.
pub fn integrate_bulk_grid(values: &Array2<f64>, grid: &GridSpec, region: &AdmissibleRegion) -> Result<f64> {
    let gr = GridRegion::locate(grid, region)?;
    let ws = composite_weights(gr.i1 - gr.i0, grid.ds());
    let wy = composite_weights(gr.j1 - gr.j0, grid.dy());
    let nm1 = grid.dimension().as_f64() - 1.0;
    let rows = (gr.i0..=gr.i1).map(|i| {
        ws[i - gr.i0]
            * compensated_sum((gr.j0..=gr.j1).map(|j| {
                let p = grid.point(i, j);
                wy[j - gr.j0] * values[[i, j]] * p.f() * p.r().powf(nm1)
            }))
    });
    Ok(compensated_sum(rows))
}

/// The four oriented boundary fluxes of a region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundaryTerms {
    /// `int_{f=omega} f^{-1/2} P . grad f`.
    pub outer: f64,
    /// `int_{f=rho} f^{-1/2} P . grad f`.
    pub inner: f64,
    /// `int_{h=tau} u^2 f^{-1/2} P . grad h`.
    pub future: f64,
    /// `int_{h=sigma} u^2 f^{-1/2} P . grad h`.
    pub past: f64,
}

impl BoundaryTerms {
    /// Outward flux `outer - inner + future - past`.
    pub fn total(&self) -> f64 {
        self.outer - self.inner + self.future - self.past
    }
}

/// Boundary fluxes of a grid current through a node-aligned region.
pub fn boundary_sum(cur: &CurrentField, region: &AdmissibleRegion) -> Result<BoundaryTerms> {
    let g = cur.grid();
    let gr = GridRegion::locate(g, region)?;
    let nm1 = g.dimension().as_f64() - 1.0;
    let wy = composite_weights(gr.j1 - gr.j0, g.dy());
    let ws = composite_weights(gr.i1 - gr.i0, g.ds());
    let along_y = |i: usize| {
        compensated_sum((gr.j0..=gr.j1).map(|j| {
            let p = g.point(i, j);
            wy[j - gr.j0] * contract_f(p, cur.p_u[[i, j]], cur.p_v[[i, j]]) * p.r().powf(nm1)
        }))
    };
    let along_s = |j: usize| {
        compensated_sum((gr.i0..=gr.i1).map(|i| {
            let p = g.point(i, j);
            ws[i - gr.i0] * contract_h(p, cur.p_u[[i, j]], cur.p_v[[i, j]]) * p.r().powf(nm1)
        }))
    };
    Ok(BoundaryTerms { outer: along_y(gr.i1), inner: along_y(gr.i0), future: along_s(gr.j1), past: along_s(gr.j0) })
}

/// Boundary fluxes of a pointwise current, by the coarea formulas.
pub fn boundary_sum_fn(
    cur: &(dyn Fn(SpacetimePoint) -> (f64, f64) + Sync),
    region: &AdmissibleRegion,
    n: Dimension,
    rule: &Rule,
) -> Result<BoundaryTerms> {
    let flux_f = |p: SpacetimePoint| {
        let (pu, pv) = cur(p);
        contract_f(p, pu, pv) / p.f().sqrt()
    };
    let flux_h = |p: SpacetimePoint| {
        let (pu, pv) = cur(p);
        contract_h(p, pu, pv) / p.f().sqrt()
    };
    let m = ModeFactor::Normalized;
    let AdmissibleRegion { rho, omega, sigma, tau } = *region;
    Ok(BoundaryTerms {
        outer: integrate_hyperboloid(omega, sigma, tau, &flux_f, n, m, rule)?,
        inner: integrate_hyperboloid(rho, sigma, tau, &flux_f, n, m, rule)?,
        future: integrate_cone(tau, rho, omega, &flux_h, n, m, rule)?,
        past: integrate_cone(sigma, rho, omega, &flux_h, n, m, rule)?,
    })
}

/// Mismatch between the bulk divergence and the boundary fluxes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DivergenceResidual {
    pub bulk: f64,
    pub boundary: f64,
    pub absolute: f64,
    pub relative: f64,
}

pub fn divergence_residual(cur: &CurrentField, region: &AdmissibleRegion, order: FdOrder) -> Result<DivergenceResidual> {
    let div = cur.divergence(order);
    let bulk = integrate_bulk_grid(&div, cur.grid(), region)?;
    let boundary = boundary_sum(cur, region)?.total();
    let absolute = (bulk - boundary).abs();
    let scale = bulk.abs().max(boundary.abs());
    Ok(DivergenceResidual { bulk, boundary, absolute, relative: if scale > 0.0 { absolute / scale } else { 0.0 } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        for n in [1, 2, 5, 16, 64] {
            let gl = GaussLegendre::new(n).unwrap();
            let sw: f64 = gl.weights.iter().sum();
            assert_relative_eq!(sw, 2.0, epsilon = 1e-13);
            let deg = 2 * n - 1;
            let m: f64 = gl.nodes.iter().zip(&gl.weights).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert_relative_eq!(m, exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn composite_weights_integrate_cubics() {
        for m in [2, 3, 5, 8, 9] {
            let h = 1.0 / m as f64;
            let w = composite_weights(m, h);
            let s: f64 = w.iter().enumerate().map(|(k, wk)| wk * (k as f64 * h).powi(3)).sum();
            assert_relative_eq!(s, 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn graded_panels_cover_interval() {
        let bp = Panels::Graded { center: 0.0, min_width: 0.1, ratio: 2.0 }.breakpoints(-5.0, 3.0);
        assert_eq!(bp[0], -5.0);
        assert_eq!(*bp.last().unwrap(), 3.0);
        assert!(bp.windows(2).all(|w| w[1] > w[0]));
        assert!(bp.contains(&0.0));
    }

    #[test]
    fn hyperboloid_points_lie_on_level_set() {
        for t in [-1e6, -3.0, 0.0, 2.5, 1e6] {
            let p = hyperboloid_point(0.7, t);
            assert_relative_eq!(p.f(), 0.7, max_relative = 1e-12);
            assert_relative_eq!(p.t(), t, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn mismatched_region_is_rejected() {
        let n = Dimension::new(3).unwrap();
        let g = GridSpec::new(n, 0, (0.1, 10.0), 17, (0.1, 10.0), 17).unwrap();
        let vals = Array2::zeros(g.shape());
        let off = AdmissibleRegion::new(0.13, 1.0, 0.1, 10.0).unwrap();
        assert!(matches!(integrate_bulk_grid(&vals, &g, &off), Err(LabError::RegionMismatch(_))));
        let out = AdmissibleRegion::new(0.01, 1.0, 0.1, 10.0).unwrap();
        assert!(matches!(integrate_bulk_grid(&vals, &g, &out), Err(LabError::RegionOutOfGrid(_))));
    }
}
