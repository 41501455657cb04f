//! Radial wave evolution and closed-form reference solutions.
//!
//! The mode-reduced equation `phi_tt = phi_rr + (n-1)/r phi_r - lambda/r^2 phi
//! + U'(phi)` is evolved for `chi = phi / r^l`, which solves the `l = 0`
//! equation in dimension `n + 2l` and is even in `r`. Space uses a
//! cell-centred conservative stencil whose inner face sits on the axis, time
//! uses leapfrog. Values at exterior grid nodes are read off by sixth order
//! Lagrange interpolation in `t` and `r`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::fields::{ClosedForm, GridSpec, NonlinearityU, ScalarField};
use crate::geometry::{Dimension, SpacetimePoint};
use crate::scalar::{Jet, Scalar};
use crate::verifier::least_squares_slope;

/// Largest accepted `dt / dr`.
pub const MAX_COURANT: f64 = 0.9;

type Profile1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Cauchy data `(phi_hat, d_t phi_hat)` at `t = 0`, supported in `r <= support`.
#[derive(Clone)]
pub struct InitialData {
    pub phi0: Profile1,
    pub phi1: Profile1,
    pub support: f64,
}

impl std::fmt::Debug for InitialData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "InitialData(support={})", self.support)
    }
}

impl InitialData {
    pub fn new(phi0: impl Fn(f64) -> f64 + Send + Sync + 'static, phi1: impl Fn(f64) -> f64 + Send + Sync + 'static, support: f64) -> Self {
        InitialData { phi0: Arc::new(phi0), phi1: Arc::new(phi1), support }
    }

    /// Data read off a closed-form solution at `t = 0`.
    pub fn from_closed_form(cf: &ClosedForm, support: f64) -> Self {
        let a = cf.clone();
        let b = cf.clone();
        InitialData::new(move |r| a.rect_jet(0.0, r).value(), move |r| b.rect_jet(0.0, r).d0(), support)
    }
}

/// The mode-reduced problem to evolve.
#[derive(Clone, Debug)]
pub struct WaveProblem {
    pub n: Dimension,
    pub ell: u32,
    pub nl: NonlinearityU,
    pub data: InitialData,
    pub dr: f64,
    /// `dt / dr`.
    pub courant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveStats {
    pub dr: f64,
    pub dt: f64,
    pub steps_forward: usize,
    pub steps_backward: usize,
    pub r_max: f64,
    /// Relative change of the discrete conserved energy, for linear problems.
    pub energy_drift: Option<f64>,
}

/// One time level of the radial grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialSlice {
    pub t: f64,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
}

struct Stencil {
    dr: f64,
    ell: i32,
    r: Vec<f64>,
    // face area at the inner face of each cell, divided by cell volume and dr
    lo: Vec<f64>,
    hi: Vec<f64>,
    vol: Vec<f64>,
    area: Vec<f64>,
}

impl Stencil {
    fn new(n: Dimension, ell: u32, dr: f64, cells: usize) -> Self {
        let m = n.as_f64() + 2.0 * ell as f64;
        let face = |k: usize| (k as f64 * dr).powf(m - 1.0);
        let vol: Vec<f64> = (0..cells)
            .map(|j| (((j + 1) as f64 * dr).powf(m) - (j as f64 * dr).powf(m)) / m)
            .collect();
        let area: Vec<f64> = (0..=cells).map(face).collect();
        Stencil {
            dr,
            ell: ell as i32,
            r: (0..cells).map(|j| (j as f64 + 0.5) * dr).collect(),
            lo: (0..cells).map(|j| area[j] / (vol[j] * dr)).collect(),
            hi: (0..cells).map(|j| area[j + 1] / (vol[j] * dr)).collect(),
            vol,
            area,
        }
    }

    fn laplacian(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len();
        for j in 0..n {
            let right = if j + 1 < n { x[j + 1] } else { 0.0 };
            let left = if j > 0 { x[j - 1] } else { x[j] };
            out[j] = self.hi[j] * (right - x[j]) - self.lo[j] * (x[j] - left);
        }
    }
}

struct Evolution<'a> {
    p: &'a WaveProblem,
    st: Stencil,
    dt: f64,
    dir: f64,
    prev: Vec<f64>,
    cur: Vec<f64>,
    k: usize,
    scratch: Vec<f64>,
}

impl<'a> Evolution<'a> {
    fn new(p: &'a WaveProblem, cells: usize, dir: f64) -> Result<Self> {
        let st = Stencil::new(p.n, p.ell, p.dr, cells);
        let dt = p.courant * p.dr;
        let mut ev = Evolution { p, st, dt, dir, prev: vec![0.0; cells], cur: vec![0.0; cells], k: 0, scratch: vec![0.0; cells] };
        let l = ev.st.ell;
        for j in 0..cells {
            let r = ev.st.r[j];
            let rl = r.powi(l);
            ev.cur[j] = (p.data.phi0)(r) / rl;
            ev.scratch[j] = dir * (p.data.phi1)(r) / rl;
        }
        let v1 = ev.scratch.clone();
        let acc = ev.acceleration(&ev.cur.clone(), 0.0)?;
        ev.prev = ev.cur.clone();
        for j in 0..cells {
            ev.cur[j] = ev.prev[j] + dt * v1[j] + 0.5 * dt * dt * acc[j];
        }
        ev.k = 1;
        Ok(ev)
    }

    fn acceleration(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.st.laplacian(x, &mut out);
        if !matches!(self.p.nl, NonlinearityU::Zero) {
            let l = self.st.ell;
            for j in 0..x.len() {
                if x[j] == 0.0 {
                    continue;
                }
                let r = self.st.r[j];
                let rl = r.powi(l);
                let q = SpacetimePoint::new(0.5 * (self.dir * t - r), 0.5 * (self.dir * t + r));
                let ud = self.p.nl.values(q, x[j] * rl).udot;
                if !ud.is_finite() {
                    return Err(LabError::InvalidPotential(format!("nonlinearity not finite at t = {t}, r = {r}")));
                }
                out[j] += ud / rl;
            }
        }
        Ok(out)
    }

    fn time(&self) -> f64 {
        self.k as f64 * self.dt
    }

    fn step(&mut self) -> Result<()> {
        let t = self.time();
        let cur = std::mem::take(&mut self.cur);
        let acc = self.acceleration(&cur, t)?;
        let dt2 = self.dt * self.dt;
        let next: Vec<f64> = (0..cur.len()).map(|j| 2.0 * cur[j] - self.prev[j] + dt2 * acc[j]).collect();
        if next.iter().any(|x| !x.is_finite()) {
            return Err(LabError::InvalidInput(format!("solution blew up at t = {}", t + self.dt)));
        }
        self.prev = cur;
        self.cur = next;
        self.k += 1;
        Ok(())
    }

    /// Discrete energy between the previous and current level; linear problems only.
    fn energy(&self) -> (f64, f64) {
        let st = &self.st;
        let n = self.cur.len();
        let mut kin = 0.0;
        let mut grad = 0.0;
        let mut pot = 0.0;
        for j in 0..n {
            let d = (self.cur[j] - self.prev[j]) / self.dt;
            kin += 0.5 * st.vol[j] * d * d;
            let (c1, p1) = if j + 1 < n { (self.cur[j + 1], self.prev[j + 1]) } else { (0.0, 0.0) };
            grad += 0.5 * st.area[j + 1] * (c1 - self.cur[j]) * (p1 - self.prev[j]) / st.dr;
            if let NonlinearityU::Power { sign, v, .. } = &self.p.nl {
                let r = st.r[j];
                let t = self.dir * (self.time() - 0.5 * self.dt);
                let q = SpacetimePoint::new(0.5 * (t - r), 0.5 * (t + r));
                pot -= 0.5 * st.vol[j] * sign.value() * v.value_at(q) * self.cur[j] * self.prev[j];
            }
        }
        (kin + grad + pot, kin + grad.abs() + pot.abs())
    }

    fn slice(&self) -> RadialSlice {
        let l = self.st.ell;
        RadialSlice {
            t: self.dir * self.time(),
            r: self.st.r.clone(),
            phi: self.cur.iter().zip(&self.st.r).map(|(c, r)| c * r.powi(l)).collect(),
        }
    }
}

fn validate(p: &WaveProblem) -> Result<()> {
    if !(p.dr > 0.0 && p.dr.is_finite()) {
        return Err(LabError::InvalidInput(format!("dr = {} must be positive", p.dr)));
    }
    if !(p.courant > 0.0) || p.courant > MAX_COURANT {
        return Err(LabError::UnstableStep(p.courant));
    }
    p.nl.check_mode(p.ell)
}

/// Evolves to `t_final` (either sign) and returns the last level.
pub fn evolve_to(p: &WaveProblem, t_final: f64, r_max: f64) -> Result<RadialSlice> {
    validate(p)?;
    if p.data.support + t_final.abs() + 10.0 * p.dr > r_max {
        return Err(LabError::DomainTooSmall(format!(
            "support {} plus |t| = {} reaches the outer radius {r_max}",
            p.data.support,
            t_final.abs()
        )));
    }
    let cells = (r_max / p.dr).ceil() as usize;
    let dir = if t_final < 0.0 { -1.0 } else { 1.0 };
    let mut ev = Evolution::new(p, cells, dir)?;
    let steps = (t_final.abs() / ev.dt).round() as usize;
    while ev.k < steps.max(1) {
        ev.step()?;
    }
    if steps == 0 {
        let l = ev.st.ell;
        return Ok(RadialSlice {
            t: 0.0,
            r: ev.st.r.clone(),
            phi: ev.prev.iter().zip(&ev.st.r).map(|(c, r)| c * r.powi(l)).collect(),
        });
    }
    Ok(ev.slice())
}

fn lagrange_weights(x: f64, xs: &[f64]) -> [f64; 6] {
    let mut w = [1.0; 6];
    for i in 0..6 {
        for k in 0..6 {
            if k != i {
                w[i] *= (x - xs[k]) / (xs[i] - xs[k]);
            }
        }
    }
    w
}

// Interpolates chi (even in r) at radius r from cell values.
fn interp_r(st: &Stencil, level: &[f64], r: f64) -> f64 {
    let j0 = ((r / st.dr) - 0.5).floor() as i64;
    let mut xs = [0.0; 6];
    let mut ys = [0.0; 6];
    for (m, jj) in (j0 - 2..=j0 + 3).enumerate() {
        let (idx, sgn) = if jj < 0 { ((-jj - 1) as usize, -1.0) } else { (jj as usize, 1.0) };
        xs[m] = sgn * st.r[idx];
        ys[m] = level[idx];
    }
    let w = lagrange_weights(r, &xs);
    (0..6).map(|m| w[m] * ys[m]).sum()
}

struct Target {
    idx: usize,
    t: f64,
    r: f64,
}

fn sweep(p: &WaveProblem, cells: usize, dir: f64, targets: &mut [Target], out: &mut [f64]) -> Result<(usize, Option<f64>)> {
    if targets.is_empty() {
        return Ok((0, None));
    }
    targets.sort_by(|a, b| a.t.abs().total_cmp(&b.t.abs()));
    let mut ev = Evolution::new(p, cells, dir)?;
    let dt = ev.dt;
    let l = ev.st.ell;
    // ring of the last six levels; level k lives at slot k % 6
    let mut ring: Vec<Vec<f64>> = vec![Vec::new(); 6];
    ring[0] = ev.prev.clone();
    ring[1] = ev.cur.clone();
    let linear_autonomous = matches!(&p.nl, NonlinearityU::Zero) || matches!(&p.nl, NonlinearityU::Power { p, .. } if *p == 1.0);
    let (e0, scale0) = ev.energy();
    let mut next = 0;
    let last_t = targets.last().map(|t| t.t.abs()).unwrap_or(0.0);
    loop {
        while next < targets.len() {
            let tq = targets[next].t.abs();
            let kq = (tq / dt).floor() as usize;
            let start = kq.saturating_sub(2);
            if start + 5 > ev.k {
                break;
            }
            let ts: Vec<f64> = (start..start + 6).map(|k| k as f64 * dt).collect();
            let wt = lagrange_weights(tq, &ts);
            let r = targets[next].r;
            let mut chi = 0.0;
            for (m, k) in (start..start + 6).enumerate() {
                chi += wt[m] * interp_r(&ev.st, &ring[k % 6], r);
            }
            out[targets[next].idx] = chi * r.powi(l);
            next += 1;
        }
        if next >= targets.len() {
            break;
        }
        ev.step()?;
        ring[ev.k % 6] = ev.cur.clone();
        if ev.time() > last_t + 10.0 * dt {
            return Err(LabError::InvalidInput("interpolation window not reached".into()));
        }
    }
    let drift = if linear_autonomous {
        let (e1, scale1) = ev.energy();
        let scale = scale0.max(scale1).max(e0.abs());
        Some(if scale > 0.0 { (e1 - e0).abs() / scale } else { 0.0 })
    } else {
        None
    };
    Ok((ev.k, drift))
}

/// Evolves forwards and backwards from `t = 0` and samples the exterior grid.
pub fn solve(p: &WaveProblem, target: &GridSpec) -> Result<(ScalarField, SolveStats)> {
    validate(p)?;
    if target.dimension() != p.n || target.ell() != p.ell {
        return Err(LabError::InvalidInput("target grid mode differs from the problem".into()));
    }
    let mut fwd = Vec::new();
    let mut bwd = Vec::new();
    let mut t_abs: f64 = 0.0;
    let mut r_top: f64 = 0.0;
    for i in 0..target.ns() {
        for j in 0..target.ny() {
            let q = target.point(i, j);
            let tg = Target { idx: i * target.ny() + j, t: q.t(), r: q.r() };
            t_abs = t_abs.max(q.t().abs());
            r_top = r_top.max(q.r());
            if q.t() >= 0.0 {
                fwd.push(tg);
            } else {
                bwd.push(tg);
            }
        }
    }
    let dt = p.courant * p.dr;
    let r_max = (p.data.support + t_abs + 20.0 * p.dr).max(r_top + 10.0 * p.dr) + 10.0 * dt;
    let cells = (r_max / p.dr).ceil() as usize;
    let mut out = vec![0.0; target.ns() * target.ny()];
    let (kf, df) = sweep(p, cells, 1.0, &mut fwd, &mut out)?;
    let (kb, db) = sweep(p, cells, -1.0, &mut bwd, &mut out)?;
    let drift = match (df, db) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    };
    let values = ndarray::Array2::from_shape_vec(target.shape(), out).expect("shape");
    Ok((
        ScalarField::from_values(target, values)?,
        SolveStats { dr: p.dr, dt, steps_forward: kf, steps_backward: kb, r_max: cells as f64 * p.dr, energy_drift: drift },
    ))
}

type JetFn = Arc<dyn Fn(Jet) -> Jet + Send + Sync>;

/// `(g(t - r) - g(t + r)) / r`, the radial solution for `n = 3`.
pub fn exact_dalembert(g: impl Fn(Jet) -> Jet + Send + Sync + 'static) -> ClosedForm {
    let g: JetFn = Arc::new(g);
    ClosedForm::new(move |u, v| (g(u * 2.0) - g(v * 2.0)) / (v - u))
}

/// Smooth bump `exp(-1/(1-z^2))`, `z = (x - center)/width`, as a jet function.
pub fn compact_bump(center: f64, width: f64, amplitude: f64) -> impl Fn(Jet) -> Jet + Send + Sync + Clone {
    move |x: Jet| {
        let z = (x - center) / width;
        let z2 = z * z;
        if z2.value() >= 1.0 {
            Jet::constant(0.0)
        } else {
            ((-z2 + 1.0).recip() * -1.0).exp() * amplitude
        }
    }
}

/// The decaying harmonic multipole `r^{-(n-2+l)}`.
pub fn static_multipole(n: Dimension, ell: u32) -> ClosedForm {
    let k = n.as_f64() - 2.0 + ell as f64;
    ClosedForm::radial(move |r| r.powf(-k))
}

/// A static solution of `(Delta + U) psi = 0` with compactly supported `U`.
#[derive(Clone, Debug)]
pub struct CounterexampleBundle {
    pub n: Dimension,
    pub a: f64,
    pub ell: u32,
    pub q_plus: f64,
    pub q_minus: f64,
    pub profile: ClosedForm,
    pub potential: ClosedForm,
    /// `sup |(Delta + U) psi|` over samples in `[1, 2]`.
    pub residual: f64,
    /// Log-log slope of `|psi|` on `[4, 100]`.
    pub tail_slope: f64,
    /// `max |U|` outside `[1, 2]`.
    pub leak: f64,
}

// Quintic Hermite basis on [0, 1] (value, slope, curvature at 0, then at 1),
// as monomial coefficients.
const HERMITE5: [[f64; 6]; 6] = [
    [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
    [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
    [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
    [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
    [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
    [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
];

fn hermite_coefficients(ends: [f64; 6]) -> [f64; 6] {
    let mut c = [0.0; 6];
    for (row, e) in HERMITE5.iter().zip(ends) {
        for k in 0..6 {
            c[k] += e * row[k];
        }
    }
    c
}

fn horner(c: &[f64], x: Jet) -> Jet {
    let mut out = Jet::constant(0.0);
    for &ck in c.iter().rev() {
        out = out * x + ck;
    }
    out
}

// The bridge polynomial and its first two derivatives at x.
fn quintic_hermite(x: Jet, ends: [f64; 6]) -> (Jet, Jet, Jet) {
    let c = hermite_coefficients(ends);
    let c1: Vec<f64> = (1..6).map(|k| k as f64 * c[k]).collect();
    let c2: Vec<f64> = (2..6).map(|k| (k * (k - 1)) as f64 * c[k]).collect();
    (horner(&c, x), horner(&c1, x), horner(&c2, x))
}

/// Builds the potential and profile bridging `r^{q+}` near the axis to `r^{q-}` outside `r = 2`.
pub fn counterexample_build(n: Dimension, a: f64, decay_order: f64) -> Result<CounterexampleBundle> {
    if !(a > 0.0) {
        return Err(LabError::InvalidInput(format!("eigenvalue a = {a} must be positive")));
    }
    let nn = n.as_f64();
    // a must be l(l+n-2) for an integer l
    let ell_f = (-(nn - 2.0) + ((nn - 2.0).powi(2) + 4.0 * a).sqrt()) / 2.0;
    let ell = ell_f.round();
    if (ell - ell_f).abs() > 1e-9 {
        return Err(LabError::InvalidInput(format!("a = {a} is not a sphere eigenvalue in dimension {}", n.get())));
    }
    let disc = ((nn - 2.0).powi(2) + 4.0 * a).sqrt();
    let qp = (-(nn - 2.0) + disc) / 2.0;
    let qm = (-(nn - 2.0) - disc) / 2.0;
    if !(qm.abs() > decay_order) {
        return Err(LabError::InvalidInput(format!("|q-| = {} does not exceed the decay order {decay_order}", qm.abs())));
    }
    let ends = [0.0, qp, -qp, qm * 2f64.ln(), qm / 2.0, -qm / 4.0];
    let log_profile = move |r: Jet| -> Jet {
        let rv = r.value();
        if rv < 1.0 {
            r.ln() * qp
        } else if rv > 2.0 {
            r.ln() * qm
        } else {
            quintic_hermite(r - 1.0, ends).0
        }
    };
    let profile = ClosedForm::radial(move |r| log_profile(r).exp());
    let potential_fn = move |r: Jet| -> Jet {
        let rv = r.value();
        if !(1.0..=2.0).contains(&rv) {
            return Jet::constant(0.0);
        }
        let (_, l1, l2) = quintic_hermite(r - 1.0, ends);
        -(l2 + l1 * l1) - l1 * (nn - 1.0) / r + r.square().recip() * a
    };
    let potential = ClosedForm::radial(potential_fn);
    let mut residual: f64 = 0.0;
    for k in 0..=1000 {
        let r = 1.0 + k as f64 / 1000.0;
        let j = profile.rect_jet(0.0, r);
        let delta = j.d11() + (nn - 1.0) / r * j.d1() - a * j.value() / (r * r);
        let u = potential.value_at(SpacetimePoint::new(-r / 2.0, r / 2.0));
        residual = residual.max((delta + u * j.value()).abs());
    }
    let mut leak: f64 = 0.0;
    for k in 1..=400 {
        let r = 0.01 * k as f64;
        if !(1.0..=2.0).contains(&r) {
            leak = leak.max(potential.value_at(SpacetimePoint::new(-r / 2.0, r / 2.0)).abs());
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = (0..=40)
        .map(|k| {
            let r = 4.0 * 25f64.powf(k as f64 / 40.0);
            (r.ln(), profile.value_at(SpacetimePoint::new(-r / 2.0, r / 2.0)).abs().ln())
        })
        .unzip();
    Ok(CounterexampleBundle {
        n,
        a,
        ell: ell as u32,
        q_plus: qp,
        q_minus: qm,
        profile,
        potential,
        residual,
        tail_slope: least_squares_slope(&xs, &ys),
        leak,
    })
}

/// `sup` over each `f`-row of `(1+|u|)^{(n-1)/2} (1+|v|)^{(n-1)/2} |phi|`, as `(f, sup)` pairs.
pub fn radiation_weight(field: &ScalarField) -> Vec<(f64, f64)> {
    let g = field.grid();
    let k = (g.dimension().as_f64() - 1.0) / 2.0;
    (0..g.ns())
        .map(|i| {
            let sup = (0..g.ny())
                .map(|j| {
                    let p = g.point(i, j);
                    ((1.0 + p.u.abs()) * (1.0 + p.v.abs())).powf(k) * field.value(i, j).abs()
                })
                .fold(0.0, f64::max);
            (g.s(i).exp(), sup)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counterexample_exponents_and_support() {
        let n = Dimension::new(3).unwrap();
        let b = counterexample_build(n, 6.0, 2.5).unwrap();
        assert_eq!((b.q_plus, b.q_minus, b.ell), (2.0, -3.0, 2));
        assert!(b.residual < 1e-10, "residual {}", b.residual);
        assert_eq!(b.leak, 0.0);
        assert!((b.tail_slope + 3.0).abs() < 0.03);
        assert!(counterexample_build(n, 6.0, 3.5).is_err());
        assert!(counterexample_build(n, 5.0, 1.0).is_err());
    }

    #[test]
    fn hermite_bridge_matches_two_derivatives() {
        let ends = [0.3, -1.0, 2.0, 0.7, 0.5, -4.0];
        let at = |x: f64| quintic_hermite(Jet::variable(0, x), ends).0;
        let (a, b) = (at(0.0), at(1.0));
        assert!((a.value() - 0.3).abs() < 1e-15 && (a.d0() + 1.0).abs() < 1e-14 && (a.d00() - 2.0).abs() < 1e-13);
        assert!((b.value() - 0.7).abs() < 1e-14 && (b.d0() - 0.5).abs() < 1e-13 && (b.d00() + 4.0).abs() < 1e-12);
    }

    #[test]
    fn courant_limit() {
        let n = Dimension::new(3).unwrap();
        let p = WaveProblem {
            n,
            ell: 0,
            nl: NonlinearityU::Zero,
            data: InitialData::new(|_| 0.0, |_| 0.0, 1.0),
            dr: 0.1,
            courant: 0.95,
        };
        assert!(matches!(evolve_to(&p, 1.0, 10.0), Err(LabError::UnstableStep(_))));
        let p = WaveProblem { courant: 0.5, ..p };
        assert!(matches!(evolve_to(&p, 5.0, 4.0), Err(LabError::DomainTooSmall(_))));
    }
}
