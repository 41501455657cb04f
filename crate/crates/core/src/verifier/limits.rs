//! Boundary integrals along geometric sequences of cutoffs.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{Dimension, SpacetimePoint};
use crate::quadrature::{integrate_cone, integrate_hyperboloid, integrate_hyperboloid_inverted, ModeFactor, Rule};
use crate::verifier::{least_squares_slope, CheckRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitKind {
    /// Past cone `h = sigma`, `sigma -> 0`.
    SigmaToZero,
    /// Future cone `h = tau`, `tau -> infinity`.
    TauToInfinity,
    /// Inner hyperboloid `f = rho`, `rho -> 0`.
    RhoToZero,
    /// Outer hyperboloid `f = omega`, `omega -> infinity`.
    OmegaToInfinity,
}

impl LimitKind {
    /// `+1` when the parameter grows along the sequence.
    pub fn direction(self) -> f64 {
        match self {
            LimitKind::TauToInfinity | LimitKind::OmegaToInfinity => 1.0,
            LimitKind::SigmaToZero | LimitKind::RhoToZero => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSequenceSpec {
    pub kind: LimitKind,
    /// First parameter value.
    pub start: f64,
    pub ratio: f64,
    pub count: usize,
    /// Number of trailing points used for the slope.
    pub fit_last: usize,
    /// `alpha` for `rho -> 0` and `beta` for `omega -> infinity`; the
    /// hyperboloid integrand is multiplied by `f^{-1/2 + exponent}`.
    pub exponent: f64,
}

impl LimitSequenceSpec {
    pub fn new(kind: LimitKind, start: f64, exponent: f64) -> Self {
        LimitSequenceSpec { kind, start, ratio: 2.0, count: 6, fit_last: 4, exponent }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 1.0) {
            return Err(LabError::InvalidInput(format!("sequence ratio {} must exceed 1", self.ratio)));
        }
        if self.count < 4 || self.fit_last < 2 || self.fit_last > self.count {
            return Err(LabError::InsufficientSequence(format!(
                "count {} with {} fitted points",
                self.count, self.fit_last
            )));
        }
        if !(self.start > 0.0 && self.start.is_finite()) {
            return Err(LabError::InvalidInput(format!("sequence start {} must be positive", self.start)));
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<f64> {
        let d = self.kind.direction();
        (0..self.count).map(|k| self.start * self.ratio.powf(d * k as f64)).collect()
    }
}

/// Cutoffs held fixed while the sequence parameter moves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedCutoffs {
    /// `(rho, omega)` for the cone limits.
    pub f_range: (f64, f64),
    /// Half-width of the `t` window on `f = rho`, or of the inverted `t`
    /// window on `f = omega`, for the hyperboloid limits.
    pub t_window: f64,
}

impl Default for FixedCutoffs {
    fn default() -> Self {
        FixedCutoffs { f_range: (1.0, 4.0), t_window: 1e4 }
    }
}

/// Proof rate of the boundary integral for the given decay parameters.
pub fn proof_rate(kind: LimitKind, delta: f64, exponent: f64) -> f64 {
    match kind {
        LimitKind::TauToInfinity => -delta / 2.0,
        LimitKind::SigmaToZero => delta / 2.0,
        LimitKind::RhoToZero => exponent,
        LimitKind::OmegaToInfinity => exponent - delta,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitReport {
    pub spec: LimitSequenceSpec,
    pub params: Vec<f64>,
    pub integrals: Vec<f64>,
    /// Log-log slope over the trailing points; `None` if they vanish.
    pub slope: Option<f64>,
}

impl LimitReport {
    pub fn record(&self, name: &str, predicted: f64, rel_tol: f64) -> CheckRecord {
        let series = self.params.iter().copied().zip(self.integrals.iter().copied()).collect();
        match self.slope {
            Some(s) => CheckRecord::close_to(name, s, predicted, rel_tol * predicted.abs())
                .with_detail("slope", s)
                .with_series(series),
            None => CheckRecord::flag(name, self.integrals.iter().all(|x| *x == 0.0)).with_series(series),
        }
    }
}

/// `sqrt(h)` at which the hyperboloid `f = w` reaches time `t`.
fn sqrt_h_at(w: f64, t: f64) -> f64 {
    let a = t / w.sqrt();
    0.5 * (a + (a * a + 4.0).sqrt())
}

/// Evaluates the boundary integral of `|psi|` along the sequence in `spec`.
pub fn boundary_limit_experiment(
    psi: &(dyn Fn(SpacetimePoint) -> f64 + Sync),
    spec: &LimitSequenceSpec,
    cutoffs: &FixedCutoffs,
    n: Dimension,
    nodes: usize,
) -> Result<LimitReport> {
    spec.validate()?;
    let params = spec.params();
    let m = ModeFactor::Normalized;
    let abs_psi = |q: SpacetimePoint| psi(q).abs();
    let e = spec.exponent;
    let weighted = |q: SpacetimePoint| q.f().powf(-0.5 + e) * psi(q).abs();
    let (rho, omega) = cutoffs.f_range;
    let mut integrals = Vec::with_capacity(params.len());
    for &x in &params {
        let val = match spec.kind {
            LimitKind::TauToInfinity | LimitKind::SigmaToZero => {
                integrate_cone(x, rho, omega, &abs_psi, n, m, &Rule::new(nodes)?)?
            }
            LimitKind::RhoToZero => {
                let st = sqrt_h_at(x, cutoffs.t_window);
                let tau = st * st;
                let rule = Rule::graded(nodes, 0.0, 0.25 * x.sqrt())?;
                integrate_hyperboloid(x, 1.0 / tau, tau, &weighted, n, m, &rule)?
            }
            LimitKind::OmegaToInfinity => {
                let st = sqrt_h_at(1.0 / x, cutoffs.t_window);
                let tau = st * st;
                let rule = Rule::graded(nodes, 0.0, 0.25 / x.sqrt())?;
                integrate_hyperboloid_inverted(x, 1.0 / tau, tau, &weighted, n, m, &rule)?
            }
        };
        integrals.push(val);
    }
    let k = spec.fit_last;
    let tail = params.len() - k;
    let usable = integrals[tail..].iter().all(|v| *v > 0.0 && v.is_finite());
    let slope = if usable {
        let xs: Vec<f64> = params[tail..].iter().map(|x| x.ln()).collect();
        let ys: Vec<f64> = integrals[tail..].iter().map(|x| x.ln()).collect();
        Some(least_squares_slope(&xs, &ys))
    } else if integrals.iter().all(|v| *v == 0.0) {
        None
    } else {
        return Err(LabError::InsufficientSequence(format!(
            "fewer than {k} usable points in {:?}",
            integrals
        )));
    };
    Ok(LimitReport { spec: *spec, params, integrals, slope })
}
