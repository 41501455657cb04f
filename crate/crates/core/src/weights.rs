//! Reparametrization weights `F(f)` and the derived coefficients `G`, `H`.
//!
//! `G = -(f F')'` and `H = (f G)'/2`. The split family glues a low branch on
//! `0 < f <= 1` to a high branch on `f >= 1`; both agree with their first
//! derivative and `G` at `f = 1`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::fields::{ClosedForm, GridSpec};
use crate::geometry::{Dimension, SpacetimePoint};
use crate::scalar::{Jet, Scalar};

/// Number of derivatives of `F` the built-in weights provide.
const BUILTIN_DERIVS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl SplitParams {
    pub fn new(a: f64, b: f64, p: f64) -> Result<Self> {
        validate_params(a, b, p)?;
        Ok(SplitParams { a, b, p })
    }
}

/// Admissibility of `(a, b, p)` for the split weight.
pub fn validate_params(a: f64, b: f64, p: f64) -> Result<()> {
    let bad = |condition: String| Err(LabError::InvalidWeightParams { condition });
    if !(a.is_finite() && b.is_finite() && p.is_finite()) {
        return bad("parameters must be finite".into());
    }
    if a <= 0.0 {
        return bad(format!("a > 0 (a = {a})"));
    }
    if !(p > 0.0 && p < 2.0 * a) {
        return bad(format!("0 < p < 2a (p = {p}, a = {a})"));
    }
    let cap = 0.25 * (2.0 * a - p).min(4.0 * p);
    if !(b >= 0.0 && b < cap) {
        return bad(format!("0 <= b < min(2a - p, 4p)/4 = {cap} (b = {b})"));
    }
    debug_assert!(b < a / 2.0 && a - b - p / 2.0 > b);
    Ok(())
}

/// User supplied weight: returns `[F, F', F'', ...]` at `f`, as many as known.
#[derive(Clone)]
pub struct CustomWeight {
    pub name: String,
    derivs: Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>,
}

impl CustomWeight {
    pub fn new(name: impl Into<String>, derivs: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        CustomWeight { name: name.into(), derivs: Arc::new(derivs) }
    }
}

impl fmt::Debug for CustomWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomWeight({})", self.name)
    }
}

#[derive(Clone, Debug)]
pub enum Reparametrization {
    /// `F = -a log f`.
    PowerLog { a: f64 },
    /// `F = -(a-b) log f - (b/p) f^p`, intended for `f <= 1`.
    SplitLow(SplitParams),
    /// `F = -(a+b) log f - (b/p) f^{-p}`, intended for `f >= 1`.
    SplitHigh(SplitParams),
    Custom(CustomWeight),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Low,
    High,
}

// k-th derivative of c*log f
fn log_deriv(c: f64, f: f64, k: usize) -> f64 {
    if k == 0 {
        return c * f.ln();
    }
    let mut fact = 1.0;
    for j in 1..k {
        fact *= j as f64;
    }
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    c * sign * fact / f.powi(k as i32)
}

// k-th derivative of c*f^q
fn pow_deriv(c: f64, q: f64, f: f64, k: usize) -> f64 {
    let mut coef = c;
    for j in 0..k {
        coef *= q - j as f64;
    }
    coef * f.powf(q - k as f64)
}

impl Reparametrization {
    pub fn label(&self) -> String {
        match self {
            Reparametrization::PowerLog { a } => format!("power-log(a={a})"),
            Reparametrization::SplitLow(s) => format!("split-low(a={},b={},p={})", s.a, s.b, s.p),
            Reparametrization::SplitHigh(s) => format!("split-high(a={},b={},p={})", s.a, s.b, s.p),
            Reparametrization::Custom(c) => format!("custom({})", c.name),
        }
    }

    /// `[F, F', F'', ...]` at `f`.
    pub fn derivatives(&self, f: f64) -> Result<Vec<f64>> {
        if !(f > 0.0 && f.is_finite()) {
            return Err(LabError::DomainError(f));
        }
        let out = match self {
            Reparametrization::PowerLog { a } => (0..BUILTIN_DERIVS).map(|k| log_deriv(-a, f, k)).collect(),
            Reparametrization::SplitLow(s) => (0..BUILTIN_DERIVS)
                .map(|k| log_deriv(-(s.a - s.b), f, k) + pow_deriv(-s.b / s.p, s.p, f, k))
                .collect(),
            Reparametrization::SplitHigh(s) => (0..BUILTIN_DERIVS)
                .map(|k| log_deriv(-(s.a + s.b), f, k) + pow_deriv(-s.b / s.p, -s.p, f, k))
                .collect(),
            Reparametrization::Custom(c) => {
                let d = (c.derivs)(f);
                if d.len() < 2 {
                    return Err(LabError::MissingDerivative(d.len()));
                }
                d
            }
        };
        Ok(out)
    }

    fn derivatives_at_least(&self, f: f64, k: usize) -> Result<Vec<f64>> {
        let d = self.derivatives(f)?;
        if d.len() <= k {
            return Err(LabError::MissingDerivative(d.len()));
        }
        Ok(d)
    }

    /// `e^{-2F}`, `F'` and `G` composed with a scalar `f`.
    pub fn at<T: Scalar>(&self, f: T) -> Result<WeightAt<T>> {
        let d = self.derivatives_at_least(f.value(), 2)?;
        let big_f = f.compose(&d);
        let fp = f.compose(&d[1..]);
        let fpp = f.compose(&d[2..]);
        let e2f = (big_f * -2.0).exp();
        if !e2f.value().is_finite() || e2f.value() == 0.0 {
            return Err(LabError::WeightOverflow(format!("e^(-2F) = {} at f = {}", e2f.value(), f.value())));
        }
        let g = -(fp + f * fpp);
        Ok(WeightAt { big_f, e2f, fp, g })
    }

    /// The weight as a function on the exterior, for building closed forms.
    pub fn closed_form_exp_minus(&self, scale: f64) -> Result<ClosedForm> {
        let rep = self.clone();
        // probe once so configuration errors surface here
        rep.derivatives_at_least(1.0, 3)?;
        Ok(ClosedForm::new(move |u: Jet, v: Jet| {
            let f = -(u * v);
            match rep.at(f) {
                Ok(w) => (w.big_f * -scale).exp(),
                Err(_) => Jet::constant(f64::NAN),
            }
        }))
    }
}

/// Weight data at a point, generic over the scalar type.
#[derive(Clone, Copy, Debug)]
pub struct WeightAt<T> {
    pub big_f: T,
    pub e2f: T,
    pub fp: T,
    pub g: T,
}

/// `(F, F', F'')` at `f`.
pub fn eval_weight(rep: &Reparametrization, f: f64) -> Result<(f64, f64, f64)> {
    let d = rep.derivatives_at_least(f, 2)?;
    Ok((d[0], d[1], d[2]))
}

/// `(G, H)` at `f`.
pub fn gh(rep: &Reparametrization, f: f64) -> Result<(f64, f64)> {
    let d = rep.derivatives_at_least(f, 3)?;
    let g = -(d[1] + f * d[2]);
    let gp = -(2.0 * d[2] + f * d[3]);
    Ok((g, 0.5 * (g + f * gp)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeReport {
    /// Smallest `e^{-F} / f^{a -+ b} - 1`; must be positive.
    pub lower_margin: f64,
    /// Smallest `e - e^{-F} / f^{a -+ b}`; must be non-negative.
    pub upper_margin: f64,
    /// Smallest distance of `f F'` from the closed end of its bracket.
    pub fprime_closed_margin: f64,
    /// Smallest distance of `f F'` from the open end of its bracket.
    pub fprime_open_margin: f64,
    pub holds: bool,
}

/// Checks the two-sided envelopes of `e^{-F}` and `F'` on `[lo, hi]`.
pub fn envelope_check(rep: &Reparametrization, lo: f64, hi: f64, samples: usize) -> Result<EnvelopeReport> {
    let (s, branch) = match rep {
        Reparametrization::SplitLow(s) => (*s, Branch::Low),
        Reparametrization::SplitHigh(s) => (*s, Branch::High),
        _ => return Err(LabError::InvalidInput("envelopes are defined for split weights".into())),
    };
    if !(lo > 0.0 && lo < hi) {
        return Err(LabError::InvalidInput(format!("bad sample range [{lo}, {hi}]")));
    }
    match branch {
        Branch::Low if hi > 1.0 => return Err(LabError::RangeMismatch(format!("low branch sampled up to f = {hi}"))),
        Branch::High if lo < 1.0 => return Err(LabError::RangeMismatch(format!("high branch sampled from f = {lo}"))),
        _ => {}
    }
    let samples = samples.max(2);
    let mut rep_out = EnvelopeReport {
        lower_margin: f64::INFINITY,
        upper_margin: f64::INFINITY,
        fprime_closed_margin: f64::INFINITY,
        fprime_open_margin: f64::INFINITY,
        holds: true,
    };
    for k in 0..samples {
        let f = lo * (hi / lo).powf(k as f64 / (samples - 1) as f64);
        let (big_f, fp, _) = eval_weight(rep, f)?;
        let (expo, closed, open) = match branch {
            // f F' in [-a, -(a-b))
            Branch::Low => (s.a - s.b, f * fp + s.a, -(s.a - s.b) - f * fp),
            // f F' in (-(a+b), -a]
            Branch::High => (s.a + s.b, -s.a - f * fp, f * fp + s.a + s.b),
        };
        // e^{-F}/f^expo computed in log form
        let ratio = (-big_f - expo * f.ln()).exp();
        rep_out.lower_margin = rep_out.lower_margin.min(ratio - 1.0);
        rep_out.upper_margin = rep_out.upper_margin.min(std::f64::consts::E - ratio);
        rep_out.fprime_closed_margin = rep_out.fprime_closed_margin.min(closed);
        rep_out.fprime_open_margin = rep_out.fprime_open_margin.min(open);
    }
    let tol = 1e-12;
    rep_out.holds = rep_out.lower_margin > 0.0
        && rep_out.upper_margin >= -tol
        && rep_out.fprime_closed_margin >= -tol
        && rep_out.fprime_open_margin > 0.0;
    Ok(rep_out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BulkCoefficient {
    /// `f |F'| G - H`.
    pub value: f64,
    /// The positive lower bound expected for the branch, if any.
    pub bound: Option<f64>,
    /// Set when `b = 0`, where the coefficient carries no positivity.
    pub degenerate: bool,
}

pub fn bulk_coefficient(rep: &Reparametrization, f: f64) -> Result<BulkCoefficient> {
    let (_, fp, _) = eval_weight(rep, f)?;
    let (g, h) = gh(rep, f)?;
    let value = f * fp.abs() * g - h;
    let (bound, degenerate) = match rep {
        Reparametrization::SplitLow(s) => (Some(s.b * s.b * s.p * f.powf(s.p - 1.0)), s.b == 0.0),
        Reparametrization::SplitHigh(s) => (Some(s.b * s.b * s.p * f.powf(-s.p - 1.0)), s.b == 0.0),
        Reparametrization::PowerLog { .. } => (None, true),
        Reparametrization::Custom(_) => (None, false),
    };
    Ok(BulkCoefficient { value, bound, degenerate })
}

/// A positive potential given in closed form on the exterior.
#[derive(Clone, Debug)]
pub struct Potential {
    pub label: String,
    form: ClosedForm,
    pub sup_bound: Option<f64>,
}

impl Potential {
    pub fn new(label: impl Into<String>, form: ClosedForm) -> Self {
        Potential { label: label.into(), form, sup_bound: None }
    }

    pub fn constant(c: f64) -> Self {
        Potential { label: format!("V={c}"), form: ClosedForm::constant(c), sup_bound: Some(c.abs()) }
    }

    /// `V = c f^{q}`.
    pub fn power_of_f(c: f64, q: f64) -> Self {
        Potential::new(format!("V={c}*f^{q}"), ClosedForm::new(move |u, v| (-(u * v)).powf(q) * c))
    }

    pub fn with_sup_bound(mut self, m: f64) -> Self {
        self.sup_bound = Some(m);
        self
    }

    pub fn form(&self) -> &ClosedForm {
        &self.form
    }

    pub fn value_at(&self, p: SpacetimePoint) -> f64 {
        self.form.value_at(p)
    }

    pub fn jet_at(&self, u: Jet, v: Jet) -> Jet {
        self.form.eval(u, v)
    }

    /// `(u d_u + v d_v) V` at a point.
    pub fn scaling_derivative(&self, p: SpacetimePoint) -> f64 {
        let j = self.form.jet_at(p);
        p.u * j.d0() + p.v * j.d1()
    }

    /// `(u d_u + v d_v) log V`.
    pub fn scaling_log_derivative(&self, p: SpacetimePoint) -> f64 {
        let j = self.form.jet_at(p);
        (p.u * j.d0() + p.v * j.d1()) / j.value()
    }
}

/// `grad f . grad log V - ((n-1+4a)/4)(p - 1 - 4/(n-1+4a))`.
pub fn gamma_v(pot: &Potential, a: f64, p: f64, point: SpacetimePoint, n: Dimension) -> Result<f64> {
    point.require_exterior()?;
    let v = pot.value_at(point);
    if !(v > 0.0) {
        return Err(LabError::InvalidPotential(format!("V = {v} is not positive at {point:?}")));
    }
    let c = (n.as_f64() - 1.0 + 4.0 * a) / 4.0;
    Ok(0.5 * pot.scaling_log_derivative(point) - c * (p - 1.0 - 1.0 / c))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ExponentRegime {
    Subconformal,
    Conformal,
    Superconformal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Flag {
    pub holds: bool,
    pub margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PotentialFlags {
    /// Decay bound `|V| <= B p min(beta-p, p) min(f^{-1+p/2}, f^{-1-p/2})`; margin is `1 - |V|/bound`.
    pub finite_order: Flag,
    pub strong_monotone: Flag,
    pub focusing_monotone: Flag,
    pub defocusing_monotone: Flag,
    pub regime: ExponentRegime,
}

pub fn exponent_regime(p: f64, n: Dimension) -> ExponentRegime {
    let pc = 1.0 + 4.0 / (n.as_f64() - 1.0);
    if (p - pc).abs() <= 1e-12 * pc {
        ExponentRegime::Conformal
    } else if p < pc {
        ExponentRegime::Subconformal
    } else {
        ExponentRegime::Superconformal
    }
}

/// The decay envelope `B p min(beta-p, p) min(f^{-1+p/2}, f^{-1-p/2})`.
pub fn finite_order_bound(big_b: f64, beta: f64, p: f64, f: f64) -> f64 {
    big_b * p * (beta - p).min(p) * f.powf(-1.0 + p / 2.0).min(f.powf(-1.0 - p / 2.0))
}

/// Sample points: grid nodes plus a band around `f = 1`.
pub(crate) fn classification_samples(grid: &GridSpec) -> Vec<SpacetimePoint> {
    let mut pts = Vec::with_capacity(grid.ns() * grid.ny() + 6 * grid.ny());
    for i in 0..grid.ns() {
        for j in 0..grid.ny() {
            pts.push(grid.point(i, j));
        }
    }
    let (s0, s1) = (grid.s(0), grid.s(grid.ns() - 1));
    if s0 < 0.0 && s1 > 0.0 {
        let ds = grid.ds();
        for j in 0..grid.ny() {
            for k in [-0.5, -0.25, -0.05, 0.05, 0.25, 0.5] {
                let s = k * ds;
                let y = grid.y(j);
                pts.push(SpacetimePoint::new(-(0.5 * (s - y)).exp(), (0.5 * (s + y)).exp()));
            }
        }
    }
    pts
}

pub fn classify_potential(
    pot: &Potential,
    beta: f64,
    p: f64,
    big_b: f64,
    mu: f64,
    grid: &GridSpec,
) -> Result<PotentialFlags> {
    if !(p > 0.0 && p < beta) {
        return Err(LabError::InvalidInput(format!("need 0 < p < beta, got p = {p}, beta = {beta}")));
    }
    let n = grid.dimension();
    let nn = n.as_f64();
    let mut fo = f64::INFINITY;
    let mut dmin = f64::INFINITY;
    let mut dmax = f64::NEG_INFINITY;
    for pt in classification_samples(grid) {
        let j = pot.form().jet_at(pt);
        let v = j.value();
        if !(v > 0.0) || !v.is_finite() {
            return Err(LabError::InvalidPotential(format!("V = {v} at f = {}, h = {}", pt.f(), pt.h())));
        }
        let bound = finite_order_bound(big_b, beta, p, pt.f());
        fo = fo.min(1.0 - v / bound);
        let d = (pt.u * j.d0() + pt.v * j.d1()) / v;
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let strong = dmin - (-2.0 + mu);
    let focusing = dmin - (-(nn - 1.0) / 2.0 * (1.0 + 4.0 / (nn - 1.0) - p) + mu);
    let defocusing = (nn - 1.0) / 2.0 * (p - 1.0 - 4.0 / (nn - 1.0)) - dmax;
    let tol = 1e-12;
    Ok(PotentialFlags {
        finite_order: Flag { holds: fo >= -tol, margin: fo },
        strong_monotone: Flag { holds: strong > 0.0, margin: strong },
        focusing_monotone: Flag { holds: focusing > 0.0, margin: focusing },
        defocusing_monotone: Flag { holds: defocusing >= -tol, margin: defocusing },
        regime: exponent_regime(p, n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn low() -> Reparametrization {
        Reparametrization::SplitLow(SplitParams::new(1.0, 0.1, 0.5).unwrap())
    }
    fn high() -> Reparametrization {
        Reparametrization::SplitHigh(SplitParams::new(1.0, 0.1, 0.5).unwrap())
    }

    #[test]
    fn parameter_validation() {
        assert!(validate_params(1.0, 0.1, 0.5).is_ok());
        assert!(matches!(validate_params(1.0, 0.5, 0.5), Err(LabError::InvalidWeightParams { .. })));
        assert!(validate_params(0.0, 0.0, 0.5).is_err());
        assert!(validate_params(1.0, 0.0, 2.0).is_err());
        assert!(validate_params(1.0, -0.01, 0.5).is_err());
    }

    #[test]
    fn split_low_values_at_one() {
        let (f, fp, _) = eval_weight(&low(), 1.0).unwrap();
        assert_relative_eq!(f, -0.2, epsilon = 1e-15);
        assert_relative_eq!(fp, -1.0, epsilon = 1e-15);
        assert!(matches!(eval_weight(&low(), 0.0), Err(LabError::DomainError(_))));
    }

    #[test]
    fn g_and_h_examples() {
        let (g, _) = gh(&low(), 0.25).unwrap();
        assert_relative_eq!(g, 0.1, epsilon = 1e-14);
        let (_, h) = gh(&low(), 1.0).unwrap();
        assert_relative_eq!(h, 0.0125, epsilon = 1e-15);
    }

    #[test]
    fn branches_glue_at_one() {
        let a = low().derivatives(1.0).unwrap();
        let b = high().derivatives(1.0).unwrap();
        assert_relative_eq!(a[0], b[0], epsilon = 1e-15);
        assert_relative_eq!(a[1], b[1], epsilon = 1e-15);
        assert_relative_eq!(gh(&low(), 1.0).unwrap().0, gh(&high(), 1.0).unwrap().0, epsilon = 1e-15);
    }

    #[test]
    fn high_branch_envelope_example() {
        let (f, _, _) = eval_weight(&high(), 100.0).unwrap();
        let ratio = (-f).exp() / 100f64.powf(1.1);
        assert!(ratio > 1.0 && ratio <= std::f64::consts::E);
        assert!(envelope_check(&high(), 1.0, 1e4, 200).unwrap().holds);
        assert!(envelope_check(&low(), 1e-4, 1.0, 200).unwrap().holds);
        assert!(matches!(envelope_check(&low(), 0.5, 2.0, 10), Err(LabError::RangeMismatch(_))));
    }

    #[test]
    fn bulk_coefficient_examples() {
        let c = bulk_coefficient(&low(), 1.0).unwrap();
        assert_relative_eq!(c.value, 0.0375, epsilon = 1e-15);
        assert_relative_eq!(c.bound.unwrap(), 0.005, epsilon = 1e-15);
        let c = bulk_coefficient(&high(), 1.0).unwrap();
        assert_relative_eq!(c.value, 0.0625, epsilon = 1e-15);
        let z = Reparametrization::SplitLow(SplitParams::new(1.0, 0.0, 0.5).unwrap());
        assert!(bulk_coefficient(&z, 0.3).unwrap().degenerate);
    }

    #[test]
    fn custom_weight_needs_second_derivative() {
        let c = Reparametrization::Custom(CustomWeight::new("log only", |f: f64| vec![-f.ln(), -1.0 / f]));
        assert!(matches!(eval_weight(&c, 1.0), Err(LabError::MissingDerivative(_))));
    }

    #[test]
    fn gamma_examples() {
        let n3 = Dimension::new(3).unwrap();
        let pt = SpacetimePoint::new(-0.7, 1.3);
        let one = Potential::constant(1.0);
        assert_relative_eq!(gamma_v(&one, 0.3, 1.0, pt, n3).unwrap(), 1.0, epsilon = 1e-14);
        assert_relative_eq!(gamma_v(&one, 0.1, 3.0, pt, n3).unwrap(), -0.2, epsilon = 1e-14);
    }

    #[test]
    fn regimes() {
        let n3 = Dimension::new(3).unwrap();
        assert_eq!(exponent_regime(2.0, n3), ExponentRegime::Subconformal);
        assert_eq!(exponent_regime(3.0, n3), ExponentRegime::Conformal);
        assert_eq!(exponent_regime(4.0, n3), ExponentRegime::Superconformal);
    }
}
