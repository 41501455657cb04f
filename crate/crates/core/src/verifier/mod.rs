//! Checks of the pointwise identity, the integrated estimates and the
//! uniqueness argument.
//!
//! Every check produces a [`CheckRecord`] whose status follows from its
//! margin and tolerance alone.

use std::collections::BTreeMap;

use serde::Serialize;

pub mod battery;
pub mod carleman;
pub mod identity;
pub mod limits;
pub mod pipeline;

pub use carleman::{carleman_nl_check, carleman_split_check, NlCarlemanReport, SideReport, SplitCarlemanReport};
pub use identity::{identity_convergence, identity_residual, identity_terms, pointwise_inequality, IdentityTerms};
pub use limits::{boundary_limit_experiment, proof_rate, LimitKind, LimitReport, LimitSequenceSpec};
pub use pipeline::{induced_potential, uniqueness_pipeline, InducedPotential, PipelineReport, Problem, Verdict};

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len().min(ys.len()) as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
}

impl Status {
    pub fn from_bool(ok: bool) -> Status {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub left: f64,
    pub right: f64,
    /// `right - left`.
    pub margin: f64,
    /// Discretisation error the margin is judged against.
    pub residual: f64,
    pub order: Option<f64>,
    pub status: Status,
    pub details: BTreeMap<String, f64>,
    /// `(param, value)` pairs, e.g. a limit sequence or a refinement study.
    pub series: Vec<(f64, f64)>,
}

impl CheckRecord {
    /// `left <= right` up to `tol`.
    pub fn inequality(name: impl Into<String>, left: f64, right: f64, tol: f64) -> Self {
        let margin = right - left;
        CheckRecord {
            name: name.into(),
            left,
            right,
            margin,
            residual: tol,
            order: None,
            status: Status::from_bool(margin >= -tol),
            details: BTreeMap::new(),
            series: Vec::new(),
        }
    }

    /// `|value - target| <= tol`; the margin is `tol - |value - target|`.
    pub fn close_to(name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        let err = (value - target).abs();
        CheckRecord {
            name: name.into(),
            left: value,
            right: target,
            margin: tol - err,
            residual: err,
            order: None,
            status: Status::from_bool(err <= tol),
            details: BTreeMap::new(),
            series: Vec::new(),
        }
    }

    /// A yes/no outcome with no natural sides.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        CheckRecord {
            name: name.into(),
            left: 0.0,
            right: 0.0,
            margin: if ok { 0.0 } else { -1.0 },
            residual: 0.0,
            order: None,
            status: Status::from_bool(ok),
            details: BTreeMap::new(),
            series: Vec::new(),
        }
    }

    pub fn with_detail(mut self, key: &str, value: f64) -> Self {
        self.details.insert(key.to_string(), value);
        self
    }

    pub fn with_series(mut self, series: Vec<(f64, f64)>) -> Self {
        self.series = series;
        self
    }

    pub fn with_order(mut self, order: Option<f64>) -> Self {
        self.order = order;
        self
    }

    pub fn with_status(mut self, status: Status) -> Self {
        self.status = status;
        self
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

/// Errors of a refinement study and the order fitted to them.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Convergence {
    pub spacings: Vec<f64>,
    pub errors: Vec<f64>,
    /// `None` when fewer than two errors lie above the noise floor.
    pub order: Option<f64>,
    pub floor: f64,
}

impl Convergence {
    pub fn fit(spacings: Vec<f64>, errors: Vec<f64>, floor: f64) -> Self {
        let (xs, ys): (Vec<f64>, Vec<f64>) = spacings
            .iter()
            .zip(&errors)
            .filter(|(_, e)| **e > floor)
            .map(|(h, e)| (h.ln(), e.ln()))
            .unzip();
        let order = if xs.len() >= 2 { Some(least_squares_slope(&xs, &ys)) } else { None };
        Convergence { spacings, errors, order, floor }
    }

    pub fn finest(&self) -> f64 {
        *self.errors.last().unwrap_or(&0.0)
    }

    /// Whether the finest error is already at the noise floor.
    pub fn below_floor(&self) -> bool {
        self.finest() <= self.floor
    }

    pub fn series(&self) -> Vec<(f64, f64)> {
        self.spacings.iter().copied().zip(self.errors.iter().copied()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        assert!((least_squares_slope(&xs, &ys) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn record_constructors() {
        let r = CheckRecord::inequality("a", 1.0, 0.9, 0.2);
        assert!(r.passed());
        assert!((r.margin + 0.1).abs() < 1e-15);
        assert!(!CheckRecord::inequality("a", 1.0, 0.9, 0.05).passed());
        let c = CheckRecord::close_to("b", 2.0, 2.1, 0.05);
        assert_eq!(c.status, Status::Fail);
        assert!(CheckRecord::close_to("b", 2.0, 2.01, 0.05).passed());
        assert!(!CheckRecord::flag("c", false).passed());
    }

    #[test]
    fn convergence_ignores_errors_at_the_floor() {
        let h = vec![0.4, 0.2, 0.1, 0.05];
        let e = vec![1.6e-3, 1e-4, 1e-13, 1e-13];
        let c = Convergence::fit(h.clone(), e, 1e-11);
        assert!((c.order.unwrap() - 4.0).abs() < 1e-12);
        assert!(c.below_floor());
        let c = Convergence::fit(h, vec![0.0; 4], 1e-11);
        assert_eq!(c.order, None);
    }

    #[test]
    fn status_serializes_lowercase() {
        assert_eq!(serde_json::to_string(&Status::Inconclusive).unwrap(), "\"inconclusive\"");
    }
}
