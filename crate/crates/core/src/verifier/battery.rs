//! The standard fields, weights and nonlinearities the checks run over.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::fields::{ClosedForm, GridSpec, NonlinearityU, ScalarField, Sign};
use crate::geometry::{AdmissibleRegion, Dimension};
use crate::scalar::Scalar;
use crate::solver::{compact_bump, exact_dalembert, solve, InitialData, WaveProblem};
use crate::weights::{Potential, Reparametrization, SplitParams};

pub const DEFAULT_SEED: u64 = 7;

/// `D^{0.1,10}_{0.1,10}`, split at `f = 1` into the two halves of the split estimate.
pub fn battery_region() -> AdmissibleRegion {
    AdmissibleRegion { rho: 0.1, omega: 10.0, sigma: 0.1, tau: 10.0 }
}

pub fn split_params() -> SplitParams {
    SplitParams { a: 1.0, b: 0.1, p: 0.5 }
}

pub fn battery_weights() -> Vec<Reparametrization> {
    vec![
        Reparametrization::PowerLog { a: 1.0 },
        Reparametrization::SplitLow(split_params()),
        Reparametrization::SplitHigh(split_params()),
    ]
}

pub fn battery_nonlinearities() -> Vec<NonlinearityU> {
    vec![NonlinearityU::Zero, NonlinearityU::Power { sign: Sign::Plus, p: 1.0, v: Potential::constant(1.0) }]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BatteryField {
    Zero,
    Constant,
    /// `phi = e^F`, so that the conjugated field is identically one.
    PsiOne,
    /// Gaussian in `(log f, log h)` with a seeded centre, in the mode `l = 1`.
    GaussianBump { seed: u64 },
    /// Leapfrog solution of the free wave equation from d'Alembert data.
    SolverDalembert,
}

/// Grid resolution of the solver field, independent of the target grid.
pub const BATTERY_SOLVER_DR: f64 = 0.005;

impl BatteryField {
    pub fn all(seed: u64) -> Vec<BatteryField> {
        vec![
            BatteryField::Zero,
            BatteryField::Constant,
            BatteryField::PsiOne,
            BatteryField::GaussianBump { seed },
            BatteryField::SolverDalembert,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            BatteryField::Zero => "zero",
            BatteryField::Constant => "constant",
            BatteryField::PsiOne => "psi-one",
            BatteryField::GaussianBump { .. } => "gaussian-bump",
            BatteryField::SolverDalembert => "solver-dalembert",
        }
    }

    pub fn ell(&self) -> u32 {
        match self {
            BatteryField::GaussianBump { .. } => 1,
            _ => 0,
        }
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self, BatteryField::SolverDalembert)
    }

    /// Closed form of the field, if it has one; `rep` is used by `PsiOne`.
    pub fn closed_form(&self, rep: &Reparametrization) -> Result<Option<ClosedForm>> {
        Ok(match self {
            BatteryField::Zero => Some(ClosedForm::constant(0.0)),
            BatteryField::Constant => Some(ClosedForm::constant(1.0)),
            BatteryField::PsiOne => Some(rep.closed_form_exp_minus(-1.0)?),
            BatteryField::GaussianBump { seed } => Some(gaussian_bump(*seed)),
            BatteryField::SolverDalembert => None,
        })
    }

    /// The field on `grid` (whose mode is replaced by the field's own).
    pub fn build(&self, grid: &GridSpec, rep: &Reparametrization) -> Result<ScalarField> {
        let g = grid.with_ell(self.ell());
        match self.closed_form(rep)? {
            Some(cf) => Ok(ScalarField::from_closed_form(&g, cf)),
            None => Ok(solve(&dalembert_problem(g.dimension(), BATTERY_SOLVER_DR), &g)?.0),
        }
    }
}

/// `exp(-((s-s0)^2 + (y-y0)^2)/(2 w^2))` in `s = log f`, `y = log h`.
pub fn gaussian_bump(seed: u64) -> ClosedForm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s0: f64 = rng.gen_range(-0.5..0.5);
    let y0: f64 = rng.gen_range(-0.5..0.5);
    let w: f64 = rng.gen_range(0.6..0.9);
    ClosedForm::new(move |u, v| {
        let s = (-(u * v)).ln();
        let y = (-(v / u)).ln();
        let q = ((s - s0).square() + (y - y0).square()) * (-0.5 / (w * w));
        q.exp()
    })
}

/// Profile of the d'Alembert reference: an outgoing bump plus a weaker incoming one.
pub fn dalembert_profile() -> ClosedForm {
    let out = compact_bump(-2.0, 1.5, 1.0);
    let inc = compact_bump(1.5, 1.5, 0.5);
    exact_dalembert(move |x| out(x) + inc(x))
}

pub fn dalembert_problem(n: Dimension, dr: f64) -> WaveProblem {
    WaveProblem {
        n,
        ell: 0,
        nl: NonlinearityU::Zero,
        data: InitialData::from_closed_form(&dalembert_profile(), 3.5),
        dr,
        courant: 0.5,
    }
}

/// Battery grid over [`battery_region`] with `nodes` points per axis.
pub fn battery_grid(nodes: usize) -> Result<GridSpec> {
    GridSpec::over_region(&battery_region(), Dimension::new(3)?, 0, nodes, nodes)
}
