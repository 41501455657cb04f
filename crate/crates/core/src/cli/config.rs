//! Run configuration, schema version 1.

use serde::{Deserialize, Serialize};

use crate::fields::{NonlinearityU, Sign};
use crate::geometry::{AdmissibleRegion, Dimension};
use crate::verifier::battery::{battery_region, split_params, DEFAULT_SEED};
use crate::verifier::LimitKind;
use crate::weights::{validate_params, Potential, Reparametrization, SplitParams};

pub const SCHEMA_VERSION: u32 = 1;

/// A rejected configuration, with the JSON path of the offending value.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn bad(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.to_string(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    VerifyIdentity,
    VerifyCarleman,
    VerifyNl,
    Limits,
    Counterexample,
    Solve,
    Pipeline,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyIdentity => "verify-identity",
            Command::VerifyCarleman => "verify-carleman",
            Command::VerifyNl => "verify-nl",
            Command::Limits => "limits",
            Command::Counterexample => "counterexample",
            Command::Solve => "solve",
            Command::Pipeline => "pipeline",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub command: Command,
    #[serde(default = "default_n")]
    pub n: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub weight: WeightConfig,
    #[serde(default)]
    pub nonlinearity: NlConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub nonlinear: NonlinearCheckConfig,
    #[serde(default)]
    pub limits: LimitsConfig,
    #[serde(default)]
    pub counterexample: CounterexampleConfig,
    #[serde(default)]
    pub solve: SolveConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_n() -> u32 {
    3
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub region: AdmissibleRegion,
    /// Nodes per axis of the coarsest grid.
    pub nodes: usize,
    /// Number of grids in a refinement study.
    pub levels: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { region: battery_region(), nodes: 129, levels: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldConfig {
    #[default]
    Zero,
    Constant {
        #[serde(default = "one")]
        value: f64,
    },
    /// `e^F` for the configured weight.
    PsiOne,
    GaussianBump,
    /// Leapfrog evolution of the d'Alembert reference data.
    Dalembert,
    StaticMultipole {
        #[serde(default = "one_u32")]
        ell: u32,
    },
    Counterexample {
        #[serde(default = "six")]
        a: f64,
        #[serde(default = "two_and_half")]
        k: f64,
    },
}

impl FieldConfig {
    pub fn name(&self) -> &'static str {
        match self {
            FieldConfig::Zero => "zero",
            FieldConfig::Constant { .. } => "constant",
            FieldConfig::PsiOne => "psi-one",
            FieldConfig::GaussianBump => "gaussian-bump",
            FieldConfig::Dalembert => "dalembert",
            FieldConfig::StaticMultipole { .. } => "static-multipole",
            FieldConfig::Counterexample { .. } => "counterexample",
        }
    }
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

fn six() -> f64 {
    6.0
}

fn two_and_half() -> f64 {
    2.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightConfig {
    PowerLog { a: f64 },
    SplitLow { a: f64, b: f64, p: f64 },
    SplitHigh { a: f64, b: f64, p: f64 },
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig::PowerLog { a: 1.0 }
    }
}

impl WeightConfig {
    pub fn rep(&self) -> Reparametrization {
        match *self {
            WeightConfig::PowerLog { a } => Reparametrization::PowerLog { a },
            WeightConfig::SplitLow { a, b, p } => Reparametrization::SplitLow(SplitParams { a, b, p }),
            WeightConfig::SplitHigh { a, b, p } => Reparametrization::SplitHigh(SplitParams { a, b, p }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NlConfig {
    #[default]
    Zero,
    /// `sign V |phi|^{p+1}/(p+1)` with constant `V`.
    Power { sign: Sign, p: f64, v: f64 },
}

impl NlConfig {
    pub fn nonlinearity(&self) -> NonlinearityU {
        match *self {
            NlConfig::Zero => NonlinearityU::Zero,
            NlConfig::Power { sign, p, v } => NonlinearityU::Power { sign, p, v: Potential::constant(v) },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let s = split_params();
        SplitConfig { a: s.a, b: s.b, p: s.p }
    }
}

impl SplitConfig {
    pub fn params(&self) -> SplitParams {
        SplitParams { a: self.a, b: self.b, p: self.p }
    }
}

/// The nonlinear estimate with `F = -a log f`, checked on a solver field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearCheckConfig {
    pub a: f64,
    pub sign: Sign,
    pub p: f64,
    pub v: f64,
    /// Height of the initial bump.
    pub amplitude: f64,
    pub dr: f64,
}

impl Default for NonlinearCheckConfig {
    fn default() -> Self {
        NonlinearCheckConfig { a: 0.1, sign: Sign::Plus, p: 1.0, v: 1.0, amplitude: 0.3, dr: 0.005 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitsConfig {
    pub kind: LimitKind,
    /// Defaults to a start deep enough in the asymptotic regime for `kind`.
    pub start: Option<f64>,
    /// `alpha` or `beta` for the hyperboloid limits.
    pub exponent: f64,
    /// Decay excess of the integrand family.
    pub delta: f64,
    pub ratio: f64,
    pub count: usize,
    pub fit_last: usize,
    pub nodes: usize,
    pub rel_tol: f64,
    pub f_range: (f64, f64),
    pub t_window: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        LimitsConfig {
            kind: LimitKind::TauToInfinity,
            start: None,
            exponent: 0.5,
            delta: 1.0,
            ratio: 2.0,
            count: 6,
            fit_last: 4,
            nodes: 32,
            rel_tol: 0.1,
            f_range: (1.0, 4.0),
            t_window: 1e4,
        }
    }
}

impl LimitsConfig {
    pub fn start_or_default(&self) -> f64 {
        self.start.unwrap_or(match self.kind {
            LimitKind::TauToInfinity => 1e4,
            LimitKind::SigmaToZero | LimitKind::RhoToZero => 1e-4,
            LimitKind::OmegaToInfinity => 1e2,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub a: f64,
    /// Decay order the construction must beat.
    pub k: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        CounterexampleConfig { a: 6.0, k: 2.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub dr: f64,
    pub courant: f64,
    /// Bound on the sup error against the exact solution, for free d'Alembert runs.
    pub error_tolerance: f64,
    pub energy_tolerance: f64,
    /// Write the resampled field as `field.csv`.
    pub snapshot: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig { dr: 0.01, courant: 0.5, error_tolerance: 1e-2, energy_tolerance: 1e-2, snapshot: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    /// `box phi + V phi = 0`; `V` is the counterexample's own potential when
    /// the field is the counterexample, and zero otherwise.
    Linear {
        beta: f64,
        p: f64,
        #[serde(default)]
        big_b: Option<f64>,
    },
    Nonlinear { sign: Sign, p: f64, a: f64, v: f64 },
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Linear { beta: 2.0, p: 0.5, big_b: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub problem: ProblemConfig,
    /// Verdict label the run must produce, e.g. `"bulk forced to 0"`.
    pub expect: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub order_range: (f64, f64),
    /// Bound on the finest-grid identity residual of closed-form fields.
    pub identity_finest: Option<f64>,
    pub cancellation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { order_range: (1.5, 4.5), identity_finest: None, cancellation: 1e-10 }
    }
}

/// Parses and validates a configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        bad(if path == "." { "$" } else { &path }, e.into_inner().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(path, format!("{x} must be positive and finite")))
    }
}

fn ordered(path: &str, lo: f64, hi: f64) -> Result<(), ConfigError> {
    if lo < hi {
        Ok(())
    } else {
        Err(bad(path, format!("lower end {lo} must be below upper end {hi}")))
    }
}

fn power(path: &str, p: f64) -> Result<(), ConfigError> {
    if p >= 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(bad(path, format!("p = {p} must be at least 1")))
    }
}

fn weight_params(path: &str, a: f64, b: f64, p: f64) -> Result<(), ConfigError> {
    validate_params(a, b, p).map_err(|e| bad(path, e.to_string()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema != SCHEMA_VERSION {
            return Err(bad("schema", format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema)));
        }
        Dimension::new(self.n).map_err(|e| bad("n", e.to_string()))?;

        let r = &self.grid.region;
        for (k, x) in [("rho", r.rho), ("omega", r.omega), ("sigma", r.sigma), ("tau", r.tau)] {
            positive(&format!("grid.region.{k}"), x)?;
        }
        if r.rho >= r.omega {
            return Err(bad("grid.region.rho", format!("rho = {} must be below omega = {}", r.rho, r.omega)));
        }
        if r.sigma >= r.tau {
            return Err(bad("grid.region.sigma", format!("sigma = {} must be below tau = {}", r.sigma, r.tau)));
        }
        if self.grid.nodes < 9 || self.grid.nodes.is_multiple_of(2) {
            return Err(bad("grid.nodes", format!("{} must be odd and at least 9", self.grid.nodes)));
        }
        if self.grid.levels < 2 {
            return Err(bad("grid.levels", "a refinement study needs at least 2 levels"));
        }

        match self.weight {
            WeightConfig::PowerLog { a } => positive("weight.a", a)?,
            WeightConfig::SplitLow { a, b, p } | WeightConfig::SplitHigh { a, b, p } => weight_params("weight", a, b, p)?,
        }
        if let NlConfig::Power { p, v, .. } = self.nonlinearity {
            power("nonlinearity.p", p)?;
            if !v.is_finite() {
                return Err(bad("nonlinearity.v", "must be finite"));
            }
        }
        match self.field {
            FieldConfig::Constant { value } if !value.is_finite() => return Err(bad("field.value", "must be finite")),
            FieldConfig::Counterexample { a, k } => {
                positive("field.a", a)?;
                positive("field.k", k)?;
            }
            _ => {}
        }

        weight_params("split", self.split.a, self.split.b, self.split.p)?;
        let nl = &self.nonlinear;
        positive("nonlinear.a", nl.a)?;
        power("nonlinear.p", nl.p)?;
        positive("nonlinear.dr", nl.dr)?;
        if !(nl.v.is_finite() && nl.amplitude.is_finite()) {
            return Err(bad("nonlinear", "v and amplitude must be finite"));
        }

        let l = &self.limits;
        if let Some(s) = l.start {
            positive("limits.start", s)?;
        }
        if !(l.ratio > 1.0) {
            return Err(bad("limits.ratio", format!("{} must exceed 1", l.ratio)));
        }
        if l.count < 4 {
            return Err(bad("limits.count", format!("{} points are too few for a slope", l.count)));
        }
        if l.fit_last < 2 || l.fit_last > l.count {
            return Err(bad("limits.fit_last", format!("{} must lie in [2, count]", l.fit_last)));
        }
        if l.nodes < 2 {
            return Err(bad("limits.nodes", "need at least 2 nodes per panel"));
        }
        positive("limits.rel_tol", l.rel_tol)?;
        positive("limits.f_range.0", l.f_range.0)?;
        ordered("limits.f_range", l.f_range.0, l.f_range.1)?;
        positive("limits.t_window", l.t_window)?;

        positive("counterexample.a", self.counterexample.a)?;
        positive("counterexample.k", self.counterexample.k)?;

        positive("solve.dr", self.solve.dr)?;
        if !(self.solve.courant > 0.0 && self.solve.courant <= crate::solver::MAX_COURANT) {
            return Err(bad("solve.courant", format!("{} must lie in (0, {}]", self.solve.courant, crate::solver::MAX_COURANT)));
        }
        positive("solve.error_tolerance", self.solve.error_tolerance)?;
        positive("solve.energy_tolerance", self.solve.energy_tolerance)?;

        match self.pipeline.problem {
            ProblemConfig::Linear { beta, p, big_b } => {
                positive("pipeline.problem.beta", beta)?;
                positive("pipeline.problem.p", p)?;
                if beta <= p {
                    return Err(bad("pipeline.problem.beta", format!("beta = {beta} must exceed p = {p}")));
                }
                if let Some(b) = big_b {
                    positive("pipeline.problem.big_b", b)?;
                }
            }
            ProblemConfig::Nonlinear { p, a, v, .. } => {
                power("pipeline.problem.p", p)?;
                positive("pipeline.problem.a", a)?;
                if !v.is_finite() {
                    return Err(bad("pipeline.problem.v", "must be finite"));
                }
            }
        }

        let t = &self.tolerances;
        ordered("tolerances.order_range", t.order_range.0, t.order_range.1)?;
        if let Some(x) = t.identity_finest {
            positive("tolerances.identity_finest", x)?;
        }
        positive("tolerances.cancellation", t.cancellation)?;

        self.validate_for_command()
    }

    fn validate_for_command(&self) -> Result<(), ConfigError> {
        let r = &self.grid.region;
        match self.command {
            Command::VerifyCarleman if !(r.rho < 1.0 && r.omega > 1.0) => {
                Err(bad("grid.region", format!("the split estimate needs rho < 1 < omega, got ({}, {})", r.rho, r.omega)))
            }
            Command::Solve if !matches!(self.field, FieldConfig::Zero | FieldConfig::Dalembert) => {
                Err(bad("field.kind", "solve evolves zero or d'Alembert data"))
            }
            Command::Pipeline if matches!(self.field, FieldConfig::Dalembert | FieldConfig::PsiOne) => {
                Err(bad("field.kind", "the pipeline needs a closed-form field independent of the weight"))
            }
            _ => Ok(()),
        }
    }
}

/// Region of the configured grid, validated.
pub fn region(cfg: &RunConfig) -> crate::Result<AdmissibleRegion> {
    let r = cfg.grid.region;
    AdmissibleRegion::new(r.rho, r.omega, r.sigma, r.tau)
}
