use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point (u={u}, v={v}) is outside the exterior region u < 0 < v")]
    OutsideExteriorRegion { u: f64, v: f64 },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("weight overflow: {0}")]
    WeightOverflow(String),
    #[error("invalid weight parameters: {condition}")]
    InvalidWeightParams { condition: String },
    #[error("f = {0} is outside the weight domain")]
    DomainError(f64),
    #[error("custom weight does not supply derivative of order {0}")]
    MissingDerivative(usize),
    #[error("range mismatch: {0}")]
    RangeMismatch(String),
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("weight is not inward directed (F' = {fp} at f = {f})")]
    NotInwardDirected { f: f64, fp: f64 },
    #[error("mode not supported: {0}")]
    ModeNotSupported(String),
    #[error("invalid cutoffs: {0}")]
    InvalidCutoffs(String),
    #[error("region out of grid: {0}")]
    RegionOutOfGrid(String),
    #[error("region mismatch: {0}")]
    RegionMismatch(String),
    #[error("Gamma_V changes sign on the region (min {min}, max {max})")]
    GammaSignIndefinite { min: f64, max: f64 },
    #[error("insufficient sequence: {0}")]
    InsufficientSequence(String),
    #[error("field vanishes on most nodes ({masked} of {total} masked)")]
    MostlyMasked { masked: usize, total: usize },
    #[error("unstable time step: dt/dr = {0} exceeds 0.9")]
    UnstableStep(f64),
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("closed form required: {0}")]
    ClosedFormRequired(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn ensure_finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(LabError::InvalidInput(format!("{name} must be finite, got {x}")))
    }
}
