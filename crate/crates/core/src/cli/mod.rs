//! Command-line front end.
//!
//! A run is either one configured command or the `battery` preset, which
//! expands to a fixed list of configurations. Jobs run in parallel and their
//! records are merged sorted by name.
//!
//! Exit codes: 0 when every check passes, 1 when one fails, 2 when the
//! configuration is rejected or cannot be executed, 3 on I/O failure.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, ValueEnum};
use rayon::prelude::*;

use crate::error::LabError;
use crate::fields::Sign;
use crate::verifier::battery::DEFAULT_SEED;
use crate::verifier::LimitKind;
pub use commands::run_command;
pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use report::{emit, Format, Outcome, VerificationReport};

pub const EXIT_PASS: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Battery,
}

#[derive(Debug, Parser)]
#[command(name = "carleman-lab", version, about = "Checks weighted Carleman estimates on the exterior of the light cone")]
pub struct Args {
    /// Command to run; must match the config's `command` if both are given.
    #[arg(value_parser = parse_command)]
    pub command: Option<Command>,
    /// JSON configuration (schema 1).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, conflicts_with_all = ["config", "command"])]
    pub preset: Option<Preset>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    /// Extra refinement levels on top of the configured grids.
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_command(s: &str) -> Result<Command, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown command `{s}`"))
}

/// Failure of a run before a report exists.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Lab(LabError),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Lab(LabError::Io(_)) => EXIT_IO,
            _ => EXIT_CONFIG,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error at {e}"),
            RunError::Lab(e) => write!(f, "{e}"),
        }
    }
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        RunError::Lab(e)
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

fn defaults(command: Command) -> RunConfig {
    let text = format!("{{\"schema\": 1, \"command\": \"{}\"}}", command.name());
    parse_config(&text).expect("default configuration is valid")
}

fn with(command: Command, seed: u64, edit: impl FnOnce(&mut RunConfig)) -> RunConfig {
    let mut c = defaults(command);
    c.seed = seed;
    edit(&mut c);
    c
}

/// The configurations the `battery` preset runs.
pub fn battery_configs(seed: u64) -> Vec<RunConfig> {
    use config::{FieldConfig as F, NlConfig, WeightConfig as W};
    let s = crate::verifier::battery::split_params();
    let fields = [F::Zero, F::Constant { value: 1.0 }, F::PsiOne, F::GaussianBump, F::Dalembert];
    let weights = [
        W::PowerLog { a: 1.0 },
        W::SplitLow { a: s.a, b: s.b, p: s.p },
        W::SplitHigh { a: s.a, b: s.b, p: s.p },
    ];
    let nls = [NlConfig::Zero, NlConfig::Power { sign: Sign::Plus, p: 1.0, v: 1.0 }];
    let mut out = Vec::new();
    for f in &fields {
        for w in &weights {
            for nl in &nls {
                out.push(with(Command::VerifyIdentity, seed, |c| {
                    c.field = f.clone();
                    c.weight = *w;
                    c.nonlinearity = *nl;
                }));
            }
        }
    }
    for f in fields.iter().cloned().chain([F::StaticMultipole { ell: 1 }]) {
        out.push(with(Command::VerifyCarleman, seed, |c| c.field = f));
    }
    let a = 0.1;
    for (sign, p, amplitude) in [(Sign::Plus, 1.0, 0.3), (Sign::Plus, 2.0, 0.3), (Sign::Minus, 3.0, 0.5)] {
        out.push(with(Command::VerifyNl, seed, |c| {
            c.nonlinear.a = a;
            c.nonlinear.sign = sign;
            c.nonlinear.p = p;
            c.nonlinear.amplitude = amplitude;
        }));
    }
    for kind in [LimitKind::TauToInfinity, LimitKind::SigmaToZero, LimitKind::RhoToZero, LimitKind::OmegaToInfinity] {
        out.push(with(Command::Limits, seed, |c| c.limits.kind = kind));
    }
    out.push(defaults(Command::Counterexample));
    let pipelines = [
        (F::Zero, "bulk forced to 0"),
        (F::StaticMultipole { ell: 1 }, "non-vanishing I1"),
        (F::Counterexample { a: 6.0, k: 2.5 }, "potential bound violated"),
    ];
    for (f, expect) in pipelines {
        out.push(with(Command::Pipeline, seed, |c| {
            c.field = f;
            c.pipeline.expect = Some(expect.to_string());
        }));
    }
    out
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse().ok()) {
        return t;
    }
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Resolves the arguments into the list of configurations to run and the report's command label.
pub fn resolve(args: &Args) -> Result<(String, Vec<RunConfig>), RunError> {
    if args.preset == Some(Preset::Battery) {
        return Ok(("battery".into(), battery_configs(args.seed.unwrap_or(DEFAULT_SEED))));
    }
    let mut cfg = match (&args.config, args.command) {
        (Some(path), cmd) => {
            let text = std::fs::read_to_string(path).map_err(|e| LabError::Io(format!("{}: {e}", path.display())))?;
            let cfg = parse_config(&text)?;
            if let Some(c) = cmd {
                if c != cfg.command {
                    return Err(ConfigError {
                        path: "command".into(),
                        message: format!("config runs `{}` but `{}` was requested", cfg.command.name(), c.name()),
                    }
                    .into());
                }
            }
            cfg
        }
        (None, Some(c)) => defaults(c),
        (None, None) => {
            return Err(ConfigError { path: "$".into(), message: "give a command, --config or --preset".into() }.into())
        }
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    Ok((cfg.command.name().to_string(), vec![cfg]))
}

/// Runs every configuration and assembles the report.
pub fn execute(label: &str, configs: &[RunConfig], refine: usize, timestamp: u64) -> Result<(VerificationReport, Outcome), RunError> {
    let outcomes: Vec<crate::Result<Outcome>> = configs.par_iter().map(|c| run_command(c, refine)).collect();
    let mut merged = Outcome::default();
    for o in outcomes {
        merged.absorb(o?);
    }
    let echo = serde_json::json!({ "refine": refine, "runs": configs });
    let report = VerificationReport::assemble(label, echo, &merged, timestamp)?;
    Ok((report, merged))
}

/// Entry point behind the binary; returns the process exit code.
pub fn main_with(args: Args) -> u8 {
    let run = || -> Result<VerificationReport, RunError> {
        let (label, configs) = resolve(&args)?;
        let (report, merged) = execute(&label, &configs, args.refine, timestamp())?;
        let written = emit(&report, &merged.artifacts, &args.out, args.format)?;
        for r in &report.records {
            let tag = if r.passed() { "PASS" } else if r.status == crate::verifier::Status::Fail { "FAIL" } else { "----" };
            println!("{tag} {}", r.name);
        }
        println!(
            "{}: {} records, report {}",
            if report.passed() { "pass" } else { "fail" },
            report.records.len(),
            written[0].display()
        );
        Ok(report)
    };
    match run() {
        Ok(r) if r.passed() => EXIT_PASS,
        Ok(_) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
