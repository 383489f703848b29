//! The diagnostics report and the registry of invariant names it covers.

use super::config::RunConfig;
use crate::asymptotics::{DownstreamState, FarfieldReport, MonotonicityRow};
use crate::freeboundary_fit::{ConditionReport, FitSample};
use crate::solver::{BernoulliReport, InvariantCheck, SubsonicReport, TraceEntry};
use serde::{Deserialize, Serialize};

/// Every invariant the report carries, with the module that owns it. Each
/// appears exactly once in a report, as PASS, FAIL or SKIP.
pub const REGISTRY: &[(&str, &str)] = &[
    ("geometry", "inlet_subsolution"),
    ("geometry", "outlet_supersolution"),
    ("solver", "psi_within_bounds"),
    ("solver", "x_monotone"),
    ("solver", "strict_interior_monotone"),
    ("solver", "negative_vertical_velocity"),
    ("solver", "comparison_bracket"),
    ("solver", "energy_monotone"),
    ("solver", "subsonic"),
    ("solver", "max_mach_below_one"),
    ("solver", "bernoulli"),
    ("solver", "mass_flux"),
    ("freeboundary_fit", "free_boundary_graph"),
    ("freeboundary_fit", "free_boundary_in_domain"),
    ("freeboundary_fit", "free_boundary_condition"),
    ("freeboundary_fit", "orifice_fit"),
    ("freeboundary_fit", "lambda_bounds"),
    ("freeboundary_fit", "upsilon_continuity"),
    ("freeboundary_fit", "upsilon_monotone"),
    ("asymptotics", "downstream_state_exists"),
    ("asymptotics", "downstream_density"),
    ("asymptotics", "downstream_speed_positive"),
    ("asymptotics", "theta_increasing_below_diagonal"),
    ("asymptotics", "downstream_mass_balance"),
    ("asymptotics", "downstream_bernoulli"),
    ("asymptotics", "h_d_monotone"),
    ("asymptotics", "upstream_slice"),
    ("asymptotics", "downstream_slice"),
    ("asymptotics", "downstream_height"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub module: String,
    pub name: String,
    pub verdict: Status,
    pub mandatory: bool,
    /// Non-finite values are written as null.
    pub value: Option<f64>,
    pub bound: Option<f64>,
    pub worst: Option<(f64, f64)>,
    pub note: Option<String>,
}

/// A check with an optional explanatory note.
#[derive(Debug, Clone)]
pub struct Noted {
    pub check: InvariantCheck,
    pub note: Option<String>,
}

impl From<InvariantCheck> for Noted {
    fn from(check: InvariantCheck) -> Self {
        Self { check, note: None }
    }
}

pub fn check(name: &str, pass: bool, value: f64, bound: f64, worst: Option<(f64, f64)>, mandatory: bool) -> InvariantCheck {
    InvariantCheck { name: name.into(), pass, value, bound, worst, mandatory }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// One verdict per registry entry, in registry order; entries without a
/// check are skipped with `skip_note`.
pub fn assemble_verdicts(checks: Vec<Noted>, skip_note: &str) -> Vec<Verdict> {
    for c in &checks {
        assert!(REGISTRY.iter().any(|r| r.1 == c.check.name), "unregistered invariant {}", c.check.name);
    }
    REGISTRY
        .iter()
        .map(|&(module, name)| match checks.iter().find(|c| c.check.name == name) {
            Some(Noted { check: c, note }) => Verdict {
                module: module.into(),
                name: name.into(),
                verdict: if c.pass { Status::Pass } else { Status::Fail },
                mandatory: c.mandatory,
                value: finite(c.value),
                bound: finite(c.bound),
                worst: c.worst,
                note: note.clone(),
            },
            None => Verdict {
                module: module.into(),
                name: name.into(),
                verdict: Status::Skip,
                mandatory: false,
                value: None,
                bound: None,
                worst: None,
                note: Some(skip_note.into()),
            },
        })
        .collect()
}

/// Exit status 0 when every mandatory verdict passes, 1 otherwise.
pub fn verdict_exit_code(verdicts: &[Verdict]) -> i32 {
    if verdicts.iter().any(|v| v.mandatory && v.verdict == Status::Fail) {
        1
    } else {
        0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub residual: f64,
    pub energy: f64,
    pub delta: f64,
    pub lambda_eps: f64,
    pub nodes: usize,
    pub unknowns: usize,
    pub k_mu: f64,
    pub k_mu_halvings: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundarySummary {
    pub level: f64,
    pub empty: bool,
    pub graph_points: usize,
    pub tail_points: usize,
    pub upsilon_1: Option<f64>,
    pub slope_residual: Option<f64>,
    pub h_num: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub lambda_star: f64,
    pub bracket: (f64, f64),
    pub final_bracket: (f64, f64),
    pub bracket_constant: f64,
    pub expansions: usize,
    pub bisection_steps: usize,
    pub bisection_bound: usize,
    pub converged: bool,
    pub ambiguous: bool,
    pub tol: f64,
    pub lambda_tol: f64,
    pub history: Vec<FitSample>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticsEntry {
    pub lambda: f64,
    pub state: Option<MonotonicityRow>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub total_seconds: f64,
    pub workers: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsReport {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub exit_code: i32,
    pub error: Option<String>,
    /// Momentum of the stored fields (Lambda* for a fit).
    pub lambda: Option<f64>,
    pub solve: Option<SolveSummary>,
    pub trace: Vec<TraceEntry>,
    pub invariants: Vec<Verdict>,
    pub subsonic: Option<SubsonicReport>,
    pub bernoulli: Option<BernoulliReport>,
    pub free_boundary: Option<BoundarySummary>,
    pub condition: Option<ConditionReport>,
    pub fit: Option<FitSummary>,
    pub farfield: Option<FarfieldReport>,
    pub downstream: Option<DownstreamState>,
    pub asymptotics: Vec<AsymptoticsEntry>,
    pub timing: Option<Timing>,
}

impl DiagnosticsReport {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            exit_code: 0,
            error: None,
            lambda: None,
            solve: None,
            trace: Vec::new(),
            invariants: Vec::new(),
            subsonic: None,
            bernoulli: None,
            free_boundary: None,
            condition: None,
            fit: None,
            farfield: None,
            downstream: None,
            asymptotics: Vec::new(),
            timing: None,
        }
    }
}

/// The parts of a stored report that `verify` reads back.
#[derive(Debug, Clone, Deserialize)]
pub struct StoredReport {
    pub command: String,
    pub config: RunConfig,
    pub exit_code: i32,
    pub lambda: Option<f64>,
    pub invariants: Vec<Verdict>,
}
