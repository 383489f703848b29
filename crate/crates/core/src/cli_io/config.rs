//! Run configuration: a TOML document with problem, numerics, fit,
//! asymptotics and output blocks. Every key has the canonical default.

use super::CliError;
use crate::flow_state::{FlowConstants, FlowTables, UpstreamProfile};
use crate::freeboundary_fit::FitConfig;
use crate::geometry::NozzleGeometry;
use crate::solver::{Initialization, JetProblem, SolverConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NozzleSpec {
    /// N(y) = a ln((barH - y) / (barH - 1)).
    Log { a: f64 },
    /// Wall samples (y, N(y)) from (1, 0) upwards.
    Samples { ys: Vec<f64>, xs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant { value: f64 },
    /// Coefficients c_k of sum c_k y^k.
    Polynomial { coefficients: Vec<f64> },
    /// Samples (y, u(y)) from y = 0 to y = barH.
    Samples { ys: Vec<f64>, us: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub gamma: f64,
    pub q: f64,
    pub epsilon: f64,
    pub bar_h: f64,
    pub nozzle: NozzleSpec,
    pub profile: ProfileSpec,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            q: 4.0,
            epsilon: 0.1,
            bar_h: 2.0,
            nozzle: NozzleSpec::Log { a: 1.0 },
            profile: ProfileSpec::Constant { value: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Blend,
    InletExtension,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub mu: f64,
    pub r: f64,
    pub h: f64,
    /// Exponent of the inlet layer profile.
    pub s_exp: f64,
    /// Fixed inlet layer width; by default it is halved from (b_mu - 1)/8
    /// until the inlet profile is a discrete subsolution.
    pub k_mu: Option<f64>,
    /// Free-boundary momentum for `solve`.
    pub lambda: Option<f64>,
    pub init: InitKind,
    /// Noise amplitude of the random start, as a fraction of Q.
    pub noise: f64,
    pub seed: u64,
    /// Relative Bernoulli deviation accepted along contoured streamlines.
    pub bernoulli_tol: f64,
    /// Relative mass-flux error accepted on vertical slices.
    pub flux_tol: f64,
    /// Mean relative free-boundary condition residual accepted along the boundary.
    pub condition_tol: f64,
    /// Relative tolerance of the far-field slice comparisons.
    pub farfield_tol: f64,
    pub solver: SolverConfig,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            mu: 4.0,
            r: 8.0,
            h: 1.0 / 64.0,
            s_exp: 1.75,
            k_mu: None,
            lambda: None,
            init: InitKind::Blend,
            noise: 1e-3,
            seed: 0,
            bernoulli_tol: 1e-2,
            flux_tol: 1e-6,
            condition_tol: 0.05,
            farfield_tol: 0.02,
            solver: SolverConfig::default(),
        }
    }
}

impl NumericsConfig {
    pub fn initialization(&self) -> Initialization {
        match self.init {
            InitKind::Blend => Initialization::Blend,
            InitKind::InletExtension => Initialization::InletExtension,
            InitKind::Random => Initialization::Random { seed: self.seed, amplitude: self.noise },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymptoticsConfig {
    /// Momenta to evaluate; by default an even sweep of the subsonic branch.
    pub lambdas: Option<Vec<f64>>,
    pub sweep_points: usize,
    /// Fraction of the branch [Lambda_0, Lambda_max] covered by the sweep.
    pub sweep_fraction: f64,
}

impl Default for AsymptoticsConfig {
    fn default() -> Self {
        Self { lambdas: None, sweep_points: 10, sweep_fraction: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Omit wall-clock timings so repeated runs produce identical files.
    pub reproducible: bool,
    /// Worker threads; the JETFB_WORKERS environment variable overrides it.
    pub workers: Option<usize>,
    /// Significant digits of the field and boundary tables.
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("jetfb-out"), reproducible: false, workers: None, precision: 12 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub numerics: NumericsConfig,
    pub fit: FitConfig,
    pub asymptotics: AsymptoticsConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every parameter that can be checked without building the grid.
    pub fn validate(&self) -> Result<(), CliError> {
        self.tables()?;
        let n = &self.numerics;
        for (name, v) in [("mu", n.mu), ("r", n.r), ("h", n.h), ("s_exp", n.s_exp)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("bernoulli_tol", n.bernoulli_tol),
            ("flux_tol", n.flux_tol),
            ("condition_tol", n.condition_tol),
            ("farfield_tol", n.farfield_tol),
        ] {
            if !(v > 0.0) {
                return Err(CliError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(l) = n.lambda {
            if !(l > 0.0) || !l.is_finite() {
                return Err(CliError::Config(format!("lambda must be positive, got {l}")));
            }
        }
        if !(n.noise >= 0.0) {
            return Err(CliError::Config(format!("noise must be nonnegative, got {}", n.noise)));
        }
        n.solver.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let a = &self.asymptotics;
        if a.sweep_points < 2 || !(a.sweep_fraction > 0.0 && a.sweep_fraction < 1.0) {
            return Err(CliError::Config("asymptotics sweep needs at least 2 points and a fraction in (0, 1)".into()));
        }
        if self.output.precision == 0 || self.output.precision > 17 {
            return Err(CliError::Config("precision must lie in 1..=17".into()));
        }
        if self.output.workers == Some(0) {
            return Err(CliError::Config("workers must be positive".into()));
        }
        Ok(())
    }

    pub fn profile(&self) -> Result<UpstreamProfile, CliError> {
        let bar_h = self.problem.bar_h;
        let p = match &self.problem.profile {
            ProfileSpec::Constant { value } => UpstreamProfile::constant(*value, bar_h),
            ProfileSpec::Polynomial { coefficients } => UpstreamProfile::polynomial(coefficients.clone(), bar_h),
            ProfileSpec::Samples { ys, us } => {
                if ys.last() != Some(&bar_h) {
                    return Err(CliError::Config(format!("profile samples must end at bar_h = {bar_h}")));
                }
                UpstreamProfile::samples(ys.clone(), us.clone())
            }
        };
        p.map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn tables(&self) -> Result<FlowTables, CliError> {
        let p = &self.problem;
        let profile = self.profile()?;
        let c = FlowConstants::new(p.gamma, p.q, p.epsilon, &profile).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(FlowTables::new(c, profile))
    }

    pub fn nozzle(&self) -> Result<NozzleGeometry, CliError> {
        let bar_h = self.problem.bar_h;
        let n = match &self.problem.nozzle {
            NozzleSpec::Log { a } => NozzleGeometry::log(*a, bar_h),
            NozzleSpec::Samples { ys, xs } => NozzleGeometry::samples(ys.clone(), xs.clone(), bar_h),
        };
        n.map_err(|e| CliError::Config(e.to_string()))
    }

    /// The truncated nozzle problem; grid and inlet-layer failures are
    /// configuration errors.
    pub fn problem(&self) -> Result<JetProblem, CliError> {
        let n = &self.numerics;
        let tables = self.tables()?;
        let nozzle = self.nozzle()?;
        let p = match n.k_mu {
            Some(k) => JetProblem::with_inlet_width(tables, nozzle, n.mu, n.r, n.h, k, n.s_exp),
            None => JetProblem::new(tables, nozzle, n.mu, n.r, n.h, n.s_exp),
        };
        p.map_err(|e| CliError::Config(e.to_string()))
    }
}
