//! Problem builders and closed-form oracles shared by the integration tests.
//! The oracles use only gamma = 2 algebra and plain bisection.

#![allow(dead_code)]

use jetfb::cli_io::{ProfileSpec, RunConfig};
use jetfb::flow_state::FlowTables;
use jetfb::geometry::{DomainGrid, NodeKind};
use jetfb::solver::JetProblem;

pub fn canonical_config(h: f64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.numerics.h = h;
    cfg
}

pub fn canonical_tables() -> FlowTables {
    RunConfig::default().tables().expect("canonical tables")
}

pub fn canonical_problem(h: f64) -> Result<JetProblem, jetfb::cli_io::CliError> {
    canonical_config(h).problem()
}

/// u = 1 + y^4 with Q = 38/3, so rho_bar = 1.
pub fn quartic_tables() -> FlowTables {
    let mut cfg = RunConfig::default();
    cfg.problem.q = 38.0 / 3.0;
    cfg.problem.profile = ProfileSpec::Polynomial { coefficients: vec![1.0, 0.0, 0.0, 0.0, 1.0] };
    cfg.tables().expect("quartic tables")
}

/// u = 0.8 + 0.01 y^4 with Q = 256/75, so rho_bar = 2.
pub fn sheared_tables() -> FlowTables {
    let mut cfg = RunConfig::default();
    cfg.problem.q = 256.0 / 75.0;
    cfg.problem.profile = ProfileSpec::Polynomial { coefficients: vec![0.8, 0.0, 0.0, 0.0, 0.01] };
    cfg.tables().expect("sheared tables")
}

fn bisect(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Bernoulli functions of the oracle problems (gamma = 2, so h(rho) = rho).
#[derive(Debug, Clone, Copy)]
pub enum Bernoulli {
    Constant(f64),
    /// u = 1 + y^4, rho_bar = 1: psi_bar = y^2/2 + y^6/6.
    Quartic,
}

impl Bernoulli {
    fn height(z: f64) -> f64 {
        bisect(|y| y * y / 2.0 + y.powi(6) / 6.0 - z, 0.0, 3.0)
    }

    pub fn value(self, z: f64) -> f64 {
        match self {
            Bernoulli::Constant(b) => b,
            Bernoulli::Quartic => {
                let y = Self::height(z);
                let u = 1.0 + y.powi(4);
                0.5 * u * u + 1.0
            }
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Bernoulli::Constant(_) => 0.0,
            Bernoulli::Quartic => 4.0 * Self::height(z).powi(2),
        }
    }
}

/// Critical momentum t_c(s) for gamma = 2: rho_c = 2s/3.
pub fn critical_t(s: f64) -> f64 {
    let rc = 2.0 * s / 3.0;
    2.0 * rc * rc * (s - rc)
}

/// Subsonic root of 2 rho^2 (s - rho) = t on (rho_c, s).
pub fn oracle_density(t: f64, s: f64) -> f64 {
    bisect(|r| 2.0 * r * r * (s - r) - t, 2.0 * s / 3.0, s)
}

/// Whether every node within `margin` cells of (i, j) is interior.
pub fn deep_interior(g: &DomainGrid, i: usize, j: usize, margin: usize) -> bool {
    if i < margin || j < margin || i + margin >= g.nx || j + margin >= g.ny {
        return false;
    }
    (i - margin..=i + margin).all(|a| (j - margin..=j + margin).all(|b| g.kind(g.node(a, b)) == NodeKind::Interior))
}
