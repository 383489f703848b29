//! Qualitative checks on a converged solution.

use super::{deep_interior, nodal_gradient, JetSolution, COINCIDENCE_TOL};
use crate::flow_state::{enthalpy, FlowTables};
use crate::geometry::NodeKind;
use serde::{Deserialize, Serialize};

/// Interior margin (in grid steps) for the strict monotonicity and sign checks.
pub const INTERIOR_MARGIN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub pass: bool,
    /// Worst observed value of the checked quantity.
    pub value: f64,
    pub bound: f64,
    pub worst: Option<(f64, f64)>,
    /// Violations of mandatory checks fail the solve in strict mode.
    pub mandatory: bool,
}

/// Tracks the extreme value of a quantity and where it occurs.
struct Extreme {
    value: f64,
    at: Option<(f64, f64)>,
    max: bool,
}

impl Extreme {
    fn min() -> Self {
        Self { value: f64::INFINITY, at: None, max: false }
    }
    fn max() -> Self {
        Self { value: f64::NEG_INFINITY, at: None, max: true }
    }
    fn push(&mut self, v: f64, x: f64, y: f64) {
        if (self.max && v > self.value) || (!self.max && v < self.value) {
            self.value = v;
            self.at = Some((x, y));
        }
    }
}

/// Evaluates the bound, monotonicity, sign and comparison properties.
pub fn check_invariants(sol: &JetSolution, tables: &FlowTables, boundary: &[f64]) -> Vec<InvariantCheck> {
    let grid = &sol.grid;
    let q = sol.q;
    let h = grid.h;
    let psi = &sol.psi;
    let tol_mono = 1e-10 * q / h;
    let flow = |v: f64| v > 0.0 && v < q * (1.0 - COINCIDENCE_TOL);

    let mut bounds = Extreme::max();
    let mut mono = Extreme::min();
    let mut strict = Extreme::min();
    let mut vert = Extreme::max();
    let mut bracket = Extreme::max();
    let last = grid.nx - 1;
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let n = grid.node(i, j);
            let (x, y) = (grid.x(i), grid.y(j));
            bounds.push((-psi[n]).max(psi[n] - q), x, y);
            let interior = grid.kind(n) == NodeKind::Interior;
            // Forward differences from interior nodes; the inlet data itself
            // is bracketed by the comparison check.
            if i < last && interior {
                mono.push((psi[grid.node(i + 1, j)] - psi[n]) / h, x, y);
            }
            if interior {
                let lower = boundary[grid.node(0, j)];
                let upper = if grid.kind(grid.node(last, j)) == NodeKind::Outlet { boundary[grid.node(last, j)] } else { q };
                bracket.push((lower - psi[n]).max(psi[n] - upper), x, y);
            }
            if flow(psi[n]) && deep_interior(grid, n, INTERIOR_MARGIN) {
                strict.push(nodal_gradient(grid, psi, i, j).0, x, y);
                vert.push(sol.v[n], x, y);
            }
        }
    }
    let v_tol = tol_mono * tables.g_upper();
    let check = |name: &str, e: &Extreme, bound: f64, mandatory: bool| {
        let pass = if e.at.is_none() {
            true
        } else if e.max {
            e.value <= bound
        } else {
            e.value >= bound
        };
        InvariantCheck { name: name.into(), pass, value: e.value, bound, worst: e.at, mandatory }
    };
    vec![
        check("psi_within_bounds", &bounds, 0.0, true),
        check("x_monotone", &mono, -tol_mono, true),
        check("strict_interior_monotone", &strict, -tol_mono, false),
        check("negative_vertical_velocity", &vert, v_tol, false),
        check("comparison_bracket", &bracket, 1e-12 * q, false),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsonicReport {
    /// max |grad psi / y|^2 / t_c(B(psi)) over nodes with psi < Q.
    pub max_ratio: f64,
    pub worst: Option<(f64, f64)>,
    pub max_mach: f64,
    pub mach_worst: Option<(f64, f64)>,
    pub bound: f64,
    pub pass: bool,
    /// Number of nodes above the bound and the first few locations.
    pub violations: usize,
    pub located: Vec<(f64, f64, f64)>,
}

/// Subsonic margin of a solution.
pub fn verify_subsonic(sol: &JetSolution, tables: &FlowTables) -> SubsonicReport {
    let grid = &sol.grid;
    let q = sol.q;
    let h = grid.h;
    let bound = 1.0 - tables.constants().epsilon;
    let mut ratio = Extreme::max();
    let mut mach = Extreme::max();
    let mut violations = 0;
    let mut located = Vec::new();
    for i in 0..grid.nx {
        for j in 0..grid.ny {
            let n = grid.node(i, j);
            let z = sol.psi[n];
            if !(z < q * (1.0 - COINCIDENCE_TOL)) || grid.kind(n) == NodeKind::Wall {
                continue;
            }
            let (x, y) = (grid.x(i), grid.y(j));
            let t = if j == 0 {
                let a = 2.0 * (sol.psi[grid.node(i, 1)] - z) / (h * h);
                a * a
            } else {
                let (px, py) = nodal_gradient(grid, &sol.psi, i, j);
                (px * px + py * py) / (y * y)
            };
            let r = t / tables.critical_momentum(z);
            ratio.push(r, x, y);
            mach.push(sol.mach[n], x, y);
            if r > bound {
                violations += 1;
                if located.len() < 20 {
                    located.push((x, y, r));
                }
            }
        }
    }
    let max_ratio = if ratio.at.is_some() { ratio.value } else { 0.0 };
    let max_mach = if mach.at.is_some() { mach.value } else { 0.0 };
    SubsonicReport {
        max_ratio,
        worst: ratio.at,
        max_mach,
        mach_worst: mach.at,
        bound,
        pass: max_ratio <= bound && max_mach < 1.0,
        violations,
        located,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliReport {
    pub streamlines: usize,
    pub samples: usize,
    pub max_rel_deviation: f64,
    pub worst: Option<(f64, f64)>,
    /// Columns x and the discrete mass flux through them.
    pub flux_slices: Vec<(f64, f64)>,
    pub max_flux_rel_error: f64,
}

/// Bernoulli's law along 20 contoured streamlines and mass flux through
/// vertical slices.
pub fn bernoulli_check(sol: &JetSolution, tables: &FlowTables) -> BernoulliReport {
    let grid = &sol.grid;
    let q = sol.q;
    let gamma = tables.constants().gamma;
    let levels = 20;
    let mut dev = Extreme::max();
    let mut samples = 0;
    let usable = |n: usize| matches!(grid.kind(n), NodeKind::Interior | NodeKind::Axis);
    for k in 0..levels {
        let c = q * (k as f64 + 0.5) / levels as f64;
        let b_ref = tables.bernoulli(c).0;
        for i in 1..grid.nx - 1 {
            let Some(j) = (0..grid.ny - 1).find(|&j| sol.value(i, j) < c && sol.value(i, j + 1) >= c) else {
                continue;
            };
            let (a, b) = (grid.node(i, j), grid.node(i, j + 1));
            if !usable(a) || !usable(b) || sol.psi[b] >= q * (1.0 - COINCIDENCE_TOL) {
                continue;
            }
            let s = (c - sol.psi[a]) / (sol.psi[b] - sol.psi[a]);
            let lerp = |f: &[f64]| f[a] + s * (f[b] - f[a]);
            let (rho, u, v) = (lerp(&sol.rho), lerp(&sol.u), lerp(&sol.v));
            let b_num = 0.5 * (u * u + v * v) + enthalpy(rho, gamma);
            dev.push(((b_num - b_ref) / b_ref).abs(), grid.x(i), grid.y(j) + s * grid.h);
            samples += 1;
        }
    }
    let columns = 11;
    let mut flux_slices = Vec::new();
    let mut max_flux = 0.0f64;
    for c in 0..columns {
        let i = 1 + c * (grid.nx - 3) / (columns - 1);
        // Edge fluxes y rho u h = psi_{j+1} - psi_j summed up to the first
        // coincidence node.
        let mut flux = 0.0;
        for j in 0..grid.ny - 1 {
            let (lo, hi) = (sol.value(i, j), sol.value(i, j + 1));
            flux += hi - lo;
            if hi >= q * (1.0 - COINCIDENCE_TOL) {
                break;
            }
        }
        max_flux = max_flux.max(((flux - q) / q).abs());
        flux_slices.push((grid.x(i), flux));
    }
    BernoulliReport {
        streamlines: levels,
        samples,
        max_rel_deviation: if dev.at.is_some() { dev.value } else { 0.0 },
        worst: dev.at,
        flux_slices,
        max_flux_rel_error: max_flux,
    }
}
