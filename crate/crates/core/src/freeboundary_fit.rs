//! Free-boundary extraction, the free-boundary condition residual, and the
//! bisection on the free-boundary momentum for continuous fit at the orifice.

use crate::flow_state::FlowTables;
use crate::geometry::{DomainGrid, NozzleGeometry};
use crate::solver::{solve_fixed_lambda, Initialization, InvariantCheck, JetProblem, JetSolution, SolverConfig, SolverError};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("free boundary is not a y-graph at y = {y}: crossings {xs:?}")]
    GraphViolation { y: f64, xs: Vec<f64> },
    #[error("solution has no orifice row at y = 1")]
    NoOrifice,
    #[error("no sign change of the orifice residual on [{lo}, {hi}] after {expansions} expansions")]
    NoFit { lo: f64, hi: f64, expansions: usize },
    #[error("invalid fit configuration: {0}")]
    Config(String),
}

/// Free boundary below the orifice height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeBoundary {
    /// Contour level Q - delta/2.
    pub level: f64,
    /// (y, x) samples of the y-graph x = Upsilon(y), increasing in y.
    pub graph: Vec<(f64, f64)>,
    /// (x, y) samples of the x-graph tail y = f(x), increasing in x.
    pub tail: Vec<(f64, f64)>,
    /// Upsilon(1), extrapolated from the top three graph samples.
    pub upsilon_1: Option<f64>,
    /// Upsilon'(1) - N'(1).
    pub slope_residual: Option<f64>,
    /// Asymptotic height estimate from the end of the tail.
    pub h_num: Option<f64>,
    /// No contour crossing at all below the orifice.
    pub empty: bool,
}

impl FreeBoundary {
    /// Sign of the orifice residual used by the bisection: an empty boundary
    /// counts as positive, a boundary with only a tail as negative.
    pub fn orifice_sign(&self) -> f64 {
        match self.upsilon_1 {
            Some(u) => u.signum(),
            None if self.empty => 1.0,
            None => -1.0,
        }
    }
}

/// Crossing abscissae of `level` along grid row j.
fn row_crossings(grid: &DomainGrid, psi: &[f64], level: f64, j: usize) -> Vec<f64> {
    let mut xs = Vec::new();
    for i in 0..grid.nx - 1 {
        let (a, b) = (psi[grid.node(i, j)], psi[grid.node(i + 1, j)]);
        if (a < level) != (b < level) {
            xs.push(grid.x(i) + grid.h * (level - a) / (b - a));
        }
    }
    xs
}

/// Crossing ordinates of `level` along grid column i on edges strictly below
/// row `top`; edges ending on the top row would pick up the ramp against the
/// fixed boundary y = 1.
fn column_crossings(grid: &DomainGrid, psi: &[f64], level: f64, i: usize, top: usize) -> Vec<f64> {
    let mut ys = Vec::new();
    for j in 0..top.saturating_sub(1) {
        let (a, b) = (psi[grid.node(i, j)], psi[grid.node(i, j + 1)]);
        if (a < level) != (b < level) {
            ys.push(grid.y(j) + grid.h * (level - a) / (b - a));
        }
    }
    ys
}

/// Value and derivative at `at` of the quadratic through three points.
fn quadratic_at(p: [(f64, f64); 3], at: f64) -> (f64, f64) {
    let [(x0, y0), (x1, y1), (x2, y2)] = p;
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let c = (d12 - d01) / (x2 - x0);
    let v = y0 + d01 * (at - x0) + c * (at - x0) * (at - x1);
    let dv = d01 + c * (2.0 * at - x0 - x1);
    (v, dv)
}

/// Level-set extraction on the vertex grid. The contour points are the edge
/// crossings of a marching-squares pass restricted to 0 < y < 1; they are
/// resampled as a y-graph on the grid rows and as an x-graph on the columns
/// of the trailing x-monotone part.
pub fn extract_level(
    grid: &DomainGrid,
    psi: &[f64],
    level: f64,
    nozzle: Option<&NozzleGeometry>,
) -> Result<FreeBoundary, FitError> {
    let top = grid.orifice_row().ok_or(FitError::NoOrifice)?;
    let mut graph = Vec::new();
    for j in 1..top {
        let xs = row_crossings(grid, psi, level, j);
        match xs.len() {
            0 => {}
            1 => graph.push((grid.y(j), xs[0])),
            _ => {
                let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if hi - lo > 2.0 * grid.h {
                    return Err(FitError::GraphViolation { y: grid.y(j), xs });
                }
                graph.push((grid.y(j), 0.5 * (lo + hi)));
            }
        }
    }
    let columns: Vec<Vec<f64>> = (0..grid.nx).map(|i| column_crossings(grid, psi, level, i, top)).collect();
    let empty = graph.is_empty() && columns.iter().all(|c| c.is_empty());
    // Tail: the longest run of columns with a single crossing ending at the
    // last column that has one.
    let mut tail = Vec::new();
    if let Some(end) = columns.iter().rposition(|c| !c.is_empty()) {
        let mut i = end as isize;
        while i >= 0 && columns[i as usize].len() == 1 {
            tail.push((grid.x(i as usize), columns[i as usize][0]));
            i -= 1;
        }
        tail.reverse();
    }
    let h_num = if tail.is_empty() {
        None
    } else {
        let (x0, x1) = (tail[0].0, tail[tail.len() - 1].0);
        let cut = x1 - 0.1 * (x1 - x0);
        tail.iter().filter(|p| p.0 >= cut).map(|p| p.1).reduce(f64::min)
    };
    let (upsilon_1, slope) = match graph.len() {
        0 => (None, None),
        1 => (Some(graph[0].1), None),
        2 => {
            let (a, b) = (graph[0], graph[1]);
            let s = (b.1 - a.1) / (b.0 - a.0);
            (Some(b.1 + s * (1.0 - b.0)), Some(s))
        }
        n => {
            let (v, dv) = quadratic_at([graph[n - 3], graph[n - 2], graph[n - 1]], 1.0);
            (Some(v), Some(dv))
        }
    };
    let slope_residual = match (slope, nozzle) {
        (Some(s), Some(nz)) => Some(s - nz.eval(1.0).1),
        _ => None,
    };
    Ok(FreeBoundary { level, graph, tail, upsilon_1, slope_residual, h_num, empty })
}

/// Free boundary of a solution at the midpoint of the indicator ramp.
pub fn extract_boundary(sol: &JetSolution) -> Result<FreeBoundary, FitError> {
    extract_level(&sol.grid, &sol.psi, sol.q - 0.5 * sol.delta, sol.grid.nozzle())
}

/// Bilinear interpolation of a nodal field, clamped to the grid.
pub fn interpolate(grid: &DomainGrid, f: &[f64], x: f64, y: f64) -> f64 {
    let h = grid.h;
    let sx = ((x + grid.mu) / h).clamp(0.0, (grid.nx - 1) as f64);
    let sy = (y / h).clamp(0.0, (grid.ny - 1) as f64);
    let i = (sx.floor() as usize).min(grid.nx - 2);
    let j = (sy.floor() as usize).min(grid.ny - 2);
    let (a, b) = (sx - i as f64, sy - j as f64);
    let v = |i: usize, j: usize| f[grid.node(i, j)];
    (1.0 - a) * (1.0 - b) * v(i, j) + a * (1.0 - b) * v(i + 1, j) + (1.0 - a) * b * v(i, j + 1) + a * b * v(i + 1, j + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSample {
    pub x: f64,
    pub y: f64,
    /// |grad psi / y| from the flow side.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub lambda: f64,
    pub samples: Vec<ConditionSample>,
    /// Relative deviation of |grad psi / y| from Lambda.
    pub max_rel: f64,
    pub mean_rel: f64,
    /// Relative deviation of Phi_eps(|grad psi / y|^2, Q) from lambda_eps^2.
    pub phi_max_rel: f64,
    pub phi_mean_rel: f64,
}

/// Number of points sampled along the free boundary.
pub const CONDITION_SAMPLES: usize = 50;

/// Samples |grad psi / y| along the y-graph polyline from the {psi < Q}
/// side with a one-sided second-order difference along the normal.
pub fn fb_condition_residual(sol: &JetSolution, fb: &FreeBoundary, tables: &FlowTables) -> Option<ConditionReport> {
    let lambda = sol.lambda?;
    // Polyline in (x, y), ordered by y.
    let pts: Vec<(f64, f64)> = fb.graph.iter().map(|&(y, x)| (x, y)).collect();
    if pts.len() < 2 {
        return None;
    }
    let mut arc = vec![0.0];
    for w in pts.windows(2) {
        let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
        arc.push(arc.last().unwrap() + d);
    }
    let total = *arc.last().unwrap();
    let grid = &sol.grid;
    let h = grid.h;
    let level = fb.level;
    let q = sol.q;
    let target_phi = sol.lambda_eps * sol.lambda_eps;
    let mut samples = Vec::with_capacity(CONDITION_SAMPLES);
    let mut seg = 0;
    for k in 0..CONDITION_SAMPLES {
        let s = total * (k as f64 + 0.5) / CONDITION_SAMPLES as f64;
        while seg + 2 < arc.len() && arc[seg + 1] < s {
            seg += 1;
        }
        let (p0, p1) = (pts[seg], pts[seg + 1]);
        let len = arc[seg + 1] - arc[seg];
        let a = if len > 0.0 { (s - arc[seg]) / len } else { 0.0 };
        let (x, y) = (p0.0 + a * (p1.0 - p0.0), p0.1 + a * (p1.1 - p0.1));
        // Normal towards increasing psi: psi grows with x along the graph.
        let (tx, ty) = ((p1.0 - p0.0) / len, (p1.1 - p0.1) / len);
        let (mut nx, mut ny) = (ty, -tx);
        if nx < 0.0 {
            nx = -nx;
            ny = -ny;
        }
        let f1 = interpolate(grid, &sol.psi, x - h * nx, y - h * ny);
        let f2 = interpolate(grid, &sol.psi, x - 2.0 * h * nx, y - 2.0 * h * ny);
        let dn = (3.0 * level - 4.0 * f1 + f2) / (2.0 * h);
        samples.push(ConditionSample { x, y, speed: dn / y });
    }
    let rel: Vec<f64> = samples.iter().map(|c| ((c.speed - lambda) / lambda).abs()).collect();
    let phi_rel: Vec<f64> = samples
        .iter()
        .map(|c| ((tables.energy_terms(c.speed * c.speed, q).phi - target_phi) / target_phi).abs())
        .collect();
    let n = samples.len() as f64;
    Some(ConditionReport {
        lambda,
        samples,
        max_rel: rel.iter().cloned().fold(0.0, f64::max),
        mean_rel: rel.iter().sum::<f64>() / n,
        phi_max_rel: phi_rel.iter().cloned().fold(0.0, f64::max),
        phi_mean_rel: phi_rel.iter().sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Initial bracket; defaults to (Q / c0, c0 Q).
    pub bracket: Option<(f64, f64)>,
    pub bracket_constant: f64,
    /// Times the bracket may be doubled outwards when the signs fail.
    pub max_expansions: usize,
    /// Tolerance on |Upsilon(1)|; defaults to 2h.
    pub tol: Option<f64>,
    /// Bisection floor on the bracket width; defaults to 1e-3 Q.
    pub lambda_tol: Option<f64>,
    /// Start each solve from the nearest solved momentum.
    pub warm_start: bool,
    /// Largest relative distance |Lambda' - Lambda| / Lambda of a warm start.
    pub warm_start_range: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { bracket: None, bracket_constant: 8.0, max_expansions: 3, tol: None, lambda_tol: None, warm_start: true, warm_start_range: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSample {
    pub lambda: f64,
    pub upsilon_1: Option<f64>,
    pub sign: f64,
    pub empty: bool,
    pub iterations: usize,
    pub residual: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub lambda_star: f64,
    pub solution: JetSolution,
    pub boundary: FreeBoundary,
    pub history: Vec<FitSample>,
    /// Bracket after any expansion.
    pub bracket: (f64, f64),
    /// Bracket containing Lambda* when the bisection stopped.
    pub final_bracket: (f64, f64),
    pub expansions: usize,
    pub bisection_steps: usize,
    pub converged: bool,
    /// Bracket collapsed to the floor without |Upsilon(1)| <= tol.
    pub ambiguous: bool,
    pub tol: f64,
    pub lambda_tol: f64,
}

impl FitResult {
    /// Effective constant C with Q / C <= Lambda* <= C Q.
    pub fn bracket_constant(&self, q: f64) -> f64 {
        (q / self.bracket.0).max(self.bracket.1 / q)
    }
}

struct Evaluator<'a> {
    problem: &'a JetProblem,
    solver: &'a SolverConfig,
    warm_start: bool,
    warm_start_range: f64,
    history: Vec<FitSample>,
    fields: Vec<(f64, Vec<f64>)>,
}

impl Evaluator<'_> {
    fn eval(&mut self, lambda: f64) -> Result<(JetSolution, FreeBoundary), FitError> {
        let near = if self.warm_start {
            self.fields
                .iter()
                .filter(|f| (f.0 - lambda).abs() <= self.warm_start_range * lambda)
                .min_by(|a, b| (a.0 - lambda).abs().total_cmp(&(b.0 - lambda).abs()))
        } else {
            None
        };
        let start = Instant::now();
        let sol = match near {
            Some((from, psi)) => match solve_fixed_lambda(self.problem, lambda, self.solver, &Initialization::Given(psi.clone())) {
                Err(SolverError::IterationLimit { residual, .. }) => {
                    warn!("fit: warm start from Lambda {from} stalled at residual {residual:.3e}; restarting cold");
                    solve_fixed_lambda(self.problem, lambda, self.solver, &Initialization::Blend)?
                }
                other => other?,
            },
            None => solve_fixed_lambda(self.problem, lambda, self.solver, &Initialization::Blend)?,
        };
        let fb = extract_boundary(&sol)?;
        let sample = FitSample {
            lambda,
            upsilon_1: fb.upsilon_1,
            sign: fb.orifice_sign(),
            empty: fb.empty,
            iterations: sol.iterations,
            residual: sol.residual,
            seconds: start.elapsed().as_secs_f64(),
        };
        info!("fit: Lambda {lambda:.6} Upsilon(1) {:?} ({:.1} s)", fb.upsilon_1, sample.seconds);
        self.history.push(sample);
        if self.warm_start {
            self.fields.push((lambda, sol.psi.clone()));
        }
        Ok((sol, fb))
    }
}

/// Bisection on Lambda for Upsilon(1) = 0.
pub fn fit_lambda(problem: &JetProblem, cfg: &FitConfig, solver: &SolverConfig) -> Result<FitResult, FitError> {
    let q = problem.q();
    let h = problem.grid().h;
    if !(cfg.bracket_constant > 1.0) {
        return Err(FitError::Config("bracket_constant must exceed 1".into()));
    }
    let (mut lo, mut hi) = cfg.bracket.unwrap_or((q / cfg.bracket_constant, cfg.bracket_constant * q));
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(FitError::Config(format!("bracket ({lo}, {hi}) must satisfy 0 < lo < hi")));
    }
    let tol = cfg.tol.unwrap_or(2.0 * h);
    let lambda_tol = cfg.lambda_tol.unwrap_or(1e-3 * q);
    if !(tol > 0.0 && lambda_tol > 0.0 && cfg.warm_start_range >= 0.0) {
        return Err(FitError::Config("fit tolerances must be positive".into()));
    }
    let mut ev = Evaluator { problem, solver, warm_start: cfg.warm_start, warm_start_range: cfg.warm_start_range, history: Vec::new(), fields: Vec::new() };
    let done = |fb: &FreeBoundary| fb.upsilon_1.is_some_and(|u| u.abs() <= tol);
    let finish = |ev: Evaluator, sol, fb, lambda, bracket, last, expansions, steps, converged, ambiguous| FitResult {
        lambda_star: lambda,
        solution: sol,
        boundary: fb,
        history: ev.history,
        bracket,
        final_bracket: last,
        expansions,
        bisection_steps: steps,
        converged,
        ambiguous,
        tol,
        lambda_tol,
    };
    let mut at_lo = ev.eval(lo)?;
    let mut at_hi = ev.eval(hi)?;
    let mut expansions = 0;
    while at_lo.1.orifice_sign() <= 0.0 || at_hi.1.orifice_sign() >= 0.0 {
        if done(&at_lo.1) {
            return Ok(finish(ev, at_lo.0, at_lo.1, lo, (lo, hi), (lo, lo), expansions, 0, true, false));
        }
        if done(&at_hi.1) {
            return Ok(finish(ev, at_hi.0, at_hi.1, hi, (lo, hi), (hi, hi), expansions, 0, true, false));
        }
        if expansions == cfg.max_expansions {
            return Err(FitError::NoFit { lo, hi, expansions });
        }
        expansions += 1;
        if at_lo.1.orifice_sign() <= 0.0 {
            lo *= 0.5;
            at_lo = ev.eval(lo)?;
        }
        if at_hi.1.orifice_sign() >= 0.0 {
            hi *= 2.0;
            at_hi = ev.eval(hi)?;
        }
    }
    let bracket = (lo, hi);
    let mut steps = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        let (sol, fb) = ev.eval(mid)?;
        steps += 1;
        if done(&fb) {
            return Ok(finish(ev, sol, fb, mid, bracket, (lo, hi), expansions, steps, true, false));
        }
        if fb.orifice_sign() > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= lambda_tol {
            warn!("fit: bracket [{lo}, {hi}] at the floor with Upsilon(1) = {:?}", fb.upsilon_1);
            return Ok(finish(ev, sol, fb, mid, bracket, (lo, hi), expansions, steps, false, true));
        }
    }
}

/// Largest bisection count for a bracket of the given width.
pub fn bisection_bound(width: f64, lambda_tol: f64) -> usize {
    (width / lambda_tol).log2().ceil().max(0.0) as usize
}

/// Orifice residual jumps between momenta within 1% of each other.
pub fn continuity_check(history: &[FitSample], h: f64) -> InvariantCheck {
    let mut pts: Vec<(f64, f64)> = history.iter().filter_map(|s| s.upsilon_1.map(|u| (s.lambda, u))).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut worst = 0.0f64;
    let mut at = None;
    for w in pts.windows(2) {
        if (w[1].0 - w[0].0) <= 0.01 * w[0].0 {
            let jump = (w[1].1 - w[0].1).abs();
            if jump > worst {
                worst = jump;
                at = Some((w[0].0, w[1].0));
            }
        }
    }
    InvariantCheck {
        name: "upsilon_continuity".into(),
        pass: worst <= 10.0 * h,
        value: worst,
        bound: 10.0 * h,
        worst: at,
        mandatory: false,
    }
}

/// Upsilon(1) nonincreasing in Lambda across the recorded samples, up to
/// `tol`. Empty boundaries count as +infinity.
pub fn upsilon_monotone_check(history: &[FitSample], tol: f64) -> InvariantCheck {
    let mut pts: Vec<(f64, f64)> = history
        .iter()
        .filter_map(|s| match (s.upsilon_1, s.empty) {
            (Some(u), _) => Some((s.lambda, u)),
            (None, true) => Some((s.lambda, f64::INFINITY)),
            (None, false) => None,
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut worst = 0.0f64;
    let mut at = None;
    for w in pts.windows(2) {
        if w[0].1.is_finite() && w[1].1 - w[0].1 > worst {
            worst = w[1].1 - w[0].1;
            at = Some((w[0].0, w[1].0));
        }
    }
    InvariantCheck {
        name: "upsilon_monotone".into(),
        pass: worst <= tol,
        value: worst,
        bound: tol,
        worst: at,
        mandatory: false,
    }
}

/// Graph and location checks on an extracted free boundary.
pub fn boundary_checks(fb: &FreeBoundary, grid: &DomainGrid) -> Vec<InvariantCheck> {
    let outside = fb
        .graph
        .iter()
        .map(|&(y, x)| (x, y))
        .chain(fb.tail.iter().cloned())
        .map(|(x, y)| {
            let dx = (-grid.mu - x).max(x - grid.r).max(0.0);
            let dy = (-y).max(y - 1.0).max(0.0);
            (dx.max(dy), (x, y))
        })
        .fold((0.0f64, None), |acc, (d, p)| if d > acc.0 { (d, Some(p)) } else { acc });
    vec![
        InvariantCheck {
            name: "free_boundary_graph".into(),
            pass: true,
            value: fb.graph.len() as f64,
            bound: 0.0,
            worst: None,
            mandatory: true,
        },
        InvariantCheck {
            name: "free_boundary_in_domain".into(),
            pass: outside.0 == 0.0,
            value: outside.0,
            bound: 0.0,
            worst: outside.1,
            mandatory: true,
        },
    ]
}

#[cfg(test)]
mod tests;
