//! Fixed-momentum solves of the smoothed discrete problem, derived flow
//! fields, and the qualitative checks on a solution.
//!
//! Minimisation mode runs a projected, preconditioned nonlinear conjugate
//! gradient method (Polak-Ribiere+, Armijo backtracking along the projected
//! path). The preconditioner is a Cholesky factor of the Hessian with the
//! active bound constraints pinned, shifted by a multiple of its gradient-term
//! diagonal whenever it is indefinite; it is refreshed every
//! `hessian_refresh` iterations and whenever the active set changes. When
//! energy differences drop to round-off the line search accepts steps that
//! reduce the projected residual instead. PDE mode relaxes the same gradient
//! with three-colour nonlinear Gauss-Seidel.

mod checks;
mod problem;

pub use checks::{bernoulli_check, check_invariants, verify_subsonic, BernoulliReport, InvariantCheck, SubsonicReport};
pub use problem::{inlet_subsolution_margin, outlet_supersolution_margin, JetProblem};

use crate::energy::{DiscreteEnergy, EnergyError};
use crate::flow_state::{FlowError, FlowTables};
use crate::geometry::{DomainGrid, GeometryError, NodeKind};
use crate::numerics::skyline::SkylineMatrix;
use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

/// Nodes with psi >= Q (1 - COINCIDENCE_TOL) count as coincidence nodes.
pub const COINCIDENCE_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("no convergence in stage {stage} after {iterations} iterations (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    IterationLimit { stage: usize, iterations: usize, residual: f64, tolerance: f64 },
    #[error("qualitative failure: {property} violated at ({x:.6}, {y:.6}) with value {value:.3e}")]
    Qualitative { property: String, x: f64, y: f64, value: f64 },
    #[error("solver setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMode {
    Minimize,
    PdeFixedPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub mode: SolverMode,
    /// Iteration budget per smoothing stage (minimisation mode).
    pub max_iterations: usize,
    /// Sweep budget per smoothing stage (PDE mode).
    pub max_sweeps: usize,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Step doublings tried after a full step is accepted, so the projected
    /// path can move the coincidence set by several cells per iteration.
    pub max_step_doublings: usize,
    /// Relative energy decrease below which an iteration counts as stalled.
    pub energy_rtol: f64,
    /// Sup-norm of the projected EL residual, relative to g^* Q.
    pub residual_tol: f64,
    /// delta_0 = c_delta h lambda_eps.
    pub c_delta: f64,
    pub delta_stages: usize,
    pub delta_ratio: f64,
    /// Width of the first warm-up stage as a fraction of Q; warm-up stages
    /// halve the width until it reaches the first scheduled width. Zero
    /// disables them.
    pub warmup_width: f64,
    /// Residual tolerance of the warm-up stages.
    pub warmup_tol: f64,
    /// Iterations between preconditioner refreshes.
    pub hessian_refresh: usize,
    /// Gauss-Seidel relaxation factor (PDE mode).
    pub relaxation: f64,
    pub monotone_projection: bool,
    /// Turn violated bound or monotonicity invariants into errors.
    pub strict_invariants: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::Minimize,
            max_iterations: 400,
            max_sweeps: 20_000,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 40,
            max_step_doublings: 6,
            energy_rtol: 1e-10,
            residual_tol: 1e-8,
            c_delta: 1.0,
            delta_stages: 3,
            delta_ratio: 0.5,
            warmup_width: 0.125,
            warmup_tol: 1e-3,
            hessian_refresh: 1,
            relaxation: 1.0,
            monotone_projection: false,
            strict_invariants: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = [
            ("armijo_c1", self.armijo_c1),
            ("energy_rtol", self.energy_rtol),
            ("residual_tol", self.residual_tol),
            ("c_delta", self.c_delta),
            ("relaxation", self.relaxation),
            ("warmup_tol", self.warmup_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SolverError::Setup(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(SolverError::Setup("backtrack_factor must lie in (0, 1)".into()));
        }
        if !(self.delta_ratio > 0.0 && self.delta_ratio < 1.0) {
            return Err(SolverError::Setup("delta_ratio must lie in (0, 1)".into()));
        }
        if !(self.warmup_width >= 0.0 && self.warmup_width <= 1.0) {
            return Err(SolverError::Setup("warmup_width must lie in [0, 1]".into()));
        }
        if self.delta_stages == 0 {
            return Err(SolverError::Setup("the smoothing schedule must have at least one stage".into()));
        }
        if self.max_iterations == 0 || self.max_sweeps == 0 || self.hessian_refresh == 0 {
            return Err(SolverError::Setup("iteration budgets must be positive".into()));
        }
        Ok(())
    }

    /// Indicator widths of the continuation schedule.
    pub fn delta_schedule(&self, h: f64, lambda_eps: f64, q: f64) -> Vec<f64> {
        // Without an indicator term the width only affects diagnostics.
        let base = if lambda_eps > 0.0 { self.c_delta * h * lambda_eps } else { h * q };
        (0..self.delta_stages).map(|k| base * self.delta_ratio.powi(k as i32)).collect()
    }

    /// Wide warm-up widths preceding the schedule (empty without an indicator).
    pub fn warmup_schedule(&self, h: f64, lambda_eps: f64, q: f64) -> Vec<f64> {
        let first = self.delta_schedule(h, lambda_eps, q)[0];
        let mut out = Vec::new();
        if lambda_eps > 0.0 && self.warmup_width > 0.0 {
            let mut d = self.warmup_width * q;
            while d > 1.5 * first {
                out.push(d);
                d *= 0.5;
            }
        }
        out
    }
}

/// Starting field for the unknown nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum Initialization {
    /// Linear in x between the inlet and outlet columns.
    Blend,
    /// Inlet column extended horizontally.
    InletExtension,
    /// Blend plus uniform noise of the given amplitude (fraction of Q).
    Random { seed: u64, amplitude: f64 },
    /// Values for every grid node; boundary entries are overwritten. The
    /// field is taken as a warm start, so the warm-up stages are skipped.
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: usize,
    pub iteration: usize,
    pub delta: f64,
    pub energy: f64,
    pub residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct JetSolution {
    pub grid: DomainGrid,
    pub q: f64,
    /// Free-boundary momentum, absent for problems without an indicator.
    pub lambda: Option<f64>,
    pub lambda_eps: f64,
    /// Final indicator width.
    pub delta: f64,
    pub psi: Vec<f64>,
    pub rho: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub mach: Vec<f64>,
    pub energy: f64,
    /// Final projected residual relative to g^* Q.
    pub residual: f64,
    pub trace: Vec<TraceEntry>,
    pub invariants: Vec<InvariantCheck>,
    pub iterations: usize,
    pub seconds: f64,
}

impl JetSolution {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.psi[self.grid.node(i, j)]
    }
}

/// Starting field including the boundary values.
pub fn initial_field(grid: &DomainGrid, boundary: &[f64], q: f64, init: &Initialization) -> Vec<f64> {
    let last = grid.nx - 1;
    let blend = |n: usize| {
        let (i, j) = grid.coords(n);
        let s = i as f64 / last as f64;
        (1.0 - s) * boundary[grid.node(0, j)] + s * boundary[grid.node(last, j)]
    };
    let mut psi = boundary.to_vec();
    match init {
        Initialization::Blend => {
            for &n in grid.unknowns() {
                psi[n] = blend(n);
            }
        }
        Initialization::InletExtension => {
            for &n in grid.unknowns() {
                psi[n] = boundary[grid.node(0, grid.coords(n).1)];
            }
        }
        Initialization::Random { seed, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for &n in grid.unknowns() {
                psi[n] = blend(n) + amplitude * q * rng.gen_range(-1.0..1.0);
            }
        }
        Initialization::Given(v) => {
            assert_eq!(v.len(), grid.len(), "initial field does not match the grid");
            for &n in grid.unknowns() {
                psi[n] = v[n];
            }
        }
    }
    for &n in grid.unknowns() {
        psi[n] = psi[n].clamp(0.0, q);
    }
    psi
}

/// Projected gradient entry for a variable in [0, Q].
#[inline]
fn projected(grad: f64, psi: f64, q: f64) -> f64 {
    if psi >= q * (1.0 - COINCIDENCE_TOL) {
        grad.max(0.0)
    } else if psi <= 0.0 {
        grad.min(0.0)
    } else {
        grad
    }
}

/// Whether a bound is active: at the bound with the gradient pushing outward.
#[inline]
fn is_active(grad: f64, psi: f64, q: f64) -> bool {
    (psi >= q * (1.0 - COINCIDENCE_TOL) && grad <= 0.0) || (psi <= 0.0 && grad >= 0.0)
}

fn residual_norm(grid: &DomainGrid, grad: &[f64], psi: &[f64], q: f64, scale: f64) -> f64 {
    grid.unknowns()
        .iter()
        .map(|&n| projected(grad[n], psi[n], q).abs())
        .fold(0.0, f64::max)
        / scale
}

fn monotone_project(grid: &DomainGrid, psi: &mut [f64]) {
    for j in 0..grid.ny {
        let mut run = psi[grid.node(0, j)];
        for i in 1..grid.nx {
            let n = grid.node(i, j);
            if grid.kind(n).is_unknown() {
                psi[n] = psi[n].max(run);
            }
            run = psi[n];
        }
    }
}

struct Stage {
    iterations: usize,
    converged: bool,
    residual: f64,
    energy: f64,
}

/// Relative energy change treated as round-off by the line search.
const ENERGY_NOISE: f64 = 1e-12;

struct Minimizer<'a> {
    energy: &'a DiscreteEnergy<'a>,
    cfg: &'a SolverConfig,
    q: f64,
    scale: f64,
    pattern: Vec<usize>,
}

impl<'a> Minimizer<'a> {
    fn run_stage(&self, psi: &mut [f64], stage: usize, tol: f64, budget: usize, trace: &mut Vec<TraceEntry>) -> Result<Stage, SolverError> {
        let grid = self.energy.grid();
        let unknowns = grid.unknowns();
        let nu = unknowns.len();
        let q = self.q;
        let cfg = self.cfg;
        let delta = self.energy.delta();
        let mut matrix = SkylineMatrix::new(self.pattern.clone());
        let mut backup = matrix.clone();
        let mut sigma = 0.0;
        let (mut energy, mut grad) = self.energy.value_and_gradient(psi)?;
        let mut cells = self.energy.cell_energies(psi)?;
        let mut active = vec![false; nu];
        let mut factored_at: Option<usize> = None;
        let mut dir = vec![0.0; nu];
        let mut prev_r = vec![0.0; nu];
        let mut prev_rz = 0.0;
        let mut stalled = 0;
        let mut residual;
        let mut trial = psi.to_vec();
        let mut wide = psi.to_vec();
        for it in 0..budget {
            let r: Vec<f64> = unknowns.iter().map(|&n| projected(grad[n], psi[n], q)).collect();
            residual = r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / self.scale;
            if residual <= tol {
                return Ok(Stage { iterations: it, converged: true, residual, energy });
            }
            let new_active: Vec<bool> = unknowns.iter().map(|&n| is_active(grad[n], psi[n], q)).collect();
            let changed = new_active != active;
            active = new_active;
            let refresh = match factored_at {
                None => true,
                Some(k) => changed || it - k >= cfg.hessian_refresh,
            };
            if refresh {
                self.factor(psi, &active, &mut matrix, &mut backup, &mut sigma)?;
                factored_at = Some(it);
            }
            let mut z: Vec<f64> = r.iter().zip(&active).map(|(v, &a)| if a { 0.0 } else { *v }).collect();
            matrix.solve(&mut z);
            z.iter_mut().zip(&active).for_each(|(v, &a)| {
                if a {
                    *v = 0.0
                }
            });
            let rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = if changed || refresh || prev_rz <= 0.0 {
                0.0
            } else {
                let num: f64 = z.iter().zip(r.iter().zip(&prev_r)).map(|(zi, (ri, pi))| zi * (ri - pi)).sum();
                (num / prev_rz).max(0.0)
            };
            for k in 0..nu {
                dir[k] = if active[k] { 0.0 } else { -z[k] + beta * dir[k] };
            }
            let mut slope: f64 = dir.iter().zip(&r).map(|(d, g)| d * g).sum();
            if slope >= 0.0 {
                for k in 0..nu {
                    dir[k] = -z[k];
                }
                slope = -rz;
            }
            prev_r = r;
            prev_rz = rz;
            if slope >= 0.0 {
                return Ok(Stage { iterations: it, converged: false, residual, energy });
            }
            // Armijo backtracking along the projected path.
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..cfg.max_backtracks {
                for (k, &n) in unknowns.iter().enumerate() {
                    trial[n] = (psi[n] + alpha * dir[k]).clamp(0.0, q);
                }
                if cfg.monotone_projection {
                    monotone_project(grid, &mut trial);
                }
                let change = self.energy.energy_change(&trial, &cells)?;
                let decrease: f64 = unknowns.iter().map(|&n| grad[n] * (trial[n] - psi[n])).sum();
                if change <= cfg.armijo_c1 * decrease.min(0.0) && change.is_finite() {
                    accepted = Some((energy + change, None));
                    break;
                }
                // Energy differences below round-off: fall back to requiring a
                // smaller projected residual.
                if change.abs() <= ENERGY_NOISE * energy.abs() {
                    let (e, g) = self.energy.value_and_gradient(&trial)?;
                    if residual_norm(grid, &g, &trial, q, self.scale) < residual {
                        accepted = Some((e, Some(g)));
                        break;
                    }
                }
                alpha *= cfg.backtrack_factor;
            }
            if let Some((e_best, None)) = accepted {
                if alpha == 1.0 {
                    let mut best = e_best - energy;
                    for _ in 0..cfg.max_step_doublings {
                        let a = 2.0 * alpha;
                        for (k, &n) in unknowns.iter().enumerate() {
                            wide[n] = (psi[n] + a * dir[k]).clamp(0.0, q);
                        }
                        if cfg.monotone_projection {
                            monotone_project(grid, &mut wide);
                        }
                        let change = self.energy.energy_change(&wide, &cells)?;
                        if !(change < best) {
                            break;
                        }
                        best = change;
                        alpha = a;
                        std::mem::swap(&mut trial, &mut wide);
                    }
                    accepted = Some((energy + best, None));
                }
            }
            let Some((e_new, g_new)) = accepted else {
                if factored_at == Some(it) {
                    debug!("stage {stage}: line search failed with a fresh preconditioner");
                    return Ok(Stage { iterations: it, converged: false, residual, energy });
                }
                factored_at = None;
                prev_rz = 0.0;
                continue;
            };
            let rel = (energy - e_new) / energy.abs().max(f64::MIN_POSITIVE);
            stalled = if rel < cfg.energy_rtol { stalled + 1 } else { 0 };
            // Stagnant energy with a fresh preconditioner: the residual is at
            // its attainable floor.
            if stalled >= 20 && factored_at == Some(it) {
                debug!("stage {stage}: energy stagnant at residual {residual:.3e}");
            }
            psi.copy_from_slice(&trial);
            match g_new {
                Some(g) => {
                    energy = e_new;
                    grad = g;
                }
                None => {
                    let (e, g) = self.energy.value_and_gradient(psi)?;
                    energy = e;
                    grad = g;
                }
            }
            cells = self.energy.cell_energies(psi)?;
            trace.push(TraceEntry { stage, iteration: it, delta, energy, residual, step: alpha });
            debug!("stage {stage} it {it}: energy {energy:.12e} residual {residual:.3e} step {alpha:.3e}");
        }
        residual = residual_norm(grid, &grad, psi, q, self.scale);
        Ok(Stage { iterations: budget, converged: residual <= tol, residual, energy })
    }

    /// Factors the Hessian model, adding the smallest multiple `sigma` of the
    /// G-part diagonal that keeps it positive definite. `sigma` carries over
    /// between calls and is relaxed after each success.
    fn factor(
        &self,
        psi: &[f64],
        active: &[bool],
        matrix: &mut SkylineMatrix,
        backup: &mut SkylineMatrix,
        sigma: &mut f64,
    ) -> Result<(), SolverError> {
        let diag = self.energy.assemble_hessian(psi, matrix, true);
        matrix.pin_mask(active);
        backup.copy_from(matrix);
        let mut s = if *sigma < 1e-3 { 0.0 } else { 0.1 * *sigma };
        for _ in 0..12 {
            if s > 0.0 {
                for (k, &d) in diag.iter().enumerate() {
                    if !active[k] {
                        matrix.add(k, k, s * d + 1e-14 * self.scale);
                    }
                }
            }
            if matrix.factor().is_ok() {
                *sigma = s;
                return Ok(());
            }
            matrix.copy_from(backup);
            s = (10.0 * s).max(1e-3);
        }
        Err(SolverError::Setup("preconditioner: Hessian model not positive definite".into()))
    }
}

fn colour_classes(grid: &DomainGrid) -> [Vec<usize>; 3] {
    let mut classes = [Vec::new(), Vec::new(), Vec::new()];
    for &n in grid.unknowns() {
        let (i, j) = grid.coords(n);
        classes[(i + j) % 3].push(n);
    }
    classes
}

fn relax_stage(
    energy: &DiscreteEnergy,
    psi: &mut [f64],
    cfg: &SolverConfig,
    scale: f64,
    stage: usize,
    tol: f64,
    budget: usize,
    trace: &mut Vec<TraceEntry>,
) -> Result<Stage, SolverError> {
    let grid = energy.grid();
    let q = energy.tables().constants().q;
    let delta = energy.delta();
    let classes = colour_classes(grid);
    let neighbours = |n: usize| {
        let (i, j) = grid.coords(n);
        [(i + 1, j), (i.wrapping_sub(1), j), (i, j + 1), (i, j.wrapping_sub(1)), (i + 1, j + 1), (i.wrapping_sub(1), j.wrapping_sub(1))]
    };
    let check_every = 10;
    let mut residual = f64::INFINITY;
    for sweep in 0..budget {
        // Interior of the coincidence set is frozen for this pass.
        let frozen: Vec<bool> = (0..grid.len())
            .map(|n| {
                grid.kind(n).is_unknown()
                    && psi[n] >= q - delta
                    && neighbours(n)
                        .iter()
                        .all(|&(i, j)| i >= grid.nx || j >= grid.ny || psi[grid.node(i, j)] >= q - delta)
            })
            .collect();
        for class in &classes {
            let updates: Vec<(usize, f64)> = class
                .par_iter()
                .with_min_len(256)
                .filter(|&&n| !frozen[n])
                .map(|&n| {
                    let g = energy.local_gradient(psi, n);
                    let c = energy.local_curvature(psi, n);
                    let step = if c > 0.0 { cfg.relaxation * g / c } else { 0.0 };
                    (n, (psi[n] - step).clamp(0.0, q))
                })
                .collect();
            for (n, v) in updates {
                psi[n] = v;
            }
        }
        if cfg.monotone_projection {
            monotone_project(grid, psi);
        }
        if sweep % check_every == check_every - 1 || sweep + 1 == budget {
            let (e, grad) = energy.value_and_gradient(psi)?;
            residual = residual_norm(grid, &grad, psi, q, scale);
            trace.push(TraceEntry { stage, iteration: sweep, delta, energy: e, residual, step: cfg.relaxation });
            debug!("stage {stage} sweep {sweep}: energy {e:.12e} residual {residual:.3e}");
            if residual <= tol {
                return Ok(Stage { iterations: sweep + 1, converged: true, residual, energy: e });
            }
        }
    }
    let e = energy.evaluate(psi)?;
    Ok(Stage { iterations: budget, converged: false, residual, energy: e })
}

/// Solves the smoothed problem for given boundary values. `lambda` is the
/// free-boundary momentum, or `None` to drop the indicator term.
pub fn solve_with_boundary(
    grid: &DomainGrid,
    tables: &FlowTables,
    boundary: &[f64],
    lambda: Option<f64>,
    cfg: &SolverConfig,
    init: &Initialization,
) -> Result<JetSolution, SolverError> {
    cfg.validate()?;
    let start = Instant::now();
    let q = tables.constants().q;
    let lambda_eps = lambda.map(|l| tables.lambda_eps_truncated(l)).unwrap_or(0.0);
    let schedule = cfg.delta_schedule(grid.h, lambda_eps, q);
    let mut psi = initial_field(grid, boundary, q, init);
    let scale = tables.g_upper() * q * grid.h * grid.h;
    let mut energy = DiscreteEnergy::new(grid, tables, lambda_eps, schedule[0]);
    let pattern = energy.hessian_pattern();
    let mut trace = Vec::new();
    let mut total = 0;
    let mut last = None;
    let warmup = match init {
        Initialization::Given(_) => Vec::new(),
        _ => cfg.warmup_schedule(grid.h, lambda_eps, q),
    };
    let stages: Vec<(f64, bool)> = warmup.iter().map(|&d| (d, true)).chain(schedule.iter().map(|&d| (d, false))).collect();
    for (stage, &(delta, is_warmup)) in stages.iter().enumerate() {
        energy.set_delta(delta);
        let tol = if is_warmup { cfg.warmup_tol.max(cfg.residual_tol) } else { cfg.residual_tol };
        let result = match cfg.mode {
            SolverMode::Minimize => {
                let m = Minimizer { energy: &energy, cfg, q, scale, pattern: pattern.clone() };
                m.run_stage(&mut psi, stage, tol, cfg.max_iterations, &mut trace)?
            }
            SolverMode::PdeFixedPoint => relax_stage(&energy, &mut psi, cfg, scale, stage, tol, cfg.max_sweeps, &mut trace)?,
        };
        total += result.iterations;
        info!(
            "stage {stage}{}: delta {delta:.3e} iterations {} residual {:.3e} energy {:.12e}",
            if is_warmup { " (warm-up)" } else { "" },
            result.iterations,
            result.residual,
            result.energy
        );
        if !is_warmup {
            last = Some(result);
        }
    }
    let last = last.expect("nonempty schedule");
    if !last.converged {
        return Err(SolverError::IterationLimit {
            stage: stages.len() - 1,
            iterations: last.iterations,
            residual: last.residual,
            tolerance: cfg.residual_tol,
        });
    }
    let (rho, u, v, mach) = derived_fields(grid, tables, &psi);
    let mut sol = JetSolution {
        grid: grid.clone(),
        q,
        lambda,
        lambda_eps,
        delta: *schedule.last().unwrap(),
        psi,
        rho,
        u,
        v,
        mach,
        energy: last.energy,
        residual: last.residual,
        trace,
        invariants: Vec::new(),
        iterations: total,
        seconds: start.elapsed().as_secs_f64(),
    };
    sol.invariants = check_invariants(&sol, tables, boundary);
    if cfg.strict_invariants {
        if let Some(bad) = sol.invariants.iter().find(|c| c.mandatory && !c.pass) {
            let (x, y) = bad.worst.unwrap_or((f64::NAN, f64::NAN));
            return Err(SolverError::Qualitative { property: bad.name.clone(), x, y, value: bad.value });
        }
    }
    Ok(sol)
}

/// Solves the nozzle problem at momentum `lambda`.
pub fn solve_fixed_lambda(
    problem: &JetProblem,
    lambda: f64,
    cfg: &SolverConfig,
    init: &Initialization,
) -> Result<JetSolution, SolverError> {
    let boundary = problem.boundary(lambda)?;
    solve_with_boundary(problem.grid(), problem.tables(), &boundary, Some(lambda), cfg, init)
}

/// Nodal gradient of psi by central differences (one-sided at the grid edge).
pub fn nodal_gradient(grid: &DomainGrid, psi: &[f64], i: usize, j: usize) -> (f64, f64) {
    let h = grid.h;
    let at = |i: usize, j: usize| psi[grid.node(i, j)];
    let px = if i == 0 {
        (at(1, j) - at(0, j)) / h
    } else if i == grid.nx - 1 {
        (at(i, j) - at(i - 1, j)) / h
    } else {
        (at(i + 1, j) - at(i - 1, j)) / (2.0 * h)
    };
    let py = if j == 0 {
        (at(i, 1) - at(i, 0)) / h
    } else if j == grid.ny - 1 {
        (at(i, j) - at(i, j - 1)) / h
    } else {
        (at(i, j + 1) - at(i, j - 1)) / (2.0 * h)
    };
    (px, py)
}

/// Density, velocity components and Mach number at every node from the
/// truncated density relation.
pub fn derived_fields(grid: &DomainGrid, tables: &FlowTables, psi: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let gamma = tables.constants().gamma;
    let h = grid.h;
    let values: Vec<(f64, f64, f64, f64)> = (0..grid.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|n| {
            let (i, j) = grid.coords(n);
            let (px, py) = nodal_gradient(grid, psi, i, j);
            // On the axis psi ~ a y^2, so psi_y / y -> 2 a and psi_x / y -> 0.
            let (ax, ay) = if j == 0 { (0.0, 2.0 * (psi[grid.node(i, 1)] - psi[n]) / (h * h)) } else { (px / grid.y(j), py / grid.y(j)) };
            let t = ax * ax + ay * ay;
            let g = tables.energy_terms(t, psi[n]).g_eps;
            let rho = 1.0 / g;
            let (u, v) = (g * ay, -g * ax);
            let c = rho.powf(0.5 * (gamma - 1.0));
            (rho, u, v, (u * u + v * v).sqrt() / c)
        })
        .collect();
    let mut out = (Vec::with_capacity(values.len()), Vec::new(), Vec::new(), Vec::new());
    for (r, u, v, m) in values {
        out.0.push(r);
        out.1.push(u);
        out.2.push(v);
        out.3.push(m);
    }
    out
}

/// Whether `n` and every node within `layers` grid steps are interior nodes.
pub(crate) fn deep_interior(grid: &DomainGrid, n: usize, layers: usize) -> bool {
    let (i, j) = grid.coords(n);
    if i < layers || j < layers || i + layers >= grid.nx || j + layers >= grid.ny {
        return false;
    }
    (i - layers..=i + layers).all(|a| (j - layers..=j + layers).all(|b| grid.kind(grid.node(a, b)) == NodeKind::Interior))
}
