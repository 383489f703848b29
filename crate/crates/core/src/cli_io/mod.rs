//! Configuration, orchestration of the probe / solve / fit / asymptotics /
//! verify commands, the plain-text output tables and the diagnostics report.
//!
//! Exit codes: 0 when every mandatory invariant passes, 1 when one fails,
//! 2 for configuration errors and 3 for solver failures (diagnostics are
//! still written).

mod config;
mod output;
mod report;

pub use config::{AsymptoticsConfig, InitKind, NozzleSpec, NumericsConfig, OutputConfig, ProblemConfig, ProfileSpec, RunConfig};
pub use output::{boundary_table, fields_table, read_table, report_json, sci, ASYMPTOTICS_FILE, BOUNDARY_FILE, FIELDS_FILE, REPORT_FILE};
pub use report::{
    assemble_verdicts, check, verdict_exit_code, AsymptoticsEntry, BoundarySummary, DiagnosticsReport, FitSummary, Noted,
    SolveSummary, Status, StoredReport, Timing, Verdict, REGISTRY,
};

use crate::asymptotics::{downstream_state, farfield_compare, lambda_monotonicity_probe, MonotonicityRow};
use crate::flow_state::{momentum_sq, FlowTables};
use crate::freeboundary_fit::{
    bisection_bound, boundary_checks, continuity_check, extract_boundary, fb_condition_residual, fit_lambda,
    upsilon_monotone_check, FitError, FreeBoundary,
};
use crate::solver::{
    bernoulli_check, check_invariants, derived_fields, outlet_supersolution_margin, solve_fixed_lambda, verify_subsonic,
    JetProblem, JetSolution,
};
use log::info;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVARIANT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "JETFB_WORKERS";

/// Largest relative energy increase between iterates of one stage.
const ENERGY_MONOTONE_TOL: f64 = 1e-10;

/// Tolerance of the inlet and outlet profile checks, relative to g^* Q.
const PROFILE_TOL: f64 = 1e-9;

/// Relative agreement of stored and recomputed derived fields in `verify`.
const VERIFY_FIELD_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("verification input: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Verify(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_SOLVER,
        }
    }
}

/// Result of a command that writes an output directory.
#[derive(Debug)]
pub struct RunOutcome {
    pub report: DiagnosticsReport,
    pub exit_code: i32,
    pub directory: PathBuf,
}

/// Worker count from the environment or the config; builds the global pool
/// when one is requested.
pub fn configure_workers(cfg: &OutputConfig) -> Result<usize, CliError> {
    let env = match std::env::var(WORKERS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => return Err(CliError::Config(format!("{WORKERS_ENV} must be a positive integer, got {s:?}"))),
        },
        Err(_) => None,
    };
    if let Some(n) = env.or(cfg.workers) {
        // The pool can only be built once per process; later requests keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(rayon::current_num_threads())
}

/// Density and its partials at one (t, z), untruncated and truncated.
pub fn probe(cfg: &RunConfig, t: f64, z: f64) -> Result<String, CliError> {
    if !t.is_finite() || !z.is_finite() || t < 0.0 {
        return Err(CliError::Config(format!("probe needs finite t >= 0 and z, got t = {t}, z = {z}")));
    }
    let tables = cfg.tables()?;
    let (b, db) = tables.bernoulli(z);
    let mut out = String::new();
    writeln!(out, "t {t}\nz {z}\nB {b}\ndB {db}\nt_c {}", tables.critical_momentum(z)).unwrap();
    match tables.density_from_momentum(t, z) {
        Ok(d) => writeln!(out, "rho {}\ng {}\ndt_g {}\ndz_g {}", d.rho, d.g, d.dt_g, d.dz_g).unwrap(),
        Err(e) => writeln!(out, "untruncated {e}").unwrap(),
    }
    let g = tables.truncated_g(t, z);
    writeln!(out, "g_eps {}\ndt_g_eps {}\ndz_g_eps {}", g.g, g.dt_g, g.dz_g).unwrap();
    Ok(out)
}

fn energy_monotone(sol: &JetSolution) -> report::Noted {
    let mut worst = 0.0f64;
    let mut at = None;
    for w in sol.trace.windows(2) {
        if w[0].stage == w[1].stage {
            let rise = (w[1].energy - w[0].energy) / w[0].energy.abs().max(f64::MIN_POSITIVE);
            if rise > worst {
                worst = rise;
                at = Some((w[1].stage as f64, w[1].iteration as f64));
            }
        }
    }
    let mut n: Noted = check("energy_monotone", worst <= ENERGY_MONOTONE_TOL, worst, ENERGY_MONOTONE_TOL, at, false).into();
    n.note = at.map(|_| "worst location is (stage, iteration)".into());
    n
}

/// Checks and report sections shared by `solve` and `fit`.
fn diagnose(
    report: &mut DiagnosticsReport,
    cfg: &RunConfig,
    problem: &JetProblem,
    sol: &JetSolution,
    lambda: f64,
) -> (Vec<Noted>, Option<FreeBoundary>) {
    let tables = problem.tables();
    let grid = &sol.grid;
    let q = sol.q;
    let num = &cfg.numerics;
    let mut checks: Vec<Noted> = sol.invariants.iter().cloned().map(Noted::from).collect();
    report.lambda = Some(lambda);
    report.solve = Some(SolveSummary {
        iterations: sol.iterations,
        residual: sol.residual,
        energy: sol.energy,
        delta: sol.delta,
        lambda_eps: sol.lambda_eps,
        nodes: grid.len(),
        unknowns: grid.unknowns().len(),
        k_mu: problem.k_mu(),
        k_mu_halvings: problem.k_mu_halvings,
        seconds: sol.seconds,
    });
    report.trace = sol.trace.clone();

    let profile_tol = PROFILE_TOL * tables.g_upper() * q;
    checks.push(check("inlet_subsolution", problem.inlet_margin >= -profile_tol, problem.inlet_margin, -profile_tol, None, false).into());
    match outlet_supersolution_margin(tables, lambda, grid.h) {
        Ok(m) => checks.push(check("outlet_supersolution", m <= profile_tol, m, profile_tol, None, false).into()),
        Err(e) => checks.push(Noted { check: check("outlet_supersolution", false, f64::NAN, profile_tol, None, false), note: Some(e.to_string()) }),
    }
    checks.push(energy_monotone(sol));

    let sub = verify_subsonic(sol, tables);
    checks.push(check("subsonic", sub.max_ratio <= sub.bound, sub.max_ratio, sub.bound, sub.worst, false).into());
    checks.push(check("max_mach_below_one", sub.max_mach < 1.0, sub.max_mach, 1.0, sub.mach_worst, true).into());
    report.subsonic = Some(sub);

    let bern = bernoulli_check(sol, tables);
    checks.push(check("bernoulli", bern.max_rel_deviation <= num.bernoulli_tol, bern.max_rel_deviation, num.bernoulli_tol, bern.worst, false).into());
    checks.push(check("mass_flux", bern.max_flux_rel_error <= num.flux_tol, bern.max_flux_rel_error, num.flux_tol, None, false).into());
    report.bernoulli = Some(bern);

    let fb = match extract_boundary(sol) {
        Ok(fb) => {
            checks.extend(boundary_checks(&fb, grid).into_iter().map(Noted::from));
            report.free_boundary = Some(BoundarySummary {
                level: fb.level,
                empty: fb.empty,
                graph_points: fb.graph.len(),
                tail_points: fb.tail.len(),
                upsilon_1: fb.upsilon_1,
                slope_residual: fb.slope_residual,
                h_num: fb.h_num,
            });
            if let Some(c) = fb_condition_residual(sol, &fb, tables) {
                checks.push(check("free_boundary_condition", c.mean_rel <= num.condition_tol, c.mean_rel, num.condition_tol, None, false).into());
                report.condition = Some(c);
            }
            Some(fb)
        }
        Err(e) => {
            let worst = match &e {
                FitError::GraphViolation { y, xs } => xs.first().map(|&x| (x, *y)),
                _ => None,
            };
            checks.push(Noted { check: check("free_boundary_graph", false, f64::NAN, 0.0, worst, true), note: Some(e.to_string()) });
            None
        }
    };

    let ds = match downstream_state(tables, lambda) {
        Ok(d) => {
            checks.push(check("downstream_state_exists", true, lambda, tables.critical_momentum(q).sqrt(), None, false).into());
            checks.extend(d.checks(tables).into_iter().map(Noted::from));
            Some(d)
        }
        Err(e) => {
            let bound = tables.critical_momentum(q).sqrt();
            checks.push(Noted { check: check("downstream_state_exists", false, lambda, bound, None, false), note: Some(e.to_string()) });
            None
        }
    };
    let ff = farfield_compare(sol, tables, ds.as_ref(), fb.as_ref());
    let tol = num.farfield_tol;
    checks.push(check("upstream_slice", ff.upstream_deviation <= tol, ff.upstream_deviation, tol, None, false).into());
    if let Some(d) = ff.downstream_deviation {
        checks.push(check("downstream_slice", d <= tol, d, tol, None, false).into());
    }
    if let (Some(err), Some(t)) = (ff.height_error, ff.height_tolerance) {
        checks.push(check("downstream_height", err <= t, err, t, None, false).into());
    }
    report.farfield = Some(ff);
    report.downstream = ds;
    (checks, fb)
}

fn output_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
    Ok(dir)
}

/// Fills the verdicts, exit code and timing and writes the report.
fn finish(
    mut report: DiagnosticsReport,
    cfg: &RunConfig,
    checks: Vec<Noted>,
    start: Instant,
    dir: PathBuf,
) -> Result<RunOutcome, CliError> {
    report.invariants = assemble_verdicts(checks, "not evaluated by this command");
    if report.error.is_none() {
        report.exit_code = verdict_exit_code(&report.invariants);
    }
    report.timing = Some(Timing { total_seconds: start.elapsed().as_secs_f64(), workers: rayon::current_num_threads() });
    output::write_text(&dir.join(REPORT_FILE), &report_json(&report, cfg.output.reproducible))?;
    let exit_code = report.exit_code;
    Ok(RunOutcome { report, exit_code, directory: dir })
}

fn solver_failure(mut report: DiagnosticsReport, cfg: &RunConfig, message: String, start: Instant, dir: PathBuf) -> Result<RunOutcome, CliError> {
    log::error!("{message}");
    report.error = Some(message);
    report.exit_code = EXIT_SOLVER;
    finish(report, cfg, Vec::new(), start, dir)
}

fn write_solution(dir: &Path, cfg: &RunConfig, sol: &JetSolution, fb: Option<&FreeBoundary>) -> Result<(), CliError> {
    let digits = cfg.output.precision;
    output::write_text(&dir.join(FIELDS_FILE), &fields_table(sol, digits))?;
    let boundary = fb.map(|f| boundary_table(f, digits)).unwrap_or_else(|| "# y x\n".into());
    output::write_text(&dir.join(BOUNDARY_FILE), &boundary)
}

/// Solves at the configured momentum and writes fields, boundary and report.
pub fn run_solve(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let lambda = cfg.numerics.lambda.ok_or_else(|| CliError::Config("numerics.lambda is required for solve".into()))?;
    let problem = cfg.problem()?;
    let dir = output_dir(cfg)?;
    let report = DiagnosticsReport::new("solve", cfg);
    info!("solve: Lambda {lambda} on {} nodes", problem.grid().len());
    let sol = match solve_fixed_lambda(&problem, lambda, &cfg.numerics.solver, &cfg.numerics.initialization()) {
        Ok(s) => s,
        Err(e) => return solver_failure(report, cfg, e.to_string(), start, dir),
    };
    let mut report = report;
    let (checks, fb) = diagnose(&mut report, cfg, &problem, &sol, lambda);
    write_solution(&dir, cfg, &sol, fb.as_ref())?;
    finish(report, cfg, checks, start, dir)
}

/// Bisection on Lambda for continuous fit at the orifice.
pub fn run_fit(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let problem = cfg.problem()?;
    let dir = output_dir(cfg)?;
    let mut report = DiagnosticsReport::new("fit", cfg);
    let fit = match fit_lambda(&problem, &cfg.fit, &cfg.numerics.solver) {
        Ok(f) => f,
        Err(FitError::Config(m)) => return Err(CliError::Config(m)),
        Err(e) => return solver_failure(report, cfg, e.to_string(), start, dir),
    };
    let q = problem.q();
    let (mut checks, fb) = diagnose(&mut report, cfg, &problem, &fit.solution, fit.lambda_star);
    let upsilon = fit.boundary.upsilon_1.map_or(f64::NAN, f64::abs);
    let mut orifice: Noted = check("orifice_fit", fit.converged, upsilon, fit.tol, None, true).into();
    if fit.ambiguous {
        orifice.note = Some("bracket reached the bisection floor; Lambda* is the midpoint".into());
    }
    checks.push(orifice);
    let c = fit.bracket_constant(q);
    let inside = fit.lambda_star > q / c && fit.lambda_star < c * q;
    checks.push(check("lambda_bounds", inside, fit.lambda_star, c, None, true).into());
    checks.push(continuity_check(&fit.history, problem.grid().h).into());
    checks.push(upsilon_monotone_check(&fit.history, fit.tol).into());
    report.fit = Some(FitSummary {
        lambda_star: fit.lambda_star,
        bracket: fit.bracket,
        final_bracket: fit.final_bracket,
        bracket_constant: c,
        expansions: fit.expansions,
        bisection_steps: fit.bisection_steps,
        bisection_bound: bisection_bound(fit.bracket.1 - fit.bracket.0, fit.lambda_tol),
        converged: fit.converged,
        ambiguous: fit.ambiguous,
        tol: fit.tol,
        lambda_tol: fit.lambda_tol,
        history: fit.history.clone(),
    });
    write_solution(&dir, cfg, &fit.solution, fb.as_ref())?;
    finish(report, cfg, checks, start, dir)
}

/// Momenta of the asymptotics command: configured, or an even sweep from the
/// momentum that leaves the upstream state unchanged towards the sonic limit.
pub fn asymptotics_lambdas(cfg: &RunConfig, tables: &FlowTables) -> Vec<f64> {
    if let Some(ls) = &cfg.asymptotics.lambdas {
        return ls.clone();
    }
    let c = tables.constants();
    let b = tables.bernoulli(c.q).0;
    let lo = momentum_sq(c.rho_bar, b, c.gamma).max(0.0).sqrt();
    let hi = tables.critical_momentum(c.q).sqrt();
    let n = cfg.asymptotics.sweep_points;
    let span = cfg.asymptotics.sweep_fraction * (hi - lo);
    (0..n).map(|k| lo + span * k as f64 / (n - 1) as f64).collect()
}

/// Downstream states over a momentum sweep and the H_d monotonicity probe.
pub fn run_asymptotics(cfg: &RunConfig) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let tables = cfg.tables()?;
    let dir = output_dir(cfg)?;
    let mut report = DiagnosticsReport::new("asymptotics", cfg);
    let lambdas = asymptotics_lambdas(cfg, &tables);
    let mut checks: Vec<Noted> = Vec::new();
    let mut rows: Vec<MonotonicityRow> = Vec::new();
    let mut failed: Option<String> = None;
    for &l in &lambdas {
        match downstream_state(&tables, l) {
            Ok(d) => {
                for mut c in d.checks(&tables) {
                    c.mandatory = true;
                    let existing = checks.iter_mut().find(|n| n.check.name == c.name);
                    match existing {
                        // Keep the first failure, otherwise the latest pass.
                        Some(n) if !n.check.pass => {}
                        Some(n) => *n = Noted { check: c, note: Some(format!("Lambda = {l}")) },
                        None => checks.push(Noted { check: c, note: Some(format!("Lambda = {l}")) }),
                    }
                }
                let row = MonotonicityRow { lambda: l, rho_d: d.rho_d, h_d: d.h_d, p_d: d.p_d };
                report.asymptotics.push(AsymptoticsEntry { lambda: l, state: Some(row.clone()), error: None });
                rows.push(row);
            }
            Err(e) => {
                failed.get_or_insert_with(|| format!("Lambda = {l}: {e}"));
                report.asymptotics.push(AsymptoticsEntry { lambda: l, state: None, error: Some(e.to_string()) });
            }
        }
    }
    let bound = tables.critical_momentum(tables.constants().q).sqrt();
    checks.push(Noted {
        check: check("downstream_state_exists", failed.is_none(), rows.len() as f64, lambdas.len() as f64, None, true),
        note: failed,
    });
    let ok: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    let mono = if ok.len() < 2 {
        Noted { check: check("h_d_monotone", true, 0.0, 0.0, None, true), note: Some("fewer than two downstream states".into()) }
    } else {
        match lambda_monotonicity_probe(&tables, &ok) {
            Ok(r) => {
                let worst = r.windows(2).map(|w| w[1].h_d - w[0].h_d).fold(f64::NEG_INFINITY, f64::max);
                Noted { check: check("h_d_monotone", true, worst, 0.0, None, true), note: None }
            }
            Err(e) => Noted { check: check("h_d_monotone", false, f64::NAN, 0.0, None, true), note: Some(e.to_string()) },
        }
    };
    checks.push(mono);
    let digits = cfg.output.precision;
    let mut table = format!("# lambda rho_d p_d h_d (sonic limit {})\n", sci(bound, digits));
    for r in &rows {
        writeln!(table, "{} {} {} {}", sci(r.lambda, digits), sci(r.rho_d, digits), sci(r.p_d, digits), sci(r.h_d, digits)).unwrap();
    }
    output::write_text(&dir.join(ASYMPTOTICS_FILE), &table)?;
    finish(report, cfg, checks, start, dir)
}

/// Result of re-checking a stored output directory.
#[derive(Debug)]
pub struct VerifyOutcome {
    pub lines: Vec<String>,
    pub exit_code: i32,
}

/// Re-reads a report and field table, recomputes the solver invariants from
/// the stored stream function and compares them with the stored verdicts.
pub fn verify(dir: &Path) -> Result<VerifyOutcome, CliError> {
    let path = dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Verify(format!("cannot read {}: {e}", path.display())))?;
    let stored: StoredReport = serde_json::from_str(&text).map_err(|e| CliError::Verify(format!("{}: {e}", path.display())))?;
    let mut lines = Vec::new();
    let mut ok = true;
    let mut line = |pass: bool, name: &str, detail: String| {
        ok &= pass;
        lines.push(format!("{} {name} {detail}", if pass { "PASS" } else { "FAIL" }));
    };

    let complete = REGISTRY.iter().all(|r| stored.invariants.iter().filter(|v| v.name == r.1).count() == 1)
        && stored.invariants.len() == REGISTRY.len();
    line(complete, "registry_complete", format!("{} verdicts", stored.invariants.len()));
    let failing: Vec<&str> = stored
        .invariants
        .iter()
        .filter(|v| v.mandatory && v.verdict == Status::Fail)
        .map(|v| v.name.as_str())
        .collect();
    line(failing.is_empty(), "stored_mandatory", format!("{failing:?}"));
    line(stored.exit_code == verdict_exit_code(&stored.invariants), "stored_exit_code", format!("{}", stored.exit_code));

    let fields = dir.join(FIELDS_FILE);
    if fields.exists() {
        let lambda = stored.lambda.ok_or_else(|| CliError::Verify("report has fields but no lambda".into()))?;
        let problem = stored.config.problem()?;
        let sol = stored_solution(&problem, &fields, lambda)?;
        let boundary = problem.boundary(lambda).map_err(|e| CliError::Verify(e.to_string()))?;
        let rows = read_table(&fields, 7)?;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        let mut worst = 0.0f64;
        for (n, r) in rows.iter().enumerate() {
            worst = worst.max(rel(r[3], sol.rho[n]));
            worst = worst.max(rel(r[6], sol.mach[n]).min((r[6] - sol.mach[n]).abs()));
        }
        line(worst <= VERIFY_FIELD_TOL, "stored_fields_consistent", format!("{worst:.3e}"));
        let mut recomputed = check_invariants(&sol, problem.tables(), &boundary);
        let sub = verify_subsonic(&sol, problem.tables());
        recomputed.push(check("max_mach_below_one", sub.max_mach < 1.0, sub.max_mach, 1.0, sub.mach_worst, true));
        for c in recomputed {
            let stored_pass = stored.invariants.iter().find(|v| v.name == c.name).map(|v| v.verdict == Status::Pass);
            let agree = stored_pass == Some(c.pass);
            line(agree && (c.pass || !c.mandatory), &c.name, format!("recomputed {:.6e} bound {:.6e}", c.value, c.bound));
        }
    }
    Ok(VerifyOutcome { lines, exit_code: if ok { EXIT_OK } else { EXIT_INVARIANT } })
}

/// Rebuilds a solution from a stored field table.
fn stored_solution(problem: &JetProblem, path: &Path, lambda: f64) -> Result<JetSolution, CliError> {
    let grid = problem.grid();
    let rows = read_table(path, 7)?;
    if rows.len() != grid.len() {
        return Err(CliError::Verify(format!("{} has {} rows, the grid has {} nodes", path.display(), rows.len(), grid.len())));
    }
    for (n, r) in rows.iter().enumerate() {
        let (i, j) = grid.coords(n);
        if (r[0] - grid.x(i)).abs() > 1e-9 * grid.x(i).abs().max(1.0) || (r[1] - grid.y(j)).abs() > 1e-9 * grid.y(j).max(1.0) {
            return Err(CliError::Verify(format!("{} row {n} is not at grid node ({i}, {j})", path.display())));
        }
    }
    let tables = problem.tables();
    let psi: Vec<f64> = rows.iter().map(|r| r[2]).collect();
    let (rho, u, v, mach) = derived_fields(grid, tables, &psi);
    Ok(JetSolution {
        grid: grid.clone(),
        q: problem.q(),
        lambda: Some(lambda),
        lambda_eps: tables.lambda_eps_truncated(lambda),
        delta: 0.0,
        psi,
        rho,
        u,
        v,
        mach,
        energy: f64::NAN,
        residual: f64::NAN,
        trace: Vec::new(),
        invariants: Vec::new(),
        iterations: 0,
        seconds: 0.0,
    })
}
