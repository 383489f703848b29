//! Acceptance criteria 1-10 on the canonical problem. Each criterion prints
//! one PASS/FAIL line; a failing criterion never fails the test target.

mod common;

use common::*;
use jetfb::asymptotics::{downstream_state, farfield_compare};
use jetfb::cli_io::{asymptotics_lambdas, RunConfig};
use jetfb::energy::{radial_operator, DiscreteEnergy};
use jetfb::flow_state::FlowTables;
use jetfb::freeboundary_fit::{extract_boundary, fb_condition_residual, fit_lambda, FitConfig, FitResult};
use jetfb::geometry::{DomainGrid, NodeKind};
use jetfb::solver::{
    initial_field, solve_fixed_lambda, solve_with_boundary, verify_subsonic, Initialization, JetProblem, JetSolution,
    SolverConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::io::Write;
use std::process::Command;
use std::time::Instant;

type Outcome = Result<String, String>;

// Written to stderr directly so the lines show up without `--nocapture`.
fn emit(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn report(id: usize, what: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let secs = start.elapsed().as_secs_f64();
    match &out {
        Ok(d) => emit(&format!("criterion {id:>2} PASS {what}: {d} [{secs:.0} s]")),
        Err(d) => emit(&format!("criterion {id:>2} FAIL {what}: {d} [{secs:.0} s]")),
    }
    out.is_ok()
}

fn verdict(pass: bool, detail: String) -> Outcome {
    if pass {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn fit_solver() -> SolverConfig {
    // Criterion 5 evaluates the qualitative properties itself.
    SolverConfig { strict_invariants: false, ..SolverConfig::default() }
}

// Criterion 1.

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_rho, mut worst_b) = (0.0f64, 0.0f64);
    for (tables, oracle) in [(canonical_tables(), Bernoulli::Constant(2.5)), (quartic_tables(), Bernoulli::Quartic)] {
        let q = tables.constants().q;
        for _ in 0..1000 {
            let z = rng.gen_range(0.0..q);
            let s = oracle.value(z);
            let (b, db) = tables.bernoulli(z);
            worst_b = worst_b.max(((b - s) / s).abs()).max((db - oracle.derivative(z)).abs() / s);
            let t = rng.gen_range(0.0..0.999) * critical_t(s);
            let d = tables.density_from_momentum(t, z).map_err(|e| e.to_string())?;
            worst_rho = worst_rho.max((d.rho - oracle_density(t, s)).abs() / d.rho);
        }
    }
    let tables = quartic_tables();
    let q = tables.constants().q;
    let mut worst_id = 0.0f64;
    for _ in 0..1000 {
        let z = rng.gen_range(1e-3..q);
        let t = rng.gen_range(0.0..0.999) * critical_t(Bernoulli::Quartic.value(z));
        let d = tables.density_from_momentum(t, z).map_err(|e| e.to_string())?;
        let db = Bernoulli::Quartic.derivative(z);
        worst_id = worst_id.max((d.g * d.g * d.dz_g + 2.0 * db * d.dt_g).abs());
    }
    verdict(
        worst_rho <= 1e-10 && worst_b <= 1e-10 && worst_id <= 1e-8,
        format!(
            "density vs bisection max rel {worst_rho:.2e} (<= 1e-10); Bernoulli max rel {worst_b:.2e} (<= 1e-10); branch identity max {worst_id:.2e} (<= 1e-8)"
        ),
    )
}

// Criterion 2.

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut below, mut above, mut bound_min) = (0usize, 0usize, f64::INFINITY);
    let mut bad = Vec::new();
    for (tables, oracle) in [(canonical_tables(), Bernoulli::Constant(2.5)), (quartic_tables(), Bernoulli::Quartic)] {
        let q = tables.constants().q;
        let eps = tables.constants().epsilon;
        for _ in 0..5000 {
            let z = rng.gen_range(0.0..q);
            let tc = tables.critical_momentum(z);
            let t = rng.gen_range(0.0..1.5) * tc;
            let ge = tables.truncated_g(t, z);
            if t <= (1.0 - eps) * tc {
                below += 1;
                let g = tables.density_from_momentum(t, z).map_err(|e| e.to_string())?;
                if ge.g != g.g || ge.dt_g != g.dt_g || ge.dz_g != g.dz_g {
                    bad.push(format!("g_eps != g at t/t_c {}", t / tc));
                }
            } else if t >= (1.0 - 0.5 * eps) * tc {
                above += 1;
                if ge.dt_g != 0.0 || ge.dz_g != 0.0 {
                    bad.push(format!("nonzero partial at t/t_c {}", t / tc));
                }
            }
            bound_min = bound_min.min(ge.g + 2.0 * t * ge.dt_g);
        }
        // The exact window edges for the oracle's t_c.
        let s = oracle.value(0.5 * q);
        let tc = critical_t(s);
        if ((tables.critical_momentum(0.5 * q) - tc) / tc).abs() > 1e-12 {
            bad.push("t_c disagrees with the closed form".into());
        }
    }
    verdict(
        bad.is_empty() && bound_min > 0.0,
        format!("{below} samples below the window, {above} above, min g_eps + 2t dt g_eps = {bound_min:.3e}; {bad:?}"),
    )
}

// Criterion 3.

fn criterion_3() -> Outcome {
    let p = canonical_problem(1.0 / 40.0).map_err(|e| e.to_string())?;
    let grid = p.grid();
    let tables = p.tables();
    let q = p.q();
    let lambda = 2.0;
    let boundary = p.boundary(lambda).map_err(|e| e.to_string())?;
    let base = initial_field(grid, &boundary, q, &Initialization::Blend);
    let psi: Vec<f64> = (0..grid.len())
        .map(|n| {
            let (i, _) = grid.coords(n);
            if grid.kind(n).is_unknown() {
                (base[n] * (1.0 + 0.02 * (3.0 * grid.x(i)).sin())).clamp(0.0, q)
            } else {
                base[n]
            }
        })
        .collect();
    let e = DiscreteEnergy::new(grid, tables, tables.lambda_eps_truncated(lambda), 0.25 * q);
    let grad = e.gradient(&psi).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (a, b, c) = (rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.0..6.0));
        let phi: Vec<f64> = (0..grid.len())
            .map(|n| {
                if !grid.kind(n).is_unknown() {
                    return 0.0;
                }
                let (i, j) = grid.coords(n);
                (a * grid.x(i) + c).sin() * (b * grid.y(j)).cos()
            })
            .collect();
        let tau = 1e-6;
        let shift = |s: f64| -> Vec<f64> { psi.iter().zip(&phi).map(|(p, f)| p + s * f).collect() };
        let up = e.evaluate(&shift(tau)).map_err(|e| e.to_string())?;
        let down = e.evaluate(&shift(-tau)).map_err(|e| e.to_string())?;
        let fd = (up - down) / (2.0 * tau);
        let exact: f64 = grad.iter().zip(&phi).map(|(g, f)| g * f).sum();
        worst = worst.max(((fd - exact) / exact).abs());
    }
    verdict(worst <= 1e-5, format!("20 directions on the h = 1/40 nozzle grid, max rel error {worst:.2e} (<= 1e-5)"))
}

// Criterion 4.

fn criterion_4() -> Outcome {
    let tables = canonical_tables();
    let q = tables.constants().q;
    let grid = DomainGrid::rectangle(2.0, 1.0, 1.0, 1.0 / 32.0).map_err(|e| e.to_string())?;
    let boundary = grid.boundary_field(|_, _, y| y * y);
    let init = Initialization::Random { seed: 4, amplitude: 0.1 };
    let sol = solve_with_boundary(&grid, &tables, &boundary, None, &SolverConfig::default(), &init)
        .map_err(|e| e.to_string())?;
    let err = (0..grid.len()).map(|n| (sol.psi[n] - grid.y(grid.coords(n).1).powi(2)).abs()).fold(0.0, f64::max);
    // The operator is exact on y^2, so the order is measured on a sheared
    // manufactured profile u = 0.8 + 0.01 y^4.
    let rot = sheared_tables();
    let profile = |y: f64| 0.8 * y * y + y.powi(6) / 300.0;
    let max_res = |n: usize| {
        radial_operator(&rot, 2.0 / n as f64, n, profile).iter().fold(0.0f64, |m, r| m.max(r.abs()))
    };
    let (r1, r2) = (max_res(64), max_res(128));
    let order = (r1 / r2).log2();
    verdict(
        err <= 1e-6 * q && order >= 1.9,
        format!("rectangle sup error {:.2e} Q (<= 1e-6 Q); EL residual {r1:.2e} -> {r2:.2e}, order {order:.3} (>= 1.9)", err / q),
    )
}

// Criterion 5.

fn criterion_5(fit: &Result<FitResult, String>, tables: &FlowTables) -> Outcome {
    let fit = fit.as_ref().map_err(|e| format!("canonical fit failed: {e}"))?;
    let sol = &fit.solution;
    let g = &sol.grid;
    let q = sol.q;
    let h = g.h;
    let (lo, hi) = sol.psi.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut min_dx = f64::INFINITY;
    let mut max_v = f64::NEG_INFINITY;
    for i in 0..g.nx - 1 {
        for j in 0..g.ny {
            let n = g.node(i, j);
            let m = g.node(i + 1, j);
            if g.kind(n) == NodeKind::Interior {
                min_dx = min_dx.min((sol.psi[m] - sol.psi[n]) / h);
            }
            if sol.psi[n] > 0.0 && sol.psi[n] < q * (1.0 - 1e-14) && deep_interior(g, i, j, 5) {
                max_v = max_v.max(sol.v[n]);
            }
        }
    }
    let tol_mono = 1e-10 * q / h;
    let v_tol = tol_mono * tables.g_upper();
    let sub = verify_subsonic(sol, tables);
    let parts = [
        (lo >= 0.0 && hi <= q, format!("psi in [{lo:.3e}, {hi:.15}]")),
        (min_dx >= -tol_mono, format!("min dx psi {min_dx:.3e}")),
        (max_v <= v_tol, format!("max interior v {max_v:.3e} (<= {v_tol:.1e})")),
        (sub.max_mach < 1.0, format!("max Mach {:.4}", sub.max_mach)),
        (sub.max_ratio <= sub.bound, format!("subsonic ratio {:.4} (<= {})", sub.max_ratio, sub.bound)),
    ];
    let detail = format!("Lambda* {:.6}: {}", fit.lambda_star, parts.iter().map(|p| p.1.clone()).collect::<Vec<_>>().join("; "));
    verdict(parts.iter().all(|p| p.0), detail)
}

// Criteria 6 and 7 share a refinement pair: the h = 1/40 fit and an h = 1/80
// solve at its fitted momentum.

struct Refinement {
    coarse: (f64, Option<f64>, Option<f64>),
    fine: (f64, Option<f64>, Option<f64>),
}

/// (h, mean condition residual, |slope residual|) of a solution.
fn refinement_row(sol: &JetSolution, tables: &FlowTables) -> (f64, Option<f64>, Option<f64>) {
    match extract_boundary(sol) {
        Ok(fb) => (
            sol.grid.h,
            fb_condition_residual(sol, &fb, tables).map(|c| c.mean_rel),
            fb.slope_residual.map(f64::abs),
        ),
        Err(_) => (sol.grid.h, None, None),
    }
}

fn refinement(coarse: &Result<FitResult, String>, problem: &JetProblem, tables: &FlowTables) -> Result<Refinement, String> {
    let c = coarse.as_ref().map_err(|e| format!("h = 1/40 fit failed: {e}"))?;
    let fine = problem.refined(1.0 / 80.0).map_err(|e| e.to_string())?;
    let sol = solve_fixed_lambda(&fine, c.lambda_star, &fit_solver(), &Initialization::Blend).map_err(|e| e.to_string())?;
    Ok(Refinement { coarse: refinement_row(&c.solution, tables), fine: refinement_row(&sol, tables) })
}

fn criterion_6(fit: &Result<FitResult, String>, refined: &Result<Refinement, String>, tables: &FlowTables) -> Outcome {
    let fit = fit.as_ref().map_err(|e| format!("canonical fit failed: {e}"))?;
    let main = refinement_row(&fit.solution, tables).1;
    let r = refined.as_ref().map_err(|e| e.clone())?;
    let ok = main.is_some_and(|m| m <= 0.05)
        && matches!((r.coarse.1, r.fine.1), (Some(a), Some(b)) if b < a);
    verdict(
        ok,
        format!(
            "mean rel residual {:?} at h = 1/64 (<= 0.05); {:?} at h = 1/40 -> {:?} at h = 1/80 (decreasing)",
            main, r.coarse.1, r.fine.1
        ),
    )
}

fn criterion_7(fit: &Result<FitResult, String>, refined: &Result<Refinement, String>) -> Outcome {
    let fit = fit.as_ref().map_err(|e| format!("canonical fit failed: {e}"))?;
    let q = 4.0;
    let u = fit.boundary.upsilon_1;
    let tol = 2.0 * fit.solution.grid.h;
    let bounds = fit.lambda_star > q / 8.0 && fit.lambda_star < 8.0 * q;
    let r = refined.as_ref().map_err(|e| e.clone())?;
    let smooth = matches!((r.coarse.2, r.fine.2), (Some(a), Some(b)) if b < a);
    verdict(
        fit.converged && u.is_some_and(|u| u.abs() <= tol) && bounds && smooth,
        format!(
            "Lambda* {:.6} in (Q/8, 8Q): {bounds}; |Upsilon(1)| {:?} (<= {tol}); converged {}; |Upsilon'(1) - N'(1)| {:?} -> {:?}",
            fit.lambda_star,
            u.map(f64::abs),
            fit.converged,
            r.coarse.2,
            r.fine.2
        ),
    )
}

// Criterion 8.

fn criterion_8(fit: &Result<FitResult, String>, problem: &JetProblem) -> Outcome {
    let fit = fit.as_ref().map_err(|e| format!("canonical fit failed: {e}"))?;
    let tables = problem.tables();
    let ds = downstream_state(tables, fit.lambda_star)
        .map_err(|e| format!("no downstream state at Lambda* = {:.6}: {e}", fit.lambda_star))?;
    let ff = farfield_compare(&fit.solution, tables, Some(&ds), Some(&fit.boundary));
    let (Some(herr), Some(htol), Some(slice)) = (ff.height_error, ff.height_tolerance, ff.downstream_deviation) else {
        return Err(format!("far field incomplete: {ff:?}"));
    };
    let long = problem.with_downstream_length(2.0 * problem.grid().r).map_err(|e| e.to_string())?;
    let sol = solve_fixed_lambda(&long, fit.lambda_star, &fit_solver(), &Initialization::Blend).map_err(|e| e.to_string())?;
    let fb = extract_boundary(&sol).map_err(|e| e.to_string())?;
    let ff2 = farfield_compare(&sol, tables, Some(&ds), Some(&fb));
    let improves = matches!((ff2.height_error, ff2.downstream_deviation), (Some(a), Some(b)) if a <= herr && b <= slice);
    verdict(
        herr <= htol && slice <= 0.02 && improves,
        format!(
            "|H_num - H_d| {herr:.3e} (<= {htol:.3e}); slice {slice:.3e} Q (<= 0.02); at 2R {:?} and {:?}",
            ff2.height_error, ff2.downstream_deviation
        ),
    )
}

// Criterion 9.

/// Second starting bracket, inside the default (Q/8, 8Q).
const NARROW_BRACKET: (f64, f64) = (2.0, 16.0);

fn criterion_9(a: &Result<FitResult, String>, b: &Result<FitResult, String>) -> Outcome {
    let cfg = RunConfig::default();
    let tables = canonical_tables();
    let lambdas = asymptotics_lambdas(&cfg, &tables);
    let hd: Vec<f64> = lambdas
        .iter()
        .map(|&l| downstream_state(&tables, l).map(|d| d.h_d))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let decreasing = hd.windows(2).all(|w| w[1] < w[0]);
    let a = a.as_ref().map_err(|e| format!("default bracket fit failed: {e}"))?;
    let b = b.as_ref().map_err(|e| format!("bracket {NARROW_BRACKET:?} fit failed: {e}"))?;
    let width = |f: &FitResult| f.final_bracket.1 - f.final_bracket.0;
    let tol = width(a).max(width(b)).max(a.lambda_tol);
    let diff = (a.lambda_star - b.lambda_star).abs();
    verdict(
        decreasing && diff <= tol,
        format!(
            "H_d strictly decreasing over {} momenta on [{:.4}, {:.4}]: {decreasing}; Lambda* {:.6} vs {:.6}, |diff| {diff:.2e} (<= {tol:.2e})",
            lambdas.len(),
            lambdas[0],
            lambdas[lambdas.len() - 1],
            a.lambda_star,
            b.lambda_star
        ),
    )
}

// Criterion 10.

// Determinism does not depend on the spacing, so the runs use h = 1/40. Invariant
// failures are reported rather than raised, as in the fits.
fn criterion_10(lambda: f64) -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = root.path().join("canonical.toml");
    std::fs::write(&cfg, format!(
            "[numerics]\nh = 0.025\nlambda = {lambda}\n\n[numerics.solver]\nstrict_invariants = false\n\n[output]\nreproducible = true\n"
        ))
        .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for (k, workers) in ["1", "2"].iter().enumerate() {
        // The report records the output directory, so both runs use the same relative name.
        let cwd = root.path().join(format!("w{k}"));
        std::fs::create_dir(&cwd).map_err(|e| e.to_string())?;
        let dir = cwd.join("run");
        let status = Command::new(env!("CARGO_BIN_EXE_jetfb"))
            .args(["solve", "--config"])
            .arg(&cfg)
            .args(["--output", "run"])
            .current_dir(&cwd)
            .env("JETFB_WORKERS", workers)
            .env("RUST_LOG", "off")
            .output()
            .map_err(|e| e.to_string())?;
        let files: Vec<Vec<u8>> = ["fields.txt", "boundary.txt", "report.json"]
            .iter()
            .map(|f| std::fs::read(dir.join(f)).unwrap_or_default())
            .collect();
        outputs.push((status.status.code(), files));
    }
    let same = outputs[0].1 == outputs[1].1 && outputs[0].1.iter().all(|f| !f.is_empty());
    let sizes: Vec<usize> = outputs[0].1.iter().map(Vec::len).collect();
    verdict(
        same,
        format!("two solves at Lambda = {lambda} with 1 and 2 workers, exit codes {:?}/{:?}, byte-identical {same} (sizes {sizes:?})", outputs[0].0, outputs[1].0),
    )
}

#[test]
fn acceptance() {
    let _ = env_logger::builder().is_test(true).try_init();
    let tables = canonical_tables();
    let mut passed = 0;
    passed += report(1, "flow-state oracle suite", criterion_1) as usize;
    passed += report(2, "truncation suite", criterion_2) as usize;
    passed += report(3, "gradient consistency", criterion_3) as usize;
    passed += report(4, "manufactured 1-D convergence", criterion_4) as usize;

    let start = Instant::now();
    let problem = canonical_problem(1.0 / 64.0).expect("canonical problem");
    let main = fit_lambda(&problem, &FitConfig::default(), &fit_solver()).map_err(|e| e.to_string());
    emit(&format!("canonical fit at h = 1/64: {:.0} s", start.elapsed().as_secs_f64()));
    let coarse_problem = canonical_problem(1.0 / 40.0).expect("h = 1/40 problem");
    let start = Instant::now();
    let fit_a = fit_lambda(&coarse_problem, &FitConfig::default(), &fit_solver()).map_err(|e| e.to_string());
    let narrow = FitConfig { bracket: Some(NARROW_BRACKET), ..FitConfig::default() };
    let fit_b = fit_lambda(&coarse_problem, &narrow, &fit_solver()).map_err(|e| e.to_string());
    emit(&format!("two fits at h = 1/40: {:.0} s", start.elapsed().as_secs_f64()));
    let refined = refinement(&fit_a, &coarse_problem, &tables);

    passed += report(5, "qualitative properties of the fitted canonical run", || criterion_5(&main, &tables)) as usize;
    passed += report(6, "free-boundary condition", || criterion_6(&main, &refined, &tables)) as usize;
    passed += report(7, "continuous fit", || criterion_7(&main, &refined)) as usize;
    passed += report(8, "far-field cross-oracle", || criterion_8(&main, &problem)) as usize;
    passed += report(9, "uniqueness mechanism", || criterion_9(&fit_a, &fit_b)) as usize;
    let lambda = fit_a.as_ref().map(|f| (f.lambda_star * 1e6).round() / 1e6).unwrap_or(2.0);
    passed += report(10, "determinism", || criterion_10(lambda)) as usize;
    emit(&format!("acceptance: {passed}/10 criteria pass"));
}
