use super::*;

const Q: f64 = 4.0;

fn grid(h: f64) -> DomainGrid {
    DomainGrid::rectangle(2.0, 1.0, 1.0, h).unwrap()
}

fn field<F: Fn(f64, f64) -> f64>(g: &DomainGrid, f: F) -> Vec<f64> {
    (0..g.len())
        .map(|n| {
            let (i, j) = g.coords(n);
            f(g.x(i), g.y(j))
        })
        .collect()
}

#[test]
fn flat_contour_is_all_tail() {
    let h = 1.0 / 32.0;
    let g = grid(h);
    let psi = field(&g, |_, y| Q * (y * y / 0.25).min(1.0));
    let fb = extract_level(&g, &psi, Q - 0.5 * h, None).unwrap();
    assert!(fb.graph.is_empty());
    assert!(!fb.empty);
    assert_eq!(fb.tail.len(), g.nx);
    assert!(fb.tail.iter().all(|p| (p.1 - 0.5).abs() <= h), "{:?}", fb.tail);
    assert!((fb.h_num.unwrap() - 0.5).abs() <= h);
    assert_eq!(fb.orifice_sign(), -1.0);
}

#[test]
fn tilted_contour_is_recovered() {
    let h = 1.0 / 32.0;
    let g = grid(h);
    let level = Q - 0.5 * h;
    let psi = field(&g, |x, y| if y == 0.0 { 0.0 } else { (level + 4.0 * (x + y - 1.0)).clamp(0.0, Q) });
    let fb = extract_level(&g, &psi, level, None).unwrap();
    let err = fb.graph.iter().filter(|p| p.0 > 0.2).map(|&(y, x)| (x - (1.0 - y)).abs()).fold(0.0, f64::max);
    assert!(err <= h, "max error {err}");
    assert!(fb.upsilon_1.unwrap().abs() < 1e-9);
    assert!(fb.slope_residual.is_none());
}

#[test]
fn slope_residual_uses_the_nozzle_slope() {
    let h = 1.0 / 32.0;
    let g = grid(h);
    let level = Q - 0.5 * h;
    // Contour x = 1 - y has slope -1, as does ln(2 - y) at y = 1.
    let psi = field(&g, |x, y| if y == 0.0 { 0.0 } else { (level + 4.0 * (x + y - 1.0)).clamp(0.0, Q) });
    let nozzle = NozzleGeometry::log(1.0, 2.0).unwrap();
    let fb = extract_level(&g, &psi, level, Some(&nozzle)).unwrap();
    assert!(fb.slope_residual.unwrap().abs() < 1e-9);
}

#[test]
fn subcritical_field_has_empty_boundary() {
    let g = grid(1.0 / 16.0);
    let psi = field(&g, |_, y| 0.5 * y * y);
    let fb = extract_level(&g, &psi, Q - 0.01, None).unwrap();
    assert!(fb.empty);
    assert!(fb.upsilon_1.is_none());
    assert_eq!(fb.orifice_sign(), 1.0);
}

#[test]
fn ramp_against_the_top_line_is_not_a_free_boundary() {
    let h = 1.0 / 16.0;
    let g = grid(h);
    // Flow filling the strip, with psi = Q imposed at y = 1 and above.
    let psi = field(&g, |_, y| if y >= 1.0 { Q } else { 0.9 * Q * y * y });
    let fb = extract_level(&g, &psi, Q - 0.01, None).unwrap();
    assert!(fb.empty, "{fb:?}");
    assert_eq!(fb.orifice_sign(), 1.0);
}

#[test]
fn two_separated_crossings_violate_the_graph_property() {
    let h = 1.0 / 16.0;
    let g = grid(h);
    // Bump in x: psi reaches Q only for |x| < 0.5 at mid height.
    let psi = field(&g, |x, y| if (y - 0.5).abs() < 0.2 && x.abs() < 0.5 { Q } else { 0.0 });
    match extract_level(&g, &psi, Q - 0.01, None) {
        Err(FitError::GraphViolation { xs, .. }) => assert_eq!(xs.len(), 2),
        other => panic!("expected a graph violation, got {other:?}"),
    }
}

#[test]
fn quadratic_extrapolation_is_exact_for_parabolas() {
    let f = |y: f64| 3.0 - 2.0 * y + 0.5 * y * y;
    let (v, dv) = quadratic_at([(0.7, f(0.7)), (0.8, f(0.8)), (0.9, f(0.9))], 1.0);
    assert!((v - f(1.0)).abs() < 1e-12);
    assert!((dv - (-2.0 + 1.0)).abs() < 1e-12);
}

#[test]
fn interpolation_is_exact_for_bilinear_fields() {
    let g = grid(1.0 / 8.0);
    let f = |x: f64, y: f64| 1.0 + 2.0 * x - y + 0.5 * x * y;
    let psi = field(&g, f);
    for &(x, y) in &[(0.03, 0.41), (-0.77, 1.9), (0.99, 0.01)] {
        assert!((interpolate(&g, &psi, x, y) - f(x, y)).abs() < 1e-12);
    }
}

#[test]
fn bisection_bound_counts_halvings() {
    assert_eq!(bisection_bound(31.5, 4e-3), 13);
    assert_eq!(bisection_bound(1.0, 1.0), 0);
}

#[test]
fn continuity_check_flags_jumps_between_close_momenta() {
    let s = |lambda: f64, u: f64| FitSample {
        lambda,
        upsilon_1: Some(u),
        sign: u.signum(),
        empty: false,
        iterations: 0,
        residual: 0.0,
        seconds: 0.0,
    };
    let h = 1.0 / 64.0;
    let smooth = [s(2.0, 0.1), s(2.01, 0.09), s(3.0, -1.0)];
    assert!(continuity_check(&smooth, h).pass);
    let jump = [s(2.0, 0.1), s(2.01, -0.5)];
    let c = continuity_check(&jump, h);
    assert!(!c.pass);
    assert!((c.value - 0.6).abs() < 1e-12);
}

#[test]
fn monotonicity_probe_flags_increases() {
    let s = |lambda: f64, u: Option<f64>| FitSample {
        lambda,
        upsilon_1: u,
        sign: u.map_or(1.0, f64::signum),
        empty: u.is_none(),
        iterations: 0,
        residual: 0.0,
        seconds: 0.0,
    };
    let down = [s(1.0, None), s(2.0, Some(0.3)), s(4.0, Some(-0.2)), s(3.0, Some(0.1))];
    assert!(upsilon_monotone_check(&down, 0.01).pass);
    let up = [s(2.0, Some(0.3)), s(3.0, Some(0.5))];
    let c = upsilon_monotone_check(&up, 0.01);
    assert!(!c.pass);
    assert!((c.value - 0.2).abs() < 1e-12);
}

#[test]
#[ignore]
fn explore_fit() {
    use crate::flow_state::{FlowConstants, UpstreamProfile};
    let _ = env_logger::builder().is_test(true).try_init();
    let profile = UpstreamProfile::constant(1.0, 2.0).unwrap();
    let tables = FlowTables::new(FlowConstants::new(2.0, 4.0, 0.1, &profile).unwrap(), profile);
    let h: f64 = std::env::var("H").ok().and_then(|s| s.parse().ok()).unwrap_or(1.0 / 64.0);
    let p = JetProblem::new(tables, NozzleGeometry::log(1.0, 2.0).unwrap(), 4.0, 8.0, h, 1.75).unwrap();
    let solver = SolverConfig { strict_invariants: false, ..SolverConfig::default() };
    let start = Instant::now();
    match fit_lambda(&p, &FitConfig::default(), &solver) {
        Ok(r) => {
            eprintln!("Lambda* {} converged {} steps {} in {:?}", r.lambda_star, r.converged, r.bisection_steps, start.elapsed());
            for s in &r.history {
                eprintln!("{s:?}");
            }
            eprintln!("boundary {:?}", r.boundary.upsilon_1);
            eprintln!("slope {:?} h_num {:?}", r.boundary.slope_residual, r.boundary.h_num);
            eprintln!("{:?}", fb_condition_residual(&r.solution, &r.boundary, p.tables()).map(|c| (c.max_rel, c.mean_rel, c.phi_mean_rel)));
            for c in &r.solution.invariants {
                eprintln!("{c:?}");
            }
        }
        Err(e) => eprintln!("fit failed: {e}"),
    }
}
