use super::*;
use crate::flow_state::FlowConstants;
use proptest::prelude::*;

fn tables(profile: UpstreamProfile, q: f64) -> FlowTables {
    let c = FlowConstants::new(2.0, q, 0.1, &profile).unwrap();
    FlowTables::new(c, profile)
}

fn canonical() -> FlowTables {
    tables(UpstreamProfile::constant(1.0, 2.0).unwrap(), 4.0)
}

#[test]
fn constant_profile_gives_parabola() {
    let p = UpstreamProfile::constant(1.0, 2.0).unwrap();
    let ys = [0.0, 0.3, 1.0, 1.7, 2.0];
    for (y, v) in ys.iter().zip(upstream_profile(&p, 2.0, &ys)) {
        assert!((v - y * y).abs() < 1e-13, "{y}: {v}");
    }
}

#[test]
fn upstream_profile_carries_the_flux() {
    let t = canonical();
    let c = t.constants();
    let v = upstream_profile(t.bernoulli_fn().profile(), c.rho_bar, &[c.bar_h])[0];
    assert!((v - c.q).abs() < 1e-12);
}

#[test]
fn quartic_profile_moment() {
    let p = UpstreamProfile::polynomial(vec![1.0, 0.0, 0.0, 0.0, 1.0], 2.0).unwrap();
    let v = upstream_profile(&p, 1.0, &[2.0])[0];
    assert!((v - 38.0 / 3.0).abs() < 1e-12, "{v}");
}

#[test]
fn matched_momentum_leaves_the_flow_unchanged() {
    let d = downstream_state(&canonical(), 2.0).unwrap();
    assert!((d.rho_d - 2.0).abs() < 1e-12);
    assert!((d.h_d - 2.0).abs() < 1e-10);
    assert!(d.u_d.iter().all(|p| (p.1 - 1.0).abs() < 1e-10));
    assert!(d.theta.iter().all(|&(y, t)| (t - y).abs() < 1e-10));
}

#[test]
fn lighter_downstream_state_contracts_the_jet() {
    // rho_d = 1.8: t = 2 rho^2 (2.5 - rho) = 4.536, u_d = sqrt(1.4).
    let rho = 1.8f64;
    let lambda = rho * (2.0f64 * (2.5 - rho)).sqrt();
    let d = downstream_state(&canonical(), lambda).unwrap();
    let u = 1.4f64.sqrt();
    assert!((d.rho_d - rho).abs() < 1e-12);
    assert!(d.u_d.iter().all(|p| (p.1 - u).abs() < 1e-10));
    let h_d = 2.0 * (2.0 / (rho * u)).sqrt();
    assert!((d.h_d - h_d).abs() < 1e-10, "{} vs {h_d}", d.h_d);
    assert!((h_d - 1.93810).abs() < 1e-5);
    assert!((d.rho_d * u * d.h_d * d.h_d / 2.0 - 4.0).abs() < 1e-9);
    for &(y, t) in &d.theta {
        assert!((t - y * (2.0 / (rho * u)).sqrt()).abs() < 1e-10);
    }
}

#[test]
fn downstream_checks_pass_for_subsonic_momenta() {
    let t = canonical();
    for lambda in [2.0, 2.05, 2.14] {
        let d = downstream_state(&t, lambda).unwrap();
        for c in d.checks(&t) {
            assert!(c.pass, "Lambda {lambda}: {c:?}");
        }
    }
}

fn rotational() -> FlowTables {
    // u = 0.8 + 0.01 y^4 on (0, 2), subsonic at Q = 4.
    tables(UpstreamProfile::polynomial(vec![0.8, 0.0, 0.0, 0.0, 0.01], 2.0).unwrap(), 4.0)
}

#[test]
fn rotational_streamline_map_conserves_flux() {
    let t = rotational();
    let c = t.constants();
    let rho_bar = 4.0 / (1.6 + 0.64 / 6.0);
    assert!((c.rho_bar - rho_bar).abs() < 1e-12);
    let s = 0.5 * 0.96f64.powi(2) + rho_bar;
    let rho = rho_bar - 0.05;
    let lambda = (2.0 * rho * rho * (s - rho)).sqrt();
    let d = downstream_state(&t, lambda).unwrap();
    assert!((d.rho_d - rho).abs() < 1e-10);
    for check in d.checks(&t) {
        assert!(check.pass, "{check:?}");
    }
    // psi_down(theta(y)) = psi_bar(y) along each streamline.
    for y in [0.25, 0.8, 1.3, 1.9] {
        let bar = upstream_profile(t.bernoulli_fn().profile(), rho_bar, &[y])[0];
        let down = d.psi(d.theta_at(y));
        assert!((down - bar).abs() < 1e-9 * c.q, "y {y}: {down} vs {bar}");
    }
    // Sheared profile: the downstream speed grows with height.
    assert!(d.u_d.windows(2).all(|w| w[1].1 > w[0].1));
}

#[test]
fn monotonicity_probe_on_the_subsonic_branch() {
    let t = canonical();
    let lambdas: Vec<f64> = (0..10).map(|k| 2.0 + 0.015 * k as f64).collect();
    let rows = lambda_monotonicity_probe(&t, &lambdas).unwrap();
    assert_eq!(rows.len(), 10);
    assert!((rows[0].h_d - 2.0).abs() < 1e-10);
    let alt = 1.8 * (2.0f64 * (2.5 - 1.8)).sqrt();
    let d = downstream_state(&t, alt).unwrap();
    assert!(rows[0].h_d > d.h_d);
    for w in rows.windows(2) {
        assert!(w[1].h_d < w[0].h_d);
        assert!(w[1].rho_d < w[0].rho_d);
        assert!(w[1].p_d < w[0].p_d);
    }
}

#[test]
fn sonic_momentum_is_rejected() {
    // t_c(2.5) = 125/27.
    let err = downstream_state(&canonical(), (125.0f64 / 27.0).sqrt() + 1e-9).unwrap_err();
    assert!(matches!(err, AsymptoticsError::Sonic { .. }), "{err}");
}

#[test]
fn heavier_downstream_state_is_a_property_violation() {
    let err = downstream_state(&canonical(), 1.9).unwrap_err();
    assert!(matches!(err, AsymptoticsError::PropertyViolation(_)), "{err}");
}

#[test]
fn slow_momentum_cavitates_a_sheared_profile() {
    // rho_d close to the stagnation density leaves no speed for u(0) = 0.8.
    let err = downstream_state(&rotational(), 0.5).unwrap_err();
    assert!(matches!(err, AsymptoticsError::Cavitation { .. }), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn theta_map_is_increasing_and_contracting(lambda in 2.0f64..2.15) {
        let d = downstream_state(&canonical(), lambda).unwrap();
        for w in d.theta.windows(2) {
            prop_assert!(w[1].1 > w[0].1);
        }
        for &(y, t) in &d.theta {
            prop_assert!(t <= y + 1e-12);
        }
        prop_assert!((d.h_d - d.theta_at(2.0)).abs() < 1e-12);
    }
}
