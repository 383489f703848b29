use super::*;
use crate::numerics::integrate;

fn canonical() -> FlowTables {
    let p = UpstreamProfile::constant(1.0, 2.0).unwrap();
    let c = FlowConstants::new(2.0, 4.0, 0.1, &p).unwrap();
    FlowTables::new(c, p)
}

fn quartic() -> FlowTables {
    let p = UpstreamProfile::polynomial(vec![1.0, 0.0, 0.0, 0.0, 1.0], 2.0).unwrap();
    let c = FlowConstants::new(2.0, 38.0 / 3.0, 0.1, &p).unwrap();
    FlowTables::new(c, p)
}

/// G_eps by direct quadrature of its definition.
fn big_g_oracle(f: &FlowTables, t: f64, z: f64) -> f64 {
    let gamma = f.constants().gamma;
    let q = f.constants().q;
    let tc = f.critical_momentum(z);
    let mut pts = vec![0.0, 0.9 * tc, 0.95 * tc, t];
    pts.retain(|&p| p <= t);
    pts.push(t);
    pts.sort_by(f64::total_cmp);
    let mut acc = 0.0;
    for w in pts.windows(2) {
        acc += integrate(|s| f.truncated_g(s, z).g, w[0], w[1], 1e-15, 1e-13).value;
    }
    let g0z = f.truncated_g(0.0, z).g;
    let g0q = f.truncated_g(0.0, q).g;
    0.5 * acc + (g0z.powf(-gamma) - g0q.powf(-gamma)) / gamma
}

#[test]
fn upstream_density_examples() {
    let p = UpstreamProfile::constant(1.0, 2.0).unwrap();
    assert!((upstream_density(&p, 4.0).unwrap() - 2.0).abs() < 1e-13);
    assert!((upstream_density(&p, 8.0).unwrap() - 4.0).abs() < 1e-13);
    let p = UpstreamProfile::polynomial(vec![1.0, 0.0, 0.0, 0.0, 1.0], 2.0).unwrap();
    assert!((upstream_density(&p, 38.0 / 3.0).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn constants_reject_bad_parameters() {
    let p = UpstreamProfile::constant(1.0, 2.0).unwrap();
    let e = FlowConstants::new(0.9, 4.0, 0.1, &p).unwrap_err();
    assert!(e.to_string().contains("gamma must exceed 1"));
    assert!(FlowConstants::new(2.0, 4.0, 0.3, &p).is_err());
    assert!(FlowConstants::new(2.0, -1.0, 0.1, &p).is_err());
}

#[test]
fn density_partials_match_differences() {
    let f = quartic();
    for &(tau, z) in &[(0.2, 3.0), (0.6, 8.0), (0.85, 12.0)] {
        let t = tau * f.critical_momentum(z);
        let d = f.density_from_momentum(t, z).unwrap();
        let e = 1e-6 * t;
        let dt = (f.density_from_momentum(t + e, z).unwrap().g - f.density_from_momentum(t - e, z).unwrap().g) / (2.0 * e);
        assert!((d.dt_g - dt).abs() < 1e-6 * d.dt_g.abs());
        let ez = 1e-5;
        let dz = (f.density_from_momentum(t, z + ez).unwrap().g - f.density_from_momentum(t, z - ez).unwrap().g) / (2.0 * ez);
        assert!((d.dz_g - dz).abs() < 1e-6 * d.dz_g.abs().max(1e-6), "{} vs {}", d.dz_g, dz);
    }
}

#[test]
fn truncated_partials_match_differences() {
    for f in [canonical(), quartic()] {
        let q = f.constants().q;
        for &(tau, zf) in &[(0.5, 0.4), (0.93, 0.5), (0.97, 0.3), (0.91, 0.9)] {
            let z = zf * q;
            let tc = f.critical_momentum(z);
            let t = tau * tc;
            let a = f.truncated_g(t, z);
            let e = 1e-6 * tc;
            let dt = (f.truncated_g(t + e, z).g - f.truncated_g(t - e, z).g) / (2.0 * e);
            assert!((a.dt_g - dt).abs() < 1e-6 * a.dt_g.abs().max(1e-8), "tau={tau}: {} vs {dt}", a.dt_g);
            let ez = 2e-7 * q;
            let dz = (f.truncated_g(t, z + ez).g - f.truncated_g(t, z - ez).g) / (2.0 * ez);
            assert!((a.dz_g - dz).abs() < 1e-6 * a.dz_g.abs().max(1e-6), "tau={tau}: {} vs {dz}", a.dz_g);
        }
    }
}

#[test]
fn energy_density_matches_quadrature_oracle() {
    for f in [canonical(), quartic()] {
        let q = f.constants().q;
        for &(tau, zf) in &[(0.0, 0.5), (0.3, 0.2), (0.89, 0.7), (0.92, 0.4), (0.97, 0.6), (1.8, 1.0), (3.0, 0.1)] {
            let z = zf * q;
            let t = tau * f.critical_momentum(z);
            let g = f.energy_density(t, z).big_g;
            let o = big_g_oracle(&f, t, z);
            assert!((g - o).abs() <= 1e-10 * o.abs().max(1.0), "tau={tau} z={z}: {g} vs {o}");
        }
    }
}

#[test]
fn energy_density_z_derivative_matches_differences() {
    let f = quartic();
    let q = f.constants().q;
    for &(tau, zf) in &[(0.3, 0.2), (0.92, 0.4), (0.97, 0.6), (2.0, 0.5)] {
        let z = zf * q;
        let t = tau * f.critical_momentum(z);
        let e = f.energy_density(t, z);
        let h = 2e-7 * q;
        let fd = (f.energy_density(t, z + h).big_g - f.energy_density(t, z - h).big_g) / (2.0 * h);
        assert!((e.dz_big_g - fd).abs() < 1e-6 * e.dz_big_g.abs().max(1e-6), "tau={tau}: {} vs {fd}", e.dz_big_g);
        let ht = 1e-6 * t.max(1e-3);
        let fdt = (f.energy_density(t + ht, z).big_g - f.energy_density(t - ht, z).big_g) / (2.0 * ht);
        let g = f.truncated_g(t, z).g;
        assert!((0.5 * g - fdt).abs() < 1e-7 * g);
    }
}

#[test]
fn untruncated_z_derivative_is_closed_form() {
    let f = quartic();
    let z = 5.0;
    let t = 0.4 * f.critical_momentum(z);
    let e = f.energy_density(t, z);
    let d = f.density_from_momentum(t, z).unwrap();
    let (_, db) = f.bernoulli(z);
    assert!((e.dz_big_g - db / d.g).abs() < 1e-12 * e.dz_big_g.abs());
}

#[test]
fn energy_vanishes_at_rest_on_the_top_streamline() {
    for f in [canonical(), quartic()] {
        let q = f.constants().q;
        let e = f.energy_density(0.0, q);
        assert!(e.big_g.abs() < 1e-13 * q.powi(2) && e.phi.abs() < 1e-13 * q.powi(2));
    }
}

#[test]
fn irrotational_profile_has_no_z_dependence() {
    let f = canonical();
    for &t in &[0.0, 1.0, 4.4, 9.0] {
        let e = f.energy_terms(t, 1.7);
        assert_eq!(e.dz_big_g, 0.0);
        assert_eq!(e.dz_g_eps, 0.0);
    }
}

#[test]
fn phi_is_increasing_on_a_lattice() {
    for f in [canonical(), quartic()] {
        let q = f.constants().q;
        let tmax = 2.0 * f.critical_momentum(q);
        for i in 0..50 {
            for j in 0..50 {
                let t = tmax * i as f64 / 49.0;
                let z = q * j as f64 / 49.0;
                assert!(f.energy_terms(t, z).dt_phi > 0.0);
            }
        }
    }
}

#[test]
fn lambda_eps_examples() {
    let f = canonical();
    assert!(f.lambda_eps(1e-6).unwrap() < 1e-5);
    let mut prev = 0.0;
    for k in 1..20 {
        let l = f.lambda_eps(0.1 * k as f64).unwrap();
        assert!(l > prev);
        prev = l;
    }
    // Lambda = 2: Phi_eps(4, 4) against direct quadrature.
    let l2 = f.lambda_eps(2.0).unwrap().powi(2);
    let t = 4.0;
    let g = f.truncated_g(t, 4.0).g;
    let oracle = -big_g_oracle(&f, t, 4.0) + g * t;
    assert!((l2 - oracle).abs() < 1e-8 * oracle);
    assert!(matches!(f.lambda_eps(2.2), Err(FlowError::SonicFreeBoundary { .. })));
    assert!(f.lambda_eps_truncated(13.0) > f.lambda_eps_truncated(2.0));
}

#[test]
fn lemma_bounds_on_dense_sample() {
    for f in [canonical(), quartic()] {
        let q = f.constants().q;
        let (lo, hi) = (f.g_lower(), f.g_upper());
        let tmax = 2.0 * f.critical_momentum(q);
        for i in 0..200 {
            for j in 0..50 {
                let t = tmax * i as f64 / 199.0;
                let z = q * j as f64 / 49.0;
                let e = f.energy_terms(t, z);
                assert!(e.g_eps >= lo * (1.0 - 1e-12) && e.g_eps <= hi * (1.0 + 1e-12));
                assert!(e.g_eps + 2.0 * t * e.dt_g_eps > 0.0);
                assert!(e.dz_g_eps.is_finite());
            }
        }
    }
}

