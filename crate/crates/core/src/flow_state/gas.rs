//! Polytropic gas algebra: enthalpy, critical states and inversion of the
//! squared momentum on the subsonic branch.

use super::FlowError;

/// h(rho) = rho^(gamma-1) / (gamma-1).
#[inline]
pub fn enthalpy(rho: f64, gamma: f64) -> f64 {
    rho.powf(gamma - 1.0) / (gamma - 1.0)
}

/// Squared momentum t(rho, s) = 2 rho^2 (s - h(rho)).
#[inline]
pub fn momentum_sq(rho: f64, s: f64, gamma: f64) -> f64 {
    2.0 * rho * rho * (s - enthalpy(rho, gamma))
}

/// d t / d rho = 4 rho (s - (gamma+1)/2 h(rho)).
#[inline]
pub fn dmomentum_sq(rho: f64, s: f64, gamma: f64) -> f64 {
    4.0 * rho * (s - 0.5 * (gamma + 1.0) * enthalpy(rho, gamma))
}

/// Sonic density, maximum (stagnation) density and critical squared momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Critical {
    pub rho_c: f64,
    pub rho_m: f64,
    pub t_c: f64,
}

pub fn critical_quantities(s: f64, gamma: f64) -> Result<Critical, FlowError> {
    if !(s > 0.0) {
        return Err(FlowError::Domain(format!("Bernoulli value must be positive, got {s}")));
    }
    Ok(critical_unchecked(s, gamma))
}

#[inline]
pub(crate) fn critical_unchecked(s: f64, gamma: f64) -> Critical {
    let base = 2.0 * (gamma - 1.0) * s / (gamma + 1.0);
    let rho_c = base.powf(1.0 / (gamma - 1.0));
    Critical { rho_c, rho_m: ((gamma - 1.0) * s).powf(1.0 / (gamma - 1.0)), t_c: rho_c * rho_c * base }
}

/// Density root on the subsonic branch for Bernoulli value `s`: Newton seeded
/// at the stagnation density, bisection on [rho_c, rho_m] whenever an iterate
/// leaves the bracket.
pub fn subsonic_density(t: f64, s: f64, gamma: f64) -> Result<f64, FlowError> {
    let c = critical_quantities(s, gamma)?;
    if !(t >= 0.0) {
        return Err(FlowError::Domain(format!("squared momentum must be nonnegative, got {t}")));
    }
    if t >= c.t_c {
        return Err(FlowError::Sonic { t, t_c: c.t_c });
    }
    if t == 0.0 {
        return Ok(c.rho_m);
    }
    // f(rho) = t(rho) - t is increasing as rho decreases; f(rho_m) = -t < 0 < f(rho_c).
    let (mut lo, mut hi) = (c.rho_c, c.rho_m);
    let mut rho = c.rho_m;
    let tol = 1e-12 * c.t_c;
    for _ in 0..300 {
        let f = momentum_sq(rho, s, gamma) - t;
        if f.abs() <= tol * 1e-3 {
            return Ok(rho);
        }
        if f > 0.0 {
            lo = rho;
        } else {
            hi = rho;
        }
        let df = dmomentum_sq(rho, s, gamma);
        let mut next = rho - f / df;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - rho).abs() <= 1e-16 * c.rho_m {
            rho = next;
            break;
        }
        rho = next;
    }
    Ok(rho)
}

/// Inverse of the universal scaled momentum on the subsonic branch.
///
/// Writing rho = rho_m(s) r, the ratio tau = t / t_c(s) depends only on r and
/// gamma: tau = r^2 (1 - r^(gamma-1)) / c with c = r_c^2 (gamma-1)/(gamma+1).
#[derive(Debug, Clone)]
pub struct ScaledBranch {
    gamma: f64,
    r_c: f64,
    c: f64,
    /// r sampled at sigma = sqrt(1 - tau) on a uniform grid over [0, 1].
    table: Vec<f64>,
}

impl ScaledBranch {
    const TABLE_INTERVALS: usize = 1024;

    pub fn new(gamma: f64) -> Self {
        let r_c = (2.0 / (gamma + 1.0)).powf(1.0 / (gamma - 1.0));
        let c = r_c * r_c * (gamma - 1.0) / (gamma + 1.0);
        let mut b = Self { gamma, r_c, c, table: Vec::new() };
        let n = Self::TABLE_INTERVALS;
        let table = (0..=n)
            .map(|k| {
                let sigma = k as f64 / n as f64;
                let tau = 1.0 - sigma * sigma;
                b.solve_from(tau, 1.0)
            })
            .collect();
        b.table = table;
        b
    }

    pub fn r_c(&self) -> f64 {
        self.r_c
    }

    /// tau as a function of r.
    #[inline]
    pub fn tau(&self, r: f64) -> f64 {
        r * r * (1.0 - r.powf(self.gamma - 1.0)) / self.c
    }

    #[inline]
    fn dtau(&self, r: f64) -> f64 {
        (2.0 * r - (self.gamma + 1.0) * r.powf(self.gamma)) / self.c
    }

    /// r(tau) for tau in [0, 1].
    #[inline]
    pub fn r(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 1.0;
        }
        if tau >= 1.0 {
            return self.r_c;
        }
        let sigma = (1.0 - tau).sqrt();
        let x = sigma * Self::TABLE_INTERVALS as f64;
        let k = (x as usize).min(Self::TABLE_INTERVALS - 1);
        let w = x - k as f64;
        let seed = self.table[k] * (1.0 - w) + self.table[k + 1] * w;
        self.solve_from(tau, seed)
    }

    fn solve_from(&self, tau: f64, seed: f64) -> f64 {
        if tau <= 0.0 {
            return 1.0;
        }
        if tau >= 1.0 {
            return self.r_c;
        }
        // f(r) = tau(r) - tau is decreasing on [r_c, 1]: f(r_c) > 0 > f(1).
        let (mut lo, mut hi) = (self.r_c, 1.0);
        let mut r = seed.clamp(lo, hi);
        for _ in 0..200 {
            let f = self.tau(r) - tau;
            if f == 0.0 {
                return r;
            }
            if f > 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            let mut next = r - f / self.dtau(r);
            if !next.is_finite() || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            let step = (next - r).abs();
            r = next;
            if step <= 4.0 * f64::EPSILON * r || hi - lo <= 4.0 * f64::EPSILON {
                break;
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values_gamma_two() {
        let c = critical_quantities(1.0, 2.0).unwrap();
        assert!((c.rho_c - 2.0 / 3.0).abs() < 1e-15);
        assert!((c.rho_m - 1.0).abs() < 1e-15);
        assert!((c.t_c - 8.0 / 27.0).abs() < 1e-15);
        let c = critical_quantities(2.5, 2.0).unwrap();
        assert!((c.rho_c - 5.0 / 3.0).abs() < 1e-14);
        assert!((c.rho_m - 2.5).abs() < 1e-14);
        assert!(critical_quantities(0.0, 2.0).is_err());
    }

    #[test]
    fn critical_momentum_is_momentum_at_sonic_density() {
        for &g in &[1.2, 1.4, 2.0, 3.0] {
            for &s in &[0.3, 1.0, 7.0] {
                let c = critical_quantities(s, g).unwrap();
                assert!((momentum_sq(c.rho_c, s, g) - c.t_c).abs() < 1e-12 * c.t_c);
                assert!(dmomentum_sq(c.rho_c, s, g).abs() < 1e-10 * c.rho_c * s);
            }
        }
    }

    #[test]
    fn density_examples() {
        assert_eq!(subsonic_density(0.0, 1.0, 2.0).unwrap(), 1.0);
        let rho = subsonic_density(0.2, 1.0, 2.0).unwrap();
        assert!((rho - 0.8670).abs() < 5e-5);
        let near = subsonic_density(8.0 / 27.0 * (1.0 - 1e-12), 1.0, 2.0).unwrap();
        assert!((near - 2.0 / 3.0).abs() < 1e-5);
        assert!(matches!(subsonic_density(0.3, 1.0, 2.0), Err(FlowError::Sonic { .. })));
    }

    #[test]
    fn scaled_branch_round_trip() {
        for &g in &[1.4, 2.0, 5.0 / 3.0] {
            let b = ScaledBranch::new(g);
            for k in 0..=1000 {
                let tau = k as f64 / 1000.0 * 0.999_999;
                let r = b.r(tau);
                assert!((b.tau(r) - tau).abs() < 1e-13, "gamma {g} tau {tau}");
                assert!(r >= b.r_c() && r <= 1.0);
            }
        }
    }
}
