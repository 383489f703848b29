//! Evaluators for g, its truncation and the energy density G_eps.
//!
//! On the subsonic branch the density scales as rho = rho_m(s) r(tau) with
//! tau = t / t_c(s), and r depends on tau and gamma only. This gives a closed
//! form for int_0^t g below the truncation window, and reduces the window
//! integral of the truncated g to one universal function of tau, tabulated
//! once at construction.

use super::bernoulli::{BernoulliFn, BernoulliTable};
use super::cutoff::{complement_integral, cutoff_eps};
use super::gas::{critical_quantities, critical_unchecked, dmomentum_sq, ScaledBranch};
use super::{FlowConstants, FlowError, UpstreamProfile};
use crate::numerics::integrate;

const BERNOULLI_TABLE_INTERVALS: usize = 16384;
const WINDOW_TABLE_INTERVALS: usize = 512;

/// Untruncated density data on the subsonic branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Density {
    pub rho: f64,
    pub g: f64,
    pub dt_g: f64,
    pub dz_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedG {
    pub g: f64,
    pub dt_g: f64,
    pub dz_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyDensity {
    pub big_g: f64,
    pub dz_big_g: f64,
    pub phi: f64,
}

/// Everything the discrete energy needs at one (t, z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    pub g_eps: f64,
    pub dt_g_eps: f64,
    pub dz_g_eps: f64,
    pub big_g: f64,
    pub dz_big_g: f64,
    pub phi: f64,
    pub dt_phi: f64,
}

#[derive(Debug, Clone)]
pub struct FlowTables {
    constants: FlowConstants,
    bernoulli: BernoulliFn,
    table: Option<BernoulliTable>,
    branch: ScaledBranch,
    g_upper: f64,
    g_lower: f64,
    /// r at tau = 1 - eps.
    r_window: f64,
    /// (A, A') on a uniform tau grid over the truncation window, where
    /// A(tau) = int_{1-eps}^{tau} w_eps(sigma) / r(sigma) d sigma.
    window: Vec<(f64, f64)>,
    rho_q_pow: f64,
}

impl FlowTables {
    pub fn new(constants: FlowConstants, profile: UpstreamProfile) -> Self {
        let bernoulli = BernoulliFn::new(profile, constants.rho_bar, constants.gamma, constants.q);
        let table = (!bernoulli.is_constant())
            .then(|| BernoulliTable::new(&bernoulli, constants.q, BERNOULLI_TABLE_INTERVALS));
        let branch = ScaledBranch::new(constants.gamma);
        let eps = constants.epsilon;
        let dtau = 0.5 * eps / WINDOW_TABLE_INTERVALS as f64;
        let integrand = |s: f64| cutoff_eps(s, eps).0 / branch.r(s);
        let mut window = Vec::with_capacity(WINDOW_TABLE_INTERVALS + 1);
        let mut acc = 0.0;
        for k in 0..=WINDOW_TABLE_INTERVALS {
            let tau = 1.0 - eps + k as f64 * dtau;
            if k > 0 {
                acc += integrate(integrand, tau - dtau, tau, 1e-17, 1e-14).value;
            }
            window.push((acc, integrand(tau)));
        }
        let g_upper = constants.g_upper();
        let g_lower = constants.g_lower();
        let r_window = branch.r(1.0 - eps);
        let s_q = bernoulli.eval(constants.q).b;
        let rho_q_pow = critical_unchecked(s_q, constants.gamma).rho_m.powf(constants.gamma);
        Self { constants, bernoulli, table, branch, g_upper, g_lower, r_window, window, rho_q_pow }
    }

    pub fn constants(&self) -> &FlowConstants {
        &self.constants
    }

    pub fn bernoulli_fn(&self) -> &BernoulliFn {
        &self.bernoulli
    }

    pub fn g_upper(&self) -> f64 {
        self.g_upper
    }

    pub fn g_lower(&self) -> f64 {
        self.g_lower
    }

    /// (𝓑(z), 𝓑'(z)) using the interpolation table on [0, Q].
    #[inline]
    pub fn bernoulli(&self, z: f64) -> (f64, f64) {
        match &self.table {
            None => (self.bernoulli.eval(z).b, 0.0),
            Some(t) if z > 0.0 && z <= t.q() => t.eval(z),
            Some(_) => {
                let v = self.bernoulli.eval(z);
                (v.b, v.db)
            }
        }
    }

    /// t_c(𝓑(z)).
    pub fn critical_momentum(&self, z: f64) -> f64 {
        critical_unchecked(self.bernoulli(z).0, self.constants.gamma).t_c
    }

    /// Subsonic-branch density and the partials of g = 1/rho.
    /// Evaluated as in the truncation, so g_eps = g holds bitwise below the
    /// window.
    pub fn density_from_momentum(&self, t: f64, z: f64) -> Result<Density, FlowError> {
        let gamma = self.constants.gamma;
        let (s, ds) = self.bernoulli(z);
        let cr = critical_quantities(s, gamma)?;
        if !(t >= 0.0) {
            return Err(FlowError::Domain(format!("squared momentum must be nonnegative, got {t}")));
        }
        if t >= cr.t_c {
            return Err(FlowError::Sonic { t, t_c: cr.t_c });
        }
        let rho = cr.rho_m * self.branch.r(t / cr.t_c);
        let g = 1.0 / rho;
        let d = dmomentum_sq(rho, s, gamma);
        Ok(Density { rho, g, dt_g: -g * g / d, dz_g: 2.0 * ds / d })
    }

    /// Window integral A(tau) and its derivative.
    #[inline]
    fn window_integral(&self, tau: f64) -> (f64, f64) {
        let eps = self.constants.epsilon;
        let dtau = 0.5 * eps / WINDOW_TABLE_INTERVALS as f64;
        let x = ((tau - (1.0 - eps)) / dtau).clamp(0.0, WINDOW_TABLE_INTERVALS as f64);
        let k = (x as usize).min(WINDOW_TABLE_INTERVALS - 1);
        let s = x - k as f64;
        let (a0, d0) = self.window[k];
        let (a1, d1) = self.window[k + 1];
        let s2 = s * s;
        let s3 = s2 * s;
        let val = (2.0 * s3 - 3.0 * s2 + 1.0) * a0
            + (s3 - 2.0 * s2 + s) * dtau * d0
            + (-2.0 * s3 + 3.0 * s2) * a1
            + (s3 - s2) * dtau * d1;
        let der = (6.0 * s2 - 6.0 * s) / dtau * a0
            + (3.0 * s2 - 4.0 * s + 1.0) * d0
            + (-6.0 * s2 + 6.0 * s) / dtau * a1
            + (3.0 * s2 - 2.0 * s) * d1;
        (val, der)
    }

    /// All integrand quantities at (t, z); total on [0, inf) x R.
    pub fn energy_terms(&self, t: f64, z: f64) -> EnergyTerms {
        let c = &self.constants;
        let gamma = c.gamma;
        let eps = c.epsilon;
        let (s, ds) = self.bernoulli(z);
        let cr = critical_unchecked(s, gamma);
        let (tc, rho_m) = (cr.t_c, cr.rho_m);
        let t = t.max(0.0);
        let tau = t / tc;
        let kgam = (gamma + 1.0) / (gamma * (gamma - 1.0));
        let rq = self.rho_q_pow / gamma;
        if tau <= 1.0 - eps {
            let rho = rho_m * self.branch.r(tau);
            let g = 1.0 / rho;
            let d = dmomentum_sq(rho, s, gamma);
            let dt_g = -g * g / d;
            let big_g = 2.0 * s * rho - kgam * rho.powf(gamma) - rq;
            return EnergyTerms {
                g_eps: g,
                dt_g_eps: dt_g,
                dz_g_eps: 2.0 * ds / d,
                big_g,
                dz_big_g: rho * ds,
                phi: -big_g + g * t,
                dt_phi: 0.5 * g + t * dt_g,
            };
        }
        let g_up = self.g_upper;
        // Value and z-derivative of the untruncated G at t1 = (1 - eps) t_c.
        let tc1 = (gamma + 1.0) / (gamma - 1.0) * tc / s;
        let rho_m1 = rho_m / ((gamma - 1.0) * s);
        let rho1 = rho_m * self.r_window;
        let g1 = 1.0 / rho1;
        let g_at_t1 = 2.0 * s * rho1 - kgam * rho1.powf(gamma) - rq;
        let end = 1.0 - 0.5 * eps;
        let (a, a_der) = if tau < end { self.window_integral(tau) } else { (self.window_integral(end).0, 0.0) };
        let b = complement_integral(tau, eps);
        let (w, dw) = cutoff_eps(tau, eps);
        let b_der = 1.0 - w;
        let big_g = g_at_t1 + 0.5 * tc * (a / rho_m + g_up * b);
        let dz_big_g = ds
            * (0.5 * g1 * (1.0 - eps) * tc1
                + rho1
                + 0.5 * (tc1 * a / rho_m - tc * a * rho_m1 / (rho_m * rho_m) - tau * tc1 * a_der / rho_m)
                + 0.5 * g_up * (tc1 * b - tau * tc1 * b_der));
        let (g_eps, dt_g_eps, dz_g_eps) = if tau < end {
            let rho = rho_m * self.branch.r(tau);
            let g = 1.0 / rho;
            let d = dmomentum_sq(rho, s, gamma);
            let dt_g = -g * g / d;
            let dz_g = 2.0 * ds / d;
            let dtau_dz = -tau * tc1 * ds / tc;
            (
                g * w + (1.0 - w) * g_up,
                dt_g * w + (g - g_up) * dw / tc,
                dz_g * w + (g - g_up) * dw * dtau_dz,
            )
        } else {
            (g_up, 0.0, 0.0)
        };
        EnergyTerms {
            g_eps,
            dt_g_eps,
            dz_g_eps,
            big_g,
            dz_big_g,
            phi: -big_g + g_eps * t,
            dt_phi: 0.5 * g_eps + t * dt_g_eps,
        }
    }

    /// Truncated g and its partials.
    pub fn truncated_g(&self, t: f64, z: f64) -> TruncatedG {
        let e = self.energy_terms(t, z);
        TruncatedG { g: e.g_eps, dt_g: e.dt_g_eps, dz_g: e.dz_g_eps }
    }

    /// (G_eps, d_z G_eps, Phi_eps).
    pub fn energy_density(&self, t: f64, z: f64) -> EnergyDensity {
        let e = self.energy_terms(t, z);
        EnergyDensity { big_g: e.big_g, dz_big_g: e.dz_big_g, phi: e.phi }
    }

    /// lambda_eps = sqrt(Phi_eps(Lambda^2, Q)) for a subsonic free-boundary momentum.
    pub fn lambda_eps(&self, lambda: f64) -> Result<f64, FlowError> {
        if !(lambda > 0.0) {
            return Err(FlowError::Domain(format!("Lambda must be positive (got {lambda})")));
        }
        let tc = self.critical_momentum(self.constants.q);
        if lambda * lambda >= tc {
            return Err(FlowError::SonicFreeBoundary { lambda_sq: lambda * lambda, t_c: tc });
        }
        Ok(self.lambda_eps_truncated(lambda))
    }

    /// sqrt(Phi_eps(Lambda^2, Q)) for any Lambda >= 0; above the sonic
    /// threshold this is the penalty of the truncated problem.
    pub fn lambda_eps_truncated(&self, lambda: f64) -> f64 {
        self.energy_terms(lambda * lambda, self.constants.q).phi.max(0.0).sqrt()
    }

    /// Whether (t, z) lies where g_eps = g.
    pub fn is_untruncated(&self, t: f64, z: f64) -> bool {
        t <= (1.0 - self.constants.epsilon) * self.critical_momentum(z)
    }
}
