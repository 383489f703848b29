//! Pointwise flow algebra: Bernoulli function, subsonic density inversion,
//! the truncation of the density reciprocal and the integrands of the
//! variational functional.

pub mod bernoulli;
pub mod cutoff;
pub mod gas;
pub mod profile;
mod tables;

pub use bernoulli::{BernoulliFn, BernoulliTable, BernoulliValue};
pub use gas::{critical_quantities, enthalpy, momentum_sq, subsonic_density, Critical, ScaledBranch};
pub use profile::{ProfileShape, ProfileValue, UpstreamProfile};
pub use tables::{Density, EnergyDensity, EnergyTerms, FlowTables, TruncatedG};

use crate::numerics::integrate;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("sonic or supersonic state: t = {t} >= t_c = {t_c}")]
    Sonic { t: f64, t_c: f64 },
    #[error("sonic free boundary: Lambda^2 = {lambda_sq} >= t_c(B(Q)) = {t_c}")]
    SonicFreeBoundary { lambda_sq: f64, t_c: f64 },
}

/// Scalar parameters of the problem and the global bounds derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowConstants {
    pub gamma: f64,
    pub q: f64,
    pub epsilon: f64,
    pub bar_h: f64,
    pub rho_bar: f64,
    pub kappa0: f64,
    /// Minimum of the Bernoulli function.
    pub b_star: f64,
    /// Maximum of the Bernoulli function (including the profile extension).
    pub b_upper: f64,
}

impl FlowConstants {
    pub fn new(gamma: f64, q: f64, epsilon: f64, profile: &UpstreamProfile) -> Result<Self, FlowError> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(FlowError::InvalidParameter(format!("gamma must exceed 1 (got {gamma})")));
        }
        if !(q > 0.0) || !q.is_finite() {
            return Err(FlowError::InvalidParameter(format!("Q must be positive (got {q})")));
        }
        if !(epsilon > 0.0 && epsilon < 0.25) {
            return Err(FlowError::InvalidParameter(format!("epsilon must lie in (0, 1/4) (got {epsilon})")));
        }
        let rho_bar = upstream_density(profile, q)?;
        let (u_min, _, u_ext_max) = profile.range();
        let h = enthalpy(rho_bar, gamma);
        Ok(Self {
            gamma,
            q,
            epsilon,
            bar_h: profile.bar_h(),
            rho_bar,
            kappa0: profile.kappa0(),
            b_star: 0.5 * u_min * u_min + h,
            b_upper: 0.5 * u_ext_max * u_ext_max + h,
        })
    }

    /// g^* = 1/rho_c(B_*), the largest value of the density reciprocal.
    pub fn g_upper(&self) -> f64 {
        1.0 / gas::critical_unchecked(self.b_star, self.gamma).rho_c
    }

    /// g_* = 1/rho_m(B^*), the smallest value of the density reciprocal.
    pub fn g_lower(&self) -> f64 {
        1.0 / gas::critical_unchecked(self.b_upper, self.gamma).rho_m
    }
}

/// rho_bar = Q / int_0^barH y u(y) dy by adaptive quadrature.
pub fn upstream_density(profile: &UpstreamProfile, q: f64) -> Result<f64, FlowError> {
    if !(q > 0.0) {
        return Err(FlowError::InvalidParameter(format!("Q must be positive (got {q})")));
    }
    let m = integrate(|y| y * profile.eval(y).u, 0.0, profile.bar_h(), 1e-15, 1e-13).value;
    if !(m > 0.0) || !m.is_finite() {
        return Err(FlowError::InvalidProfile(format!("nonpositive mass integral {m}")));
    }
    Ok(q / m)
}

#[cfg(test)]
mod tests;
