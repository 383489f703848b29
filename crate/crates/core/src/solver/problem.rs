//! Problem assembly: flow tables, the truncated nozzle grid with an inlet
//! layer that passes the discrete subsolution check, and boundary data.

use super::SolverError;
use crate::energy::radial_operator;
use crate::flow_state::FlowTables;
use crate::geometry::{boundary_data, DomainGrid, GeometryError, InletLayer, NozzleGeometry, OutletProfile};

/// Residual tolerance of the sub/supersolution checks, relative to g^* Q.
const PROFILE_CHECK_TOL: f64 = 1e-9;

/// Largest number of halvings of the inlet layer width.
const MAX_HALVINGS: usize = 12;

#[derive(Debug, Clone)]
pub struct JetProblem {
    tables: FlowTables,
    grid: DomainGrid,
    /// Number of halvings of (b_mu - 1)/8 needed by the subsolution check.
    pub k_mu_halvings: usize,
    /// Smallest operator value on the inlet profile (>= 0 up to tolerance).
    pub inlet_margin: f64,
}

/// Smallest discrete EL operator value on the horizontal extension of the
/// inlet profile, over rows strictly inside {0 < psi < Q}.
pub fn inlet_subsolution_margin(tables: &FlowTables, layer: &InletLayer, h: f64) -> f64 {
    let q = tables.constants().q;
    let top = (layer.b_mu / h).ceil() as usize + 2;
    let profile = |y: f64| layer.value(y, q);
    let res = radial_operator(tables, h, top, profile);
    res.iter()
        .enumerate()
        .filter(|(r, _)| {
            let j = r + 1;
            profile(j as f64 * h) > 0.0 && profile((j + 1) as f64 * h) < q
        })
        .fold(f64::INFINITY, |m, (_, &v)| m.min(v))
}

/// Largest discrete EL operator value on the horizontal extension of the
/// outlet profile, over rows strictly inside {psi < Q}.
pub fn outlet_supersolution_margin(tables: &FlowTables, lambda: f64, h: f64) -> Result<f64, GeometryError> {
    let q = tables.constants().q;
    let outlet = OutletProfile::new(lambda, q)?;
    let top = (1.0 / h).round() as usize + 1;
    let profile = |y: f64| if y <= 1.0 { outlet.value(y) } else { q };
    let res = radial_operator(tables, h, top, profile);
    Ok(res
        .iter()
        .enumerate()
        .filter(|(r, _)| profile((r + 2) as f64 * h) < q)
        .fold(f64::NEG_INFINITY, |m, (_, &v)| m.max(v)))
}

impl JetProblem {
    /// Builds the nozzle problem, halving the inlet layer from (b_mu - 1)/8
    /// until its profile is a discrete subsolution.
    pub fn new(tables: FlowTables, nozzle: NozzleGeometry, mu: f64, r: f64, h: f64, s_exp: f64) -> Result<Self, SolverError> {
        let b_mu = nozzle.height_at(mu)?;
        let q = tables.constants().q;
        let tol = PROFILE_CHECK_TOL * tables.g_upper() * q;
        let mut k = (b_mu - 1.0) / 8.0;
        for halvings in 0..=MAX_HALVINGS {
            let layer = InletLayer { b_mu, k_mu: k, s_exp };
            let margin = inlet_subsolution_margin(&tables, &layer, h);
            if margin >= -tol {
                let grid = DomainGrid::build_nozzle(nozzle, mu, r, h, k, s_exp)?;
                return Ok(Self { tables, grid, k_mu_halvings: halvings, inlet_margin: margin });
            }
            k *= 0.5;
            if h > k / 4.0 {
                return Err(GeometryError::Resolution { h, limit: k / 4.0 }.into());
            }
        }
        Err(SolverError::Setup(format!("no inlet layer width passes the subsolution check (last k_mu = {k})")))
    }

    /// Uses a given inlet layer width without the subsolution search.
    pub fn with_inlet_width(
        tables: FlowTables,
        nozzle: NozzleGeometry,
        mu: f64,
        r: f64,
        h: f64,
        k_mu: f64,
        s_exp: f64,
    ) -> Result<Self, SolverError> {
        let grid = DomainGrid::build_nozzle(nozzle, mu, r, h, k_mu, s_exp)?;
        let layer = grid.inlet.expect("nozzle grid has an inlet layer");
        let inlet_margin = inlet_subsolution_margin(&tables, &layer, h);
        Ok(Self { tables, grid, k_mu_halvings: 0, inlet_margin })
    }

    pub fn tables(&self) -> &FlowTables {
        &self.tables
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn q(&self) -> f64 {
        self.tables.constants().q
    }

    pub fn k_mu(&self) -> f64 {
        self.grid.inlet.map(|l| l.k_mu).unwrap_or(f64::NAN)
    }

    /// Boundary values for momentum `lambda` (zero on unknown nodes).
    pub fn boundary(&self, lambda: f64) -> Result<Vec<f64>, SolverError> {
        Ok(boundary_data(&self.grid, self.q(), lambda)?)
    }

    /// Same problem on a different grid spacing, keeping k_mu.
    pub fn refined(&self, h: f64) -> Result<Self, SolverError> {
        let nozzle = self.grid.nozzle().expect("nozzle grid").clone();
        let layer = self.grid.inlet.expect("nozzle grid has an inlet layer");
        Self::with_inlet_width(self.tables.clone(), nozzle, self.grid.mu, self.grid.r, h, layer.k_mu, layer.s_exp)
            .map(|p| Self { k_mu_halvings: self.k_mu_halvings, ..p })
    }

    /// Same problem with a different downstream truncation.
    pub fn with_downstream_length(&self, r: f64) -> Result<Self, SolverError> {
        let nozzle = self.grid.nozzle().expect("nozzle grid").clone();
        let layer = self.grid.inlet.expect("nozzle grid has an inlet layer");
        Self::with_inlet_width(self.tables.clone(), nozzle, self.grid.mu, r, self.grid.h, layer.k_mu, layer.s_exp)
            .map(|p| Self { k_mu_halvings: self.k_mu_halvings, ..p })
    }
}
