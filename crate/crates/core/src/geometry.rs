//! Nozzle description, the truncated computational domain on a uniform
//! vertex-centred grid, and the fixed boundary data.
//!
//! Nodes sit at x_i = -mu + i h, y_j = j h, so the axis is grid row 0 and the
//! nozzle lip (0, 1) is a grid node. The nozzle wall is represented as a
//! staircase: nodes on or beyond the wall carry the wall value Q.

use crate::numerics::{bisect, safeguarded_newton};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid nozzle: {0}")]
    InvalidNozzle(String),
    #[error("truncation too deep: the nozzle never reaches x = -{mu}")]
    TruncationTooDeep { mu: f64 },
    #[error("grid does not resolve the inlet layer: h = {h} > k_mu / 4 = {limit}")]
    Resolution { h: f64, limit: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid Lambda: {0}")]
    InvalidLambda(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NozzleShape {
    /// N(y) = a ln((barH - y) / (barH - 1)).
    Log { a: f64 },
    /// Samples (y_k, N(y_k)) starting at y = 1, monotone cubic in between.
    Samples { ys: Vec<f64>, xs: Vec<f64>, slopes: Vec<f64> },
}

/// The nozzle wall as an x-graph x = N(y) over [1, barH).
#[derive(Debug, Clone, PartialEq)]
pub struct NozzleGeometry {
    shape: NozzleShape,
    bar_h: f64,
}

impl NozzleGeometry {
    pub fn log(a: f64, bar_h: f64) -> Result<Self, GeometryError> {
        if !(a > 0.0) || !(bar_h > 1.0) {
            return Err(GeometryError::InvalidNozzle("log nozzle needs a > 0 and barH > 1".into()));
        }
        Ok(Self { shape: NozzleShape::Log { a }, bar_h })
    }

    pub fn samples(ys: Vec<f64>, xs: Vec<f64>, bar_h: f64) -> Result<Self, GeometryError> {
        if ys.len() < 3 || ys.len() != xs.len() {
            return Err(GeometryError::InvalidNozzle("need at least 3 (y, N) samples".into()));
        }
        if ys[0] != 1.0 || xs[0] != 0.0 {
            return Err(GeometryError::InvalidNozzle("samples must start at (y, N) = (1, 0)".into()));
        }
        if ys.windows(2).any(|w| w[1] <= w[0]) || *ys.last().unwrap() >= bar_h {
            return Err(GeometryError::InvalidNozzle("sample heights must increase strictly below barH".into()));
        }
        let n = ys.len();
        let d: Vec<f64> = (0..n - 1).map(|i| (xs[i + 1] - xs[i]) / (ys[i + 1] - ys[i])).collect();
        let mut slopes = vec![0.0; n];
        slopes[0] = d[0];
        slopes[n - 1] = d[n - 2];
        for i in 1..n - 1 {
            slopes[i] = if d[i - 1] * d[i] <= 0.0 { 0.0 } else { 2.0 / (1.0 / d[i - 1] + 1.0 / d[i]) };
        }
        Ok(Self { shape: NozzleShape::Samples { ys, xs, slopes }, bar_h })
    }

    pub fn bar_h(&self) -> f64 {
        self.bar_h
    }

    /// Largest height at which the wall is defined.
    fn y_max(&self) -> f64 {
        match &self.shape {
            NozzleShape::Log { .. } => self.bar_h,
            NozzleShape::Samples { ys, .. } => *ys.last().unwrap(),
        }
    }

    /// N(y) and N'(y) for y in [1, barH).
    pub fn eval(&self, y: f64) -> (f64, f64) {
        match &self.shape {
            NozzleShape::Log { a } => {
                let d = self.bar_h - y;
                if d <= 0.0 {
                    return (f64::NEG_INFINITY, f64::NEG_INFINITY);
                }
                (a * (d / (self.bar_h - 1.0)).ln(), -a / d)
            }
            NozzleShape::Samples { ys, xs, slopes } => {
                let n = ys.len();
                if y >= ys[n - 1] {
                    let dy = y - ys[n - 1];
                    return (xs[n - 1] + slopes[n - 1] * dy, slopes[n - 1]);
                }
                let i = match ys.binary_search_by(|v| v.total_cmp(&y)) {
                    Ok(i) => i.min(n - 2),
                    Err(i) => i.saturating_sub(1).min(n - 2),
                };
                let h = ys[i + 1] - ys[i];
                let s = (y - ys[i]) / h;
                let (p0, p1, m0, m1) = (xs[i], xs[i + 1], slopes[i] * h, slopes[i + 1] * h);
                let v = (2.0 * s.powi(3) - 3.0 * s * s + 1.0) * p0
                    + (s.powi(3) - 2.0 * s * s + s) * m0
                    + (-2.0 * s.powi(3) + 3.0 * s * s) * p1
                    + (s.powi(3) - s * s) * m1;
                let dv = ((6.0 * s * s - 6.0 * s) * p0
                    + (3.0 * s * s - 4.0 * s + 1.0) * m0
                    + (-6.0 * s * s + 6.0 * s) * p1
                    + (3.0 * s * s - 2.0 * s) * m1)
                    / h;
                (v, dv)
            }
        }
    }

    /// Height b with N(b) = -mu.
    pub fn height_at(&self, mu: f64) -> Result<f64, GeometryError> {
        let lo = 1.0;
        let hi = self.y_max();
        let probe = hi - 1e-12 * (hi - lo);
        if self.eval(probe).0 > -mu {
            return Err(GeometryError::TruncationTooDeep { mu });
        }
        let b = match &self.shape {
            NozzleShape::Log { a } => self.bar_h - (self.bar_h - 1.0) * (-mu / a).exp(),
            NozzleShape::Samples { .. } => bisect(|y| self.eval(y).0 + mu, lo, probe, 1e-15)
                .map_err(|e| GeometryError::InvalidNozzle(e.to_string()))?,
        };
        Ok(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeKind {
    Interior,
    Axis,
    Inlet,
    Outlet,
    Wall,
    TopLine,
}

impl NodeKind {
    pub fn is_unknown(self) -> bool {
        self == NodeKind::Interior
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Nozzle(NozzleGeometry),
    /// Channel of constant height with Dirichlet data on all four sides.
    Rectangle { height: f64 },
}

/// Inlet layer parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InletLayer {
    pub b_mu: f64,
    pub k_mu: f64,
    pub s_exp: f64,
}

impl InletLayer {
    pub fn b_prime(&self) -> f64 {
        self.b_mu - self.k_mu
    }

    /// Inlet profile: 0 below b', power law across the layer, Q above b.
    pub fn value(&self, y: f64, q: f64) -> f64 {
        let bp = self.b_prime();
        if y <= bp {
            0.0
        } else if y >= self.b_mu {
            q
        } else {
            q * ((y - bp) / self.k_mu).powf(self.s_exp)
        }
    }
}

#[derive(Debug, Clone)]
pub struct DomainGrid {
    pub shape: DomainShape,
    pub mu: f64,
    pub r: f64,
    pub h: f64,
    /// Number of node columns and rows.
    pub nx: usize,
    pub ny: usize,
    pub inlet: Option<InletLayer>,
    kinds: Vec<NodeKind>,
    unknown_of: Vec<u32>,
    unknowns: Vec<usize>,
}

pub const NOT_UNKNOWN: u32 = u32::MAX;

fn integer_ratio(a: f64, h: f64, what: &str) -> Result<usize, GeometryError> {
    let n = (a / h).round();
    if (a / h - n).abs() > 1e-9 * n.max(1.0) || n < 1.0 {
        return Err(GeometryError::InvalidGrid(format!("{what} / h must be a positive integer")));
    }
    Ok(n as usize)
}

impl DomainGrid {
    /// Truncated nozzle domain between x = -mu and x = R.
    pub fn build_nozzle(nozzle: NozzleGeometry, mu: f64, r: f64, h: f64, k_mu: f64, s_exp: f64) -> Result<Self, GeometryError> {
        if !(mu > 0.0 && r > 0.0 && h > 0.0) {
            return Err(GeometryError::InvalidGrid("mu, R and h must be positive".into()));
        }
        if !(s_exp > 1.5 && s_exp < 2.0) {
            return Err(GeometryError::InvalidGrid(format!("inlet exponent must lie in (3/2, 2), got {s_exp}")));
        }
        let (n_at_one, _) = nozzle.eval(1.0);
        if n_at_one.abs() > 1e-12 {
            return Err(GeometryError::InvalidNozzle(format!("N(1) must be 0, got {n_at_one}")));
        }
        let b_mu = nozzle.height_at(mu)?;
        if !(k_mu > 0.0 && k_mu < (b_mu - 1.0) / 4.0) {
            return Err(GeometryError::InvalidGrid(format!(
                "k_mu = {k_mu} must lie in (0, (b_mu - 1)/4) with b_mu = {b_mu}"
            )));
        }
        if h > k_mu / 4.0 {
            return Err(GeometryError::Resolution { h, limit: k_mu / 4.0 });
        }
        let imu = integer_ratio(mu, h, "mu")?;
        let ir = integer_ratio(r, h, "R")?;
        let ione = integer_ratio(1.0, h, "1")?;
        let nx = imu + ir + 1;
        let ny = (b_mu / h).floor() as usize + 2;
        let mut kinds = vec![NodeKind::Interior; nx * ny];
        for i in 0..nx {
            let x = -mu + i as f64 * h;
            for j in 0..ny {
                let y = j as f64 * h;
                let kind = if j == 0 {
                    NodeKind::Axis
                } else if i == 0 {
                    if y <= b_mu { NodeKind::Inlet } else { NodeKind::Wall }
                } else if j == ione && i >= imu {
                    NodeKind::TopLine
                } else if i == nx - 1 {
                    if j < ione { NodeKind::Outlet } else { NodeKind::Wall }
                } else if j > ione {
                    let (n, _) = nozzle.eval(y);
                    if x >= n.min(0.0) { NodeKind::Wall } else { NodeKind::Interior }
                } else {
                    NodeKind::Interior
                };
                kinds[i * ny + j] = kind;
            }
        }
        let inlet = Some(InletLayer { b_mu, k_mu, s_exp });
        Ok(Self::assemble(DomainShape::Nozzle(nozzle), mu, r, h, nx, ny, inlet, kinds))
    }

    /// Rectangle [-mu, R] x [0, height] with Dirichlet data on its boundary.
    pub fn rectangle(height: f64, mu: f64, r: f64, h: f64) -> Result<Self, GeometryError> {
        let imu = integer_ratio(mu, h, "mu")?;
        let ir = integer_ratio(r, h, "R")?;
        let jh = integer_ratio(height, h, "height")?;
        let (nx, ny) = (imu + ir + 1, jh + 1);
        let mut kinds = vec![NodeKind::Interior; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                kinds[i * ny + j] = if j == 0 {
                    NodeKind::Axis
                } else if j == ny - 1 {
                    NodeKind::TopLine
                } else if i == 0 {
                    NodeKind::Inlet
                } else if i == nx - 1 {
                    NodeKind::Outlet
                } else {
                    NodeKind::Interior
                };
            }
        }
        Ok(Self::assemble(DomainShape::Rectangle { height }, mu, r, h, nx, ny, None, kinds))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        shape: DomainShape,
        mu: f64,
        r: f64,
        h: f64,
        nx: usize,
        ny: usize,
        inlet: Option<InletLayer>,
        kinds: Vec<NodeKind>,
    ) -> Self {
        let mut unknown_of = vec![NOT_UNKNOWN; kinds.len()];
        let mut unknowns = Vec::new();
        for (n, k) in kinds.iter().enumerate() {
            if k.is_unknown() {
                unknown_of[n] = unknowns.len() as u32;
                unknowns.push(n);
            }
        }
        Self { shape, mu, r, h, nx, ny, inlet, kinds, unknown_of, unknowns }
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.mu + i as f64 * self.h
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    #[inline]
    pub fn coords(&self, n: usize) -> (usize, usize) {
        (n / self.ny, n % self.ny)
    }

    #[inline]
    pub fn kind(&self, n: usize) -> NodeKind {
        self.kinds[n]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.kinds
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    #[inline]
    pub fn unknown_of(&self, n: usize) -> Option<usize> {
        let u = self.unknown_of[n];
        (u != NOT_UNKNOWN).then_some(u as usize)
    }

    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    /// Row index of the orifice height y = 1, if it is a grid row.
    pub fn orifice_row(&self) -> Option<usize> {
        let j = (1.0 / self.h).round() as usize;
        ((j as f64 * self.h - 1.0).abs() < 1e-12 && j < self.ny).then_some(j)
    }

    /// Column index of x = 0.
    pub fn lip_column(&self) -> usize {
        (self.mu / self.h).round() as usize
    }

    pub fn nozzle(&self) -> Option<&NozzleGeometry> {
        match &self.shape {
            DomainShape::Nozzle(n) => Some(n),
            DomainShape::Rectangle { .. } => None,
        }
    }

    /// Builds a full-grid field holding the boundary values, with zeros on
    /// unknown nodes.
    pub fn boundary_field<F: Fn(NodeKind, f64, f64) -> f64>(&self, value: F) -> Vec<f64> {
        let mut psi = vec![0.0; self.len()];
        for i in 0..self.nx {
            for j in 0..self.ny {
                let n = self.node(i, j);
                let k = self.kinds[n];
                if k != NodeKind::Interior {
                    psi[n] = value(k, self.x(i), self.y(j));
                }
            }
        }
        psi
    }
}

/// Outlet barrier profile for momentum `lambda` and flux `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutletProfile {
    pub lambda: f64,
    pub q: f64,
    /// Height where the profile reaches Q when Lambda > Q.
    pub h_star: Option<f64>,
}

impl OutletProfile {
    pub fn new(lambda: f64, q: f64) -> Result<Self, GeometryError> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(GeometryError::InvalidLambda(format!("Lambda must be positive, got {lambda}")));
        }
        let h_star = if lambda > q {
            // lambda H^2 e^(1-H) - Q is increasing on (0, 1) and changes sign there.
            let f = |y: f64| {
                let e = (1.0 - y).exp();
                (lambda * y * y * e - q, lambda * e * y * (2.0 - y))
            };
            let h = safeguarded_newton(f, 0.0, 1.0, 0.5, 1e-15)
                .map_err(|e| GeometryError::InvalidLambda(format!("H_* root failed: {e}")))?;
            Some(h)
        } else {
            None
        };
        Ok(Self { lambda, q, h_star })
    }

    pub fn value(&self, y: f64) -> f64 {
        let e = y * y * (1.0 - y).exp();
        if self.lambda > self.q {
            (self.lambda * e).min(self.q)
        } else {
            self.q * e
        }
    }
}

/// Boundary data for the nozzle problem at momentum `lambda`.
pub fn boundary_data(grid: &DomainGrid, q: f64, lambda: f64) -> Result<Vec<f64>, GeometryError> {
    let outlet = OutletProfile::new(lambda, q)?;
    let inlet = grid
        .inlet
        .ok_or_else(|| GeometryError::InvalidGrid("boundary_data needs a nozzle domain".into()))?;
    Ok(grid.boundary_field(|kind, _, y| match kind {
        NodeKind::Axis => 0.0,
        NodeKind::Inlet => inlet.value(y, q),
        NodeKind::Outlet => outlet.value(y),
        NodeKind::Wall | NodeKind::TopLine => q,
        NodeKind::Interior => 0.0,
    }))
}
