//! Discrete truncated functional on the vertex grid.
//!
//! Each grid cell is split along its SW-NE diagonal into two P1 triangles.
//! In both triangles the axial weight y is taken at the cell mid-height, which
//! makes purely radial profiles psi = c y^2 exact discrete solutions. The
//! indicator term uses a C1 ramp of width delta evaluated at the triangle
//! mean of psi.

use crate::flow_state::FlowTables;
use crate::geometry::{DomainGrid, NodeKind};
use crate::numerics::skyline::SkylineMatrix;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("non-finite value in field at node {node}")]
    NonFinite { node: usize },
    #[error("field has {got} entries, grid has {expected}")]
    Shape { got: usize, expected: usize },
}

/// C1 ramp: 1 for z <= Q - delta, 0 for z >= Q. Returns (value, d/dz, d2/dz2).
#[inline]
pub fn indicator(z: f64, q: f64, delta: f64) -> (f64, f64, f64) {
    let s = (z - (q - delta)) / delta;
    if s <= 0.0 {
        (1.0, 0.0, 0.0)
    } else if s >= 1.0 {
        (0.0, 0.0, 0.0)
    } else {
        (1.0 - s * s * (3.0 - 2.0 * s), -6.0 * s * (1.0 - s) / delta, -6.0 * (1.0 - 2.0 * s) / (delta * delta))
    }
}

/// Per-triangle geometry: node offsets (di, dj) and the gradients of the
/// three hat functions scaled by h.
const TRIANGLES: [[(usize, usize, f64, f64); 3]; 2] = [
    // (i,j), (i+1,j), (i+1,j+1)
    [(0, 0, -1.0, 0.0), (1, 0, 1.0, -1.0), (1, 1, 0.0, 1.0)],
    // (i,j), (i+1,j+1), (i,j+1)
    [(0, 0, 0.0, -1.0), (1, 1, 1.0, 0.0), (0, 1, -1.0, 1.0)],
];

/// Local contribution of one triangle.
#[derive(Debug, Clone, Copy, Default)]
struct TriangleTerms {
    energy: f64,
    /// Split energy: the G part and the indicator part.
    grad: [f64; 3],
    grad_g: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct DiscreteEnergy<'a> {
    grid: &'a DomainGrid,
    tables: &'a FlowTables,
    lambda_eps: f64,
    delta: f64,
    cells: Vec<usize>,
}

impl<'a> DiscreteEnergy<'a> {
    /// `lambda_eps = 0` drops the indicator term.
    pub fn new(grid: &'a DomainGrid, tables: &'a FlowTables, lambda_eps: f64, delta: f64) -> Self {
        assert!(delta > 0.0, "indicator width must be positive");
        let mut cells = Vec::new();
        for i in 0..grid.nx - 1 {
            for j in 0..grid.ny - 1 {
                let corners = [grid.node(i, j), grid.node(i + 1, j), grid.node(i, j + 1), grid.node(i + 1, j + 1)];
                let all_fixed_q = corners
                    .iter()
                    .all(|&n| matches!(grid.kind(n), NodeKind::Wall | NodeKind::TopLine));
                if !all_fixed_q {
                    cells.push(grid.node(i, j));
                }
            }
        }
        Self { grid, tables, lambda_eps, delta, cells }
    }

    pub fn grid(&self) -> &DomainGrid {
        self.grid
    }

    pub fn tables(&self) -> &FlowTables {
        self.tables
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn lambda_eps(&self) -> f64 {
        self.lambda_eps
    }

    pub fn set_delta(&mut self, delta: f64) {
        assert!(delta > 0.0);
        self.delta = delta;
    }

    fn check(&self, psi: &[f64]) -> Result<(), EnergyError> {
        if psi.len() != self.grid.len() {
            return Err(EnergyError::Shape { got: psi.len(), expected: self.grid.len() });
        }
        if let Some(node) = psi.iter().position(|v| !v.is_finite()) {
            return Err(EnergyError::NonFinite { node });
        }
        Ok(())
    }

    #[inline]
    fn triangle(&self, psi: &[f64], base: usize, tri: usize, want_grad: bool) -> TriangleTerms {
        let g = self.grid;
        let h = g.h;
        let ny = g.ny;
        let j = base % ny;
        let ym = (j as f64 + 0.5) * h;
        let w = 0.5 * h * h * ym;
        let geo = &TRIANGLES[tri];
        let mut vals = [0.0; 3];
        let (mut px, mut py, mut z) = (0.0, 0.0, 0.0);
        for (k, &(di, dj, gx, gy)) in geo.iter().enumerate() {
            let v = psi[base + di * ny + dj];
            vals[k] = v;
            px += gx * v;
            py += gy * v;
            z += v;
        }
        px /= h;
        py /= h;
        z /= 3.0;
        let q = self.tables.constants().q;
        let t = (px * px + py * py) / (ym * ym);
        let e = self.tables.energy_terms(t, z);
        let lam2 = self.lambda_eps * self.lambda_eps;
        let (chi, dchi) = if lam2 > 0.0 {
            let (c, d, _) = indicator(z, q, self.delta);
            (c, d)
        } else {
            (0.0, 0.0)
        };
        let mut out = TriangleTerms { energy: w * (e.big_g + lam2 * chi), ..Default::default() };
        if want_grad {
            let c = e.g_eps / (ym * ym * h);
            for (k, &(_, _, gx, gy)) in geo.iter().enumerate() {
                let flux = c * (px * gx + py * gy);
                out.grad_g[k] = w * (flux + e.dz_big_g / 3.0);
                out.grad[k] = out.grad_g[k] + w * lam2 * dchi / 3.0;
            }
        }
        out
    }

    fn cell_terms(&self, psi: &[f64], want_grad: bool) -> Vec<[TriangleTerms; 2]> {
        self.cells
            .par_iter()
            .with_min_len(512)
            .map(|&base| [self.triangle(psi, base, 0, want_grad), self.triangle(psi, base, 1, want_grad)])
            .collect()
    }

    /// Energy of each cell (both triangles), in cell order.
    pub fn cell_energies(&self, psi: &[f64]) -> Result<Vec<f64>, EnergyError> {
        self.check(psi)?;
        Ok(self
            .cells
            .par_iter()
            .with_min_len(512)
            .map(|&base| self.triangle(psi, base, 0, false).energy + self.triangle(psi, base, 1, false).energy)
            .collect())
    }

    /// J(psi) - J(reference) summed cell by cell, which avoids the
    /// cancellation of subtracting two totals. `reference` holds the cell
    /// energies of the reference field.
    pub fn energy_change(&self, psi: &[f64], reference: &[f64]) -> Result<f64, EnergyError> {
        let new = self.cell_energies(psi)?;
        Ok(new.iter().zip(reference).map(|(a, b)| a - b).sum())
    }

    /// Value of the discrete functional.
    pub fn evaluate(&self, psi: &[f64]) -> Result<f64, EnergyError> {
        self.check(psi)?;
        Ok(self.cell_terms(psi, false).iter().map(|c| c[0].energy + c[1].energy).sum())
    }

    /// Energy and full-grid gradient (zero on Dirichlet nodes).
    pub fn value_and_gradient(&self, psi: &[f64]) -> Result<(f64, Vec<f64>), EnergyError> {
        self.check(psi)?;
        let terms = self.cell_terms(psi, true);
        let mut grad = vec![0.0; psi.len()];
        let mut energy = 0.0;
        let ny = self.grid.ny;
        for (c, &base) in terms.iter().zip(&self.cells) {
            for (tri, tt) in c.iter().enumerate() {
                energy += tt.energy;
                for (k, &(di, dj, _, _)) in TRIANGLES[tri].iter().enumerate() {
                    grad[base + di * ny + dj] += tt.grad[k];
                }
            }
        }
        for (n, gv) in grad.iter_mut().enumerate() {
            if !self.grid.kind(n).is_unknown() {
                *gv = 0.0;
            }
        }
        Ok((energy, grad))
    }

    pub fn gradient(&self, psi: &[f64]) -> Result<Vec<f64>, EnergyError> {
        Ok(self.value_and_gradient(psi)?.1)
    }

    /// Residual of div(g_eps grad psi / y) - y d_z G_eps at unknown nodes with
    /// psi < Q - delta (zero elsewhere).
    pub fn el_residual(&self, psi: &[f64]) -> Result<Vec<f64>, EnergyError> {
        self.check(psi)?;
        let terms = self.cell_terms(psi, true);
        let mut grad = vec![0.0; psi.len()];
        let ny = self.grid.ny;
        for (c, &base) in terms.iter().zip(&self.cells) {
            for (tri, tt) in c.iter().enumerate() {
                for (k, &(di, dj, _, _)) in TRIANGLES[tri].iter().enumerate() {
                    grad[base + di * ny + dj] += tt.grad_g[k];
                }
            }
        }
        let q = self.tables.constants().q;
        let area = self.grid.h * self.grid.h;
        Ok(grad
            .iter()
            .enumerate()
            .map(|(n, &gv)| {
                if self.grid.kind(n).is_unknown() && psi[n] < q - self.delta {
                    -gv / area
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Envelope of the Hessian over the unknowns (column-major node order).
    pub fn hessian_pattern(&self) -> Vec<usize> {
        let g = self.grid;
        g.unknowns()
            .iter()
            .enumerate()
            .map(|(k, &n)| {
                let (i, j) = g.coords(n);
                let mut first = k;
                let mut consider = |ii: usize, jj: usize| {
                    if let Some(u) = g.unknown_of(g.node(ii, jj)) {
                        first = first.min(u);
                    }
                };
                if i > 0 {
                    consider(i - 1, j);
                    if j > 0 {
                        consider(i - 1, j - 1);
                    }
                }
                if j > 0 {
                    consider(i, j - 1);
                }
                first
            })
            .collect()
    }

    /// Hessian model: the second variation of the G term in the gradient
    /// (with the d_t g part clipped at zero) plus the indicator curvature,
    /// either exact or clipped to its convex part. Returns the diagonal of
    /// the G part per unknown.
    pub fn assemble_hessian(&self, psi: &[f64], m: &mut SkylineMatrix, exact_indicator: bool) -> Vec<f64> {
        m.clear();
        let g = self.grid;
        let h = g.h;
        let ny = g.ny;
        let q = self.tables.constants().q;
        let lam2 = self.lambda_eps * self.lambda_eps;
        let blocks: Vec<([[[f64; 3]; 3]; 2], [[f64; 3]; 2])> = self
            .cells
            .par_iter()
            .with_min_len(512)
            .map(|&base| {
                let j = base % ny;
                let ym = (j as f64 + 0.5) * h;
                let w = 0.5 * h * h * ym;
                let mut out = [[[0.0; 3]; 3]; 2];
                let mut diag = [[0.0; 3]; 2];
                for (tri, geo) in TRIANGLES.iter().enumerate() {
                    let (mut px, mut py, mut z) = (0.0, 0.0, 0.0);
                    for &(di, dj, gx, gy) in geo {
                        let v = psi[base + di * ny + dj];
                        px += gx * v;
                        py += gy * v;
                        z += v;
                    }
                    px /= h;
                    py /= h;
                    z /= 3.0;
                    let t = (px * px + py * py) / (ym * ym);
                    let e = self.tables.energy_terms(t, z);
                    let iso = e.g_eps / (ym * ym * h * h);
                    let aniso = 2.0 * e.dt_g_eps.max(0.0) / (ym.powi(4) * h * h);
                    let chi2 = if lam2 > 0.0 {
                        let c = indicator(z, q, self.delta).2;
                        lam2 * if exact_indicator { c } else { c.max(0.0) } / 9.0
                    } else {
                        0.0
                    };
                    for (a, &(_, _, ax, ay)) in geo.iter().enumerate() {
                        let pa = px * ax + py * ay;
                        for (b, &(_, _, bx, by)) in geo.iter().enumerate() {
                            let pb = px * bx + py * by;
                            out[tri][a][b] = w * (iso * (ax * bx + ay * by) + aniso * pa * pb + chi2);
                        }
                        diag[tri][a] = w * (iso * (ax * ax + ay * ay) + aniso * pa * pa);
                    }
                }
                (out, diag)
            })
            .collect();
        let mut g_diag = vec![0.0; m.dim()];
        for ((blk, diag), &base) in blocks.iter().zip(&self.cells) {
            for (tri, geo) in TRIANGLES.iter().enumerate() {
                for (a, &(dia, dja, _, _)) in geo.iter().enumerate() {
                    let Some(ua) = g.unknown_of(base + dia * ny + dja) else { continue };
                    g_diag[ua] += diag[tri][a];
                    for (b, &(dib, djb, _, _)) in geo.iter().enumerate().take(a + 1) {
                        let Some(ub) = g.unknown_of(base + dib * ny + djb) else { continue };
                        m.add(ua, ub, blk[tri][a][b]);
                    }
                }
            }
        }
        g_diag
    }

    /// Diagonal of the convexified Hessian at every grid node, used by the
    /// pointwise relaxation. Entry n is the second derivative in psi_n.
    pub fn local_curvature(&self, psi: &[f64], node: usize) -> f64 {
        let g = self.grid;
        let (i, j) = g.coords(node);
        let mut acc = 0.0;
        let h = g.h;
        let q = self.tables.constants().q;
        let lam2 = self.lambda_eps * self.lambda_eps;
        for ci in [i.wrapping_sub(1), i] {
            for cj in [j.wrapping_sub(1), j] {
                if ci >= g.nx - 1 || cj >= g.ny - 1 {
                    continue;
                }
                let base = g.node(ci, cj);
                let ym = (cj as f64 + 0.5) * h;
                let w = 0.5 * h * h * ym;
                for geo in TRIANGLES.iter() {
                    let Some(a) = geo.iter().position(|&(di, dj, _, _)| ci + di == i && cj + dj == j) else {
                        continue;
                    };
                    let (mut px, mut py, mut z) = (0.0, 0.0, 0.0);
                    for &(di, dj, gx, gy) in geo {
                        let v = psi[base + di * g.ny + dj];
                        px += gx * v;
                        py += gy * v;
                        z += v;
                    }
                    px /= h;
                    py /= h;
                    z /= 3.0;
                    let t = (px * px + py * py) / (ym * ym);
                    let e = self.tables.energy_terms(t, z);
                    let (_, _, ax, ay) = geo[a];
                    let pa = px * ax + py * ay;
                    let chi2 = if lam2 > 0.0 { lam2 * indicator(z, q, self.delta).2.max(0.0) / 9.0 } else { 0.0 };
                    acc += w
                        * (e.g_eps * (ax * ax + ay * ay) / (ym * ym * h * h)
                            + 2.0 * e.dt_g_eps.max(0.0) * pa * pa / (ym.powi(4) * h * h)
                            + chi2);
                }
            }
        }
        acc
    }

    /// Contributions of the triangles around `node` to the energy gradient in
    /// psi_node, for pointwise relaxation.
    pub fn local_gradient(&self, psi: &[f64], node: usize) -> f64 {
        let g = self.grid;
        let (i, j) = g.coords(node);
        let mut acc = 0.0;
        for ci in [i.wrapping_sub(1), i] {
            for cj in [j.wrapping_sub(1), j] {
                if ci >= g.nx - 1 || cj >= g.ny - 1 {
                    continue;
                }
                let base = g.node(ci, cj);
                for (tri, geo) in TRIANGLES.iter().enumerate() {
                    if let Some(a) = geo.iter().position(|&(di, dj, _, _)| ci + di == i && cj + dj == j) {
                        acc += self.triangle(psi, base, tri, true).grad[a];
                    }
                }
            }
        }
        acc
    }

    /// Energy of the triangles around `node` (for pointwise line searches).
    pub fn local_energy(&self, psi: &[f64], node: usize) -> f64 {
        let g = self.grid;
        let (i, j) = g.coords(node);
        let mut acc = 0.0;
        for ci in [i.wrapping_sub(1), i] {
            for cj in [j.wrapping_sub(1), j] {
                if ci >= g.nx - 1 || cj >= g.ny - 1 {
                    continue;
                }
                let base = g.node(ci, cj);
                for (tri, geo) in TRIANGLES.iter().enumerate() {
                    if geo.iter().any(|&(di, dj, _, _)| ci + di == i && cj + dj == j) {
                        acc += self.triangle(psi, base, tri, false).energy;
                    }
                }
            }
        }
        acc
    }
}

/// Applies the discrete EL operator to the horizontal extension of a radial
/// profile on rows 0..=top_row and returns the residual at rows 1..top_row.
pub fn radial_operator<F: Fn(f64) -> f64>(tables: &FlowTables, h: f64, top_row: usize, profile: F) -> Vec<f64> {
    let height = top_row as f64 * h;
    let grid = DomainGrid::rectangle(height, h, h, h).expect("strip grid");
    let psi: Vec<f64> = (0..grid.len()).map(|n| profile(grid.y(grid.coords(n).1))).collect();
    // Large delta keeps every row below Q - delta out of the indicator ramp; the
    // residual ignores the indicator anyway.
    let e = DiscreteEnergy::new(&grid, tables, 0.0, 1e-300);
    let res = e.el_residual(&psi).expect("finite profile");
    (1..top_row).map(|j| res[grid.node(1, j)]).collect()
}
