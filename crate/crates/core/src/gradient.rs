//! Closed-form parameter gradient of the integrated flow.
//!
//! For a trace with crossings `(c_i, x_i, x_{c_i})` and final state
//! `(c_m, x_m, t_m)`:
//!
//! ```text
//! dphi/dtheta_k = dpsi/da a_m^(k) + dpsi/db b_m^(k)
//!               - dpsi/dt * sum_i (dthit_i/da a_i^(k) + dthit_i/db b_i^(k))
//! ```
//!
//! All partials are evaluated with the same stable forms and slope threshold
//! as the integrator, so the two agree across the zero-slope seam.

use rayon::prelude::*;

use crate::basis::{AffineField, CpaBasis};
use crate::error::{DifwError, Result};
use crate::integrator::{self, TraversalTrace, WarpResult, SLOPE_THRESHOLD};
use crate::sampler;
use crate::special::{expm1_ratio, expm1_ratio_derivative, log1p_defect_ratio};

/// Row-major `n_points x dim` Jacobian of warped points with respect to theta.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix {
    n_points: usize,
    dim: usize,
    data: Vec<f64>,
}

impl GradientMatrix {
    pub fn zeros(n_points: usize, dim: usize) -> Self {
        Self {
            n_points,
            dim,
            data: vec![0.0; n_points * dim],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if let Some(p) = rows.iter().position(|r| r.len() != dim) {
            return Err(DifwError::invalid(format!(
                "gradient row {p} has length {}, expected {dim}",
                rows[p].len()
            )));
        }
        let n_points = rows.len();
        Ok(Self {
            n_points,
            dim,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    pub fn get(&self, p: usize, k: usize) -> f64 {
        self.data[p * self.dim + k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_points).map(|p| self.row(p).to_vec()).collect()
    }

    /// `J^T v`, the pullback of a per-point cotangent.
    pub fn transpose_times(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (p, &vp) in v.iter().enumerate().take(self.n_points) {
            if vp == 0.0 {
                continue;
            }
            for (o, g) in out.iter_mut().zip(self.row(p)) {
                *o += vp * g;
            }
        }
        out
    }
}

/// Partial derivatives of `psi(a, b, x, t)` with respect to `a`, `b` and `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPartials {
    pub da: f64,
    pub db: f64,
    pub dt: f64,
}

pub fn flow_partials(a: f64, b: f64, x: f64, t: f64) -> FlowPartials {
    if a.abs() <= SLOPE_THRESHOLD {
        return FlowPartials {
            da: t * x + 0.5 * b * t * t,
            db: t,
            dt: b,
        };
    }
    let z = t * a;
    let ez = z.exp();
    FlowPartials {
        da: t * x * ez + b * t * t * expm1_ratio_derivative(z),
        db: t * expm1_ratio(z),
        dt: ez * (a * x + b),
    }
}

/// Partial derivatives of the hitting time from `x` to `x_c` with respect to
/// `a` and `b`.
pub fn hitting_time_partials(a: f64, b: f64, x: f64, x_c: f64) -> (f64, f64) {
    let u = x_c - x;
    if u == 0.0 {
        return (0.0, 0.0);
    }
    let (w, r) = if a.abs() <= SLOPE_THRESHOLD {
        (b, 0.0)
    } else {
        let w = a * x + b;
        (w, a * u / w)
    };
    let w2 = w * w;
    let da = -u * u * log1p_defect_ratio(r) / w2 - u * x / (w2 * (1.0 + r));
    let db = -u / (w2 * (1.0 + r));
    (da, db)
}

fn check_basis_field(basis: &CpaBasis, field: &AffineField) -> Result<()> {
    let n = basis.tessellation().n_cells();
    if field.n_cells() != n {
        return Err(DifwError::invalid(format!(
            "field has {} cells, basis has {n}",
            field.n_cells()
        )));
    }
    Ok(())
}

/// Gradient of the end point of `trace` with respect to theta.
pub fn grad_point(basis: &CpaBasis, field: &AffineField, trace: &TraversalTrace) -> Result<Vec<f64>> {
    check_basis_field(basis, field)?;
    let n = field.n_cells();
    if trace.final_cell >= n || trace.crossings.iter().any(|c| c.cell >= n) {
        return Err(DifwError::invalid("trace refers to cells outside the basis tessellation"));
    }
    let d = basis.dim();
    let mut row = vec![0.0; d];
    if trace.pinned {
        return Ok(row);
    }
    let (a, b) = field.cell(trace.final_cell);
    let fp = flow_partials(a, b, trace.x_final, trace.t_final);
    // (cell, coefficient of a_c^(k), coefficient of b_c^(k))
    let mut terms: smallvec::SmallVec<[(usize, f64, f64); 8]> = smallvec::SmallVec::new();
    terms.push((trace.final_cell, fp.da, fp.db));
    for c in &trace.crossings {
        let (ac, bc) = field.cell(c.cell);
        let (ta, tb) = hitting_time_partials(ac, bc, c.entry, c.exit);
        terms.push((c.cell, -fp.dt * ta, -fp.dt * tb));
    }
    for (k, g) in row.iter_mut().enumerate() {
        *g = terms
            .iter()
            .map(|&(c, ca, cb)| {
                let (ak, bk) = basis.cell_rows(c, k);
                ca * ak + cb * bk
            })
            .sum();
    }
    Ok(row)
}

/// [`grad_point`] for every trace in `result`.
pub fn grad_grid(basis: &CpaBasis, field: &AffineField, result: &WarpResult) -> Result<GradientMatrix> {
    check_basis_field(basis, field)?;
    let rows: Vec<Vec<f64>> = result
        .traces
        .par_iter()
        .enumerate()
        .map(|(p, tr)| grad_point(basis, field, tr).map_err(|e| DifwError::at_point(p, e)))
        .collect::<Result<_>>()?;
    GradientMatrix::from_rows(rows, basis.dim())
}

/// Scaling-and-squaring approximation on `grid` together with its exact
/// Jacobian with respect to theta.
pub fn scaling_squaring_with_grad(
    basis: &CpaBasis,
    field: &AffineField,
    grid: &[f64],
    t: f64,
    n_squarings: u32,
) -> Result<(Vec<f64>, GradientMatrix)> {
    if grid.is_empty() {
        return Err(DifwError::invalid("scaling-and-squaring needs a nonempty grid"));
    }
    if n_squarings > 0 && grid.len() < 2 {
        return Err(DifwError::invalid(
            "self-composition needs a grid with at least two points",
        ));
    }
    let tess = basis.tessellation();
    let scaled = t / 2f64.powi(n_squarings as i32);
    let base = integrator::integrate_grid(tess, field, grid, scaled)?;
    let jac = grad_grid(basis, field, &base)?;
    let mut values = base.phi;
    if n_squarings == 0 {
        return Ok((values, jac));
    }
    let dim = jac.dim();
    let mut rows = jac.to_rows();
    for _ in 0..n_squarings {
        let (next, dj) = sampler::self_compose(grid, &values)?;
        rows = dj.apply_rows(&rows);
        values = next;
    }
    Ok((values, GradientMatrix::from_rows(rows, dim)?))
}

/// Jacobian of [`integrator::scaling_squaring`] with respect to theta.
pub fn grad_scaling_squaring(
    basis: &CpaBasis,
    field: &AffineField,
    grid: &[f64],
    t: f64,
    n_squarings: u32,
) -> Result<GradientMatrix> {
    Ok(scaling_squaring_with_grad(basis, field, grid, t, n_squarings)?.1)
}
