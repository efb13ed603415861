//! Exact integration of CPA velocity fields.
//!
//! Inside a cell the field is affine, `v(x) = a x + b`, and the flow is
//! `psi(x, t) = x + t (a x + b) (e^{ta} - 1) / (ta)`. A trajectory is followed
//! cell by cell: compute the time needed to reach the exit vertex, and either
//! finish inside the cell or move to the neighbour with the remaining time.
//!
//! Trajectories that reach the outer boundary of the domain stop there, so
//! every result lies in the domain.

use rayon::prelude::*;
use smallvec::SmallVec;

use crate::basis::AffineField;
use crate::error::{DifwError, Result};
use crate::sampler;
use crate::special::{expm1_ratio, log1p_ratio};
use crate::tessellation::{Direction, Tessellation};

/// Slopes with `|a| <= SLOPE_THRESHOLD` use the zero-slope limit formulas.
pub const SLOPE_THRESHOLD: f64 = 1e-10;

/// A completed pass through one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub cell: usize,
    /// Point where the trajectory entered the cell.
    pub entry: f64,
    /// Vertex through which it left.
    pub exit: f64,
    pub hit_time: f64,
}

/// Record of a trajectory, enough to evaluate its parameter gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct TraversalTrace {
    pub crossings: SmallVec<[Crossing; 4]>,
    /// Cell in which integration finished.
    pub final_cell: usize,
    /// Entry point of the final cell.
    pub x_final: f64,
    /// Time left when the final cell was entered.
    pub t_final: f64,
    /// Requested integration time.
    pub t_total: f64,
    /// The trajectory reached the outer boundary and stopped there.
    pub pinned: bool,
}

impl TraversalTrace {
    /// Number of visited cells.
    pub fn n_visited(&self) -> usize {
        self.crossings.len() + usize::from(!self.pinned)
    }

    pub fn visited_cells(&self) -> Vec<usize> {
        let mut cells: Vec<usize> = self.crossings.iter().map(|c| c.cell).collect();
        if !self.pinned {
            cells.push(self.final_cell);
        }
        cells
    }
}

/// Warped points together with the traces that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    pub phi: Vec<f64>,
    pub traces: Vec<TraversalTrace>,
}

/// `a_c x + b_c` for the cell containing `x`.
pub fn velocity_at(field: &AffineField, tess: &Tessellation, x: f64) -> Result<f64> {
    check_field(field, tess)?;
    let c = tess.cell_index(x)?;
    let (a, b) = field.cell(c);
    Ok(a * x + b)
}

/// Time for the affine flow `a x + b` started at `x` to reach `x_c`.
///
/// Returns `+inf` when the velocity vanishes at `x` or changes sign before
/// `x_c` (the trajectory converges to a fixed point instead).
pub fn hitting_time(a: f64, b: f64, x: f64, x_c: f64) -> f64 {
    let u = x_c - x;
    if u == 0.0 {
        return 0.0;
    }
    if a.abs() <= SLOPE_THRESHOLD {
        let t = u / b;
        return if t >= 0.0 { t } else { f64::INFINITY };
    }
    let w = a * x + b;
    if w == 0.0 || u / w < 0.0 {
        return f64::INFINITY;
    }
    let r = a * u / w;
    if r <= -1.0 {
        return f64::INFINITY;
    }
    (u / w) * log1p_ratio(r)
}

/// Flow of `a x + b` for time `t` started at `x`.
#[inline]
pub fn psi(a: f64, b: f64, x: f64, t: f64) -> f64 {
    if a.abs() <= SLOPE_THRESHOLD {
        x + t * b
    } else {
        x + t * (a * x + b) * expm1_ratio(t * a)
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(DifwError::invalid(format!(
            "integration time must be finite and nonnegative, got {t}"
        )));
    }
    Ok(())
}

fn check_field(field: &AffineField, tess: &Tessellation) -> Result<()> {
    if field.n_cells() != tess.n_cells() {
        return Err(DifwError::invalid(format!(
            "field has {} cells, tessellation has {}",
            field.n_cells(),
            tess.n_cells()
        )));
    }
    Ok(())
}

/// Integrates the flow from `x` for time `t`, returning the end point and
/// the traversal trace.
pub fn integrate(
    tess: &Tessellation,
    field: &AffineField,
    x: f64,
    t: f64,
) -> Result<(f64, TraversalTrace)> {
    check_field(field, tess)?;
    check_time(t)?;
    let c1 = tess.cell_index(x)?;
    Ok(integrate_from::<true>(tess, field, x, t, c1))
}

/// The cell-by-cell walk. With `RECORD = false` the crossings are not
/// stored; the arithmetic, and so the end point, is identical.
fn integrate_from<const RECORD: bool>(
    tess: &Tessellation,
    field: &AffineField,
    x0: f64,
    t_total: f64,
    c1: usize,
) -> (f64, TraversalTrace) {
    let n = tess.n_cells();
    let vertices = tess.vertices();
    let mut crossings: SmallVec<[Crossing; 4]> = SmallVec::new();
    let mut c = c1;
    let mut x = x0;
    let mut t = t_total;
    let mut heading: Option<Direction> = None;

    loop {
        let (a, b) = field.cell(c);
        let v = a * x + b;
        let dir = Direction::of_velocity(v);
        let stalled = v == 0.0 || heading.is_some_and(|h| h != dir);
        if stalled {
            // stationary point, or the velocity at a vertex lost its sign to rounding
            let trace = TraversalTrace {
                crossings,
                final_cell: c,
                x_final: x,
                t_final: t,
                t_total,
                pinned: false,
            };
            return (x, trace);
        }
        let x_c = match dir {
            Direction::Forward => vertices[c + 1],
            Direction::Backward => vertices[c],
        };
        let t_hit = hitting_time(a, b, x, x_c);
        if t_hit > t {
            let (lo, hi) = (vertices[c], vertices[c + 1]);
            let phi = psi(a, b, x, t).clamp(lo, hi);
            let trace = TraversalTrace {
                crossings,
                final_cell: c,
                x_final: x,
                t_final: t,
                t_total,
                pinned: false,
            };
            return (phi, trace);
        }
        if RECORD {
            crossings.push(Crossing {
                cell: c,
                entry: x,
                exit: x_c,
                hit_time: t_hit,
            });
        }
        t -= t_hit;
        x = x_c;
        let next = match dir {
            Direction::Forward if c + 1 < n => Some(c + 1),
            Direction::Backward if c > 0 => Some(c - 1),
            _ => None,
        };
        match next {
            Some(nc) => {
                c = nc;
                heading = Some(dir);
            }
            None => {
                let trace = TraversalTrace {
                    crossings,
                    final_cell: c,
                    x_final: x,
                    t_final: t,
                    t_total,
                    pinned: true,
                };
                return (x, trace);
            }
        }
        debug_assert!(!RECORD || crossings.len() <= (c1 + 1).max(n - c1));
    }
}

/// Largest number of visited cells for a trajectory starting in cell `c1`.
pub fn max_visited_cells(n_cells: usize, c1: usize) -> usize {
    (c1 + 1).max(n_cells - c1)
}

/// [`integrate`] over many points. Results do not depend on how the work is
/// scheduled across threads.
pub fn integrate_grid(
    tess: &Tessellation,
    field: &AffineField,
    points: &[f64],
    t: f64,
) -> Result<WarpResult> {
    check_field(field, tess)?;
    let results: Vec<(f64, TraversalTrace)> = points
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let (phi, trace) =
                integrate(tess, field, x, t).map_err(|e| DifwError::at_point(i, e))?;
            if trace.n_visited() > max_visited_cells(tess.n_cells(), first_cell(&trace)) {
                return Err(DifwError::at_point(
                    i,
                    DifwError::Internal(format!(
                        "trajectory from {x} visited {} cells, more than the traversal bound",
                        trace.n_visited()
                    )),
                ));
            }
            Ok((phi, trace))
        })
        .collect::<Result<_>>()?;
    let (phi, traces) = results.into_iter().unzip();
    Ok(WarpResult { phi, traces })
}

fn first_cell(trace: &TraversalTrace) -> usize {
    trace
        .crossings
        .first()
        .map(|c| c.cell)
        .unwrap_or(trace.final_cell)
}

/// End points only, without traces; bitwise equal to the `phi` of
/// [`integrate_grid`].
pub fn transform_points(
    tess: &Tessellation,
    field: &AffineField,
    points: &[f64],
    t: f64,
) -> Result<Vec<f64>> {
    check_field(field, tess)?;
    check_time(t)?;
    points
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let c1 = tess.cell_index(x).map_err(|e| DifwError::at_point(i, e))?;
            Ok(integrate_from::<false>(tess, field, x, t, c1).0)
        })
        .collect()
}

/// Approximates the time-`t` flow on a uniform `grid` by integrating exactly
/// to `t / 2^n` and composing the result with itself `n` times through
/// piecewise-linear interpolation.
pub fn scaling_squaring(
    tess: &Tessellation,
    field: &AffineField,
    grid: &[f64],
    t: f64,
    n_squarings: u32,
) -> Result<Vec<f64>> {
    if grid.is_empty() {
        return Err(DifwError::invalid("scaling-and-squaring needs a nonempty grid"));
    }
    let scaled = t / 2f64.powi(n_squarings as i32);
    let mut values = transform_points(tess, field, grid, scaled)?;
    if n_squarings > 0 && grid.len() < 2 {
        return Err(DifwError::invalid(
            "self-composition needs a grid with at least two points",
        ));
    }
    for _ in 0..n_squarings {
        values = sampler::compose_values(grid, &values)?;
    }
    Ok(values)
}
