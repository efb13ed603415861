//! Independent numeric references: fixed-step ODE solvers and finite
//! differences, plus the precision and speed comparisons built on them.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{AffineField, BasisMethod, CpaBasis};
use crate::dd::Dd;
use crate::error::{DifwError, Result};
use crate::gradient::grad_grid;
use crate::integrator::{integrate_grid, transform_points};
use crate::prior::PriorCovariance;
use crate::tessellation::Tessellation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OdeMethod {
    #[default]
    Rk4,
    Euler,
}

impl fmt::Display for OdeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OdeMethod::Rk4 => "rk4",
            OdeMethod::Euler => "euler",
        })
    }
}

impl FromStr for OdeMethod {
    type Err = DifwError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rk4" => Ok(OdeMethod::Rk4),
            "euler" => Ok(OdeMethod::Euler),
            other => Err(DifwError::invalid(format!(
                "unknown ODE method '{other}' (expected rk4 or euler)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: OdeMethod,
    pub n_steps: usize,
    /// Take whole steps through the cached per-cell step map whenever every
    /// stage of the step stays inside one cell. The result is the same
    /// method up to rounding; it just skips redundant velocity lookups.
    pub cell_step_cache: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: OdeMethod::Rk4,
            n_steps: 100_000,
            cell_step_cache: true,
        }
    }
}

/// Fixed-step solver for `x' = v(x)` on one field, clamped to the domain.
#[derive(Debug, Clone)]
pub struct OdeSolver<'a> {
    tess: &'a Tessellation,
    field: &'a AffineField,
    config: SolverConfig,
    h: f64,
    /// Per-cell one-step map `x -> alpha x + beta`, valid while all stages
    /// stay in the cell.
    step_map: Vec<(f64, f64)>,
    /// Distance from the cell edges beyond which every stage stays inside.
    margin: f64,
}

impl<'a> OdeSolver<'a> {
    pub fn new(tess: &'a Tessellation, field: &'a AffineField, t: f64, config: SolverConfig) -> Result<Self> {
        if field.n_cells() != tess.n_cells() {
            return Err(DifwError::invalid(format!(
                "field has {} cells, tessellation has {}",
                field.n_cells(),
                tess.n_cells()
            )));
        }
        if config.n_steps == 0 {
            return Err(DifwError::invalid("the ODE solver needs at least one step"));
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(DifwError::invalid(format!(
                "integration time must be finite and nonnegative, got {t}"
            )));
        }
        let h = t / config.n_steps as f64;
        let step_map = (0..field.n_cells())
            .map(|c| {
                let (a, b) = field.cell(c);
                let z = h * a;
                // one step applied to an affine field is x + h P(ha) (a x + b)
                let p = match config.method {
                    OdeMethod::Euler => 1.0,
                    OdeMethod::Rk4 => 1.0 + z * (0.5 + z * (1.0 / 6.0 + z / 24.0)),
                };
                (1.0 + z * p, h * b * p)
            })
            .collect();
        let v_max = tess
            .vertices()
            .iter()
            .enumerate()
            .flat_map(|(j, &x)| {
                let left = j.checked_sub(1).map(|c| field.cell(c));
                let right = (j < field.n_cells()).then(|| field.cell(j));
                left.into_iter().chain(right).map(move |(a, b)| (a * x + b).abs())
            })
            .fold(0.0, f64::max);
        // stages lie within h * v_max of the current point; pad for rounding
        let margin = 1.5 * h * v_max + 8.0 * f64::EPSILON;
        Ok(Self {
            tess,
            field,
            config,
            h,
            step_map,
            margin,
        })
    }

    #[inline]
    fn velocity(&self, x: f64) -> f64 {
        let (a, b) = self.field.cell(self.tess.cell_index_unchecked(x));
        a * x + b
    }

    #[inline]
    fn generic_step(&self, x: f64) -> f64 {
        let h = self.h;
        let next = match self.config.method {
            OdeMethod::Euler => x + h * self.velocity(x),
            OdeMethod::Rk4 => {
                let k1 = self.velocity(x);
                let k2 = self.velocity(x + 0.5 * h * k1);
                let k3 = self.velocity(x + 0.5 * h * k2);
                let k4 = self.velocity(x + h * k3);
                x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            }
        };
        let d = self.tess.domain();
        next.clamp(d.x_min, d.x_max)
    }

    /// Integrates from `x` for the configured time.
    pub fn solve(&self, x: f64) -> f64 {
        if self.h == 0.0 {
            return x;
        }
        let mut x = x;
        if !self.config.cell_step_cache {
            for _ in 0..self.config.n_steps {
                x = self.generic_step(x);
            }
            return x;
        }
        let vertices = self.tess.vertices();
        let mut remaining = self.config.n_steps;
        while remaining > 0 {
            let c = self.tess.cell_index_unchecked(x);
            let lo = vertices[c] + self.margin;
            let hi = vertices[c + 1] - self.margin;
            let (alpha, beta) = self.step_map[c];
            while remaining > 0 && x > lo && x < hi {
                x = alpha * x + beta;
                remaining -= 1;
            }
            if remaining > 0 {
                x = self.generic_step(x);
                remaining -= 1;
            }
        }
        x
    }
}

impl OdeSolver<'_> {
    /// [`OdeSolver::solve`] for many points. With the step cache, points are
    /// advanced in lockstep groups so independent updates can overlap; each
    /// point still takes exactly the same steps as when solved alone.
    pub fn solve_many(&self, xs: &[f64]) -> Vec<f64> {
        const LANES: usize = 8;
        if !self.config.cell_step_cache || self.h == 0.0 {
            return xs.iter().map(|&x| self.solve(x)).collect();
        }
        let vertices = self.tess.vertices();
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(LANES) {
            let mut x = [0.0; LANES];
            let mut lo = [f64::NEG_INFINITY; LANES];
            let mut hi = [f64::INFINITY; LANES];
            let mut alpha = [1.0; LANES];
            let mut beta = [0.0; LANES];
            let lanes = chunk.len();
            let set_cell = |l: usize, x: &[f64; LANES], lo: &mut [f64; LANES], hi: &mut [f64; LANES], alpha: &mut [f64; LANES], beta: &mut [f64; LANES]| {
                let c = self.tess.cell_index_unchecked(x[l]);
                lo[l] = vertices[c] + self.margin;
                hi[l] = vertices[c + 1] - self.margin;
                (alpha[l], beta[l]) = self.step_map[c];
            };
            for l in 0..lanes {
                x[l] = chunk[l];
                set_cell(l, &x, &mut lo, &mut hi, &mut alpha, &mut beta);
            }
            for _ in 0..self.config.n_steps {
                let mut all_safe = true;
                for l in 0..LANES {
                    all_safe &= x[l] > lo[l] && x[l] < hi[l];
                }
                if all_safe {
                    for l in 0..LANES {
                        x[l] = alpha[l] * x[l] + beta[l];
                    }
                    continue;
                }
                for l in 0..lanes {
                    if x[l] > lo[l] && x[l] < hi[l] {
                        x[l] = alpha[l] * x[l] + beta[l];
                    } else {
                        x[l] = self.generic_step(x[l]);
                        set_cell(l, &x, &mut lo, &mut hi, &mut alpha, &mut beta);
                    }
                }
            }
            out.extend_from_slice(&x[..lanes]);
        }
        out
    }
}

/// RK4 with `n_steps` plain steps (no step cache).
pub fn ode_solve(field: &AffineField, tess: &Tessellation, x: f64, t: f64, n_steps: usize) -> Result<f64> {
    let config = SolverConfig {
        method: OdeMethod::Rk4,
        n_steps,
        cell_step_cache: false,
    };
    ode_solve_with(field, tess, x, t, config)
}

pub fn ode_solve_with(
    field: &AffineField,
    tess: &Tessellation,
    x: f64,
    t: f64,
    config: SolverConfig,
) -> Result<f64> {
    Ok(OdeSolver::new(tess, field, t, config)?.solve(x))
}

/// Central-difference Jacobian of a map from fields to point values, one
/// row per point.
pub fn finite_diff_jacobian<F>(basis: &CpaBasis, theta: &[f64], h: f64, eval: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&AffineField) -> Result<Vec<f64>>,
{
    if !(h > 0.0) {
        return Err(DifwError::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    let d = theta.len();
    let mut cols = Vec::with_capacity(d);
    for k in 0..d {
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[k] += h;
        tm[k] -= h;
        let fp = eval(&basis.theta_to_field(&tp)?)?;
        let fm = eval(&basis.theta_to_field(&tm)?)?;
        cols.push(
            fp.iter()
                .zip(&fm)
                .map(|(p, m)| (p - m) / (2.0 * h))
                .collect::<Vec<f64>>(),
        );
    }
    let n = cols.first().map_or(0, Vec::len);
    Ok((0..n).map(|p| cols.iter().map(|c| c[p]).collect()).collect())
}

/// Central differences of the exact flow at one point.
pub fn finite_diff_grad(basis: &CpaBasis, theta: &[f64], x: f64, t: f64, h: f64) -> Result<Vec<f64>> {
    let tess = basis.tessellation();
    let rows = finite_diff_jacobian(basis, theta, h, |f| Ok(integrate_grid(tess, f, &[x], t)?.phi))?;
    Ok(rows.into_iter().next().unwrap_or_else(|| vec![0.0; theta.len()]))
}

/// Per-cell `(a, b)` of `B θ` in double-double, with `θ_k` shifted by `shift`.
fn field_dd(basis: &CpaBasis, theta: &[f64], k: usize, shift: f64) -> Vec<(Dd, Dd)> {
    let theta: Vec<Dd> = theta
        .iter()
        .enumerate()
        .map(|(j, &v)| if j == k { Dd::sum(v, shift) } else { Dd::new(v) })
        .collect();
    let m = basis.matrix();
    let coeff = |row: usize| {
        theta
            .iter()
            .enumerate()
            .fold(Dd::ZERO, |acc, (j, &v)| acc + v.mul_f64(m[(row, j)]))
    };
    (0..basis.tessellation().n_cells())
        .map(|c| (coeff(2 * c), coeff(2 * c + 1)))
        .collect()
}

/// `φ(x) − x` traced cell by cell in double-double arithmetic, with the same
/// stalling and pinning rules as the closed-form integrator.
fn displacement_dd(tess: &Tessellation, cells: &[(Dd, Dd)], x0: f64, t: f64) -> Result<Dd> {
    let vertices = tess.vertices();
    let n = tess.n_cells();
    let mut c = tess.cell_index(x0)?;
    let start = Dd::new(x0);
    let mut x = start;
    let mut t = Dd::new(t);
    let mut heading = None;
    loop {
        let (a, b) = cells[c];
        let w = a * x + b;
        let forward = w.hi > 0.0;
        if w.is_zero() || heading.is_some_and(|h| h != forward) {
            return Ok(x - start);
        }
        let x_c = Dd::new(if forward { vertices[c + 1] } else { vertices[c] });
        let u = x_c - x;
        let t_hit = if u.is_zero() {
            Some(Dd::ZERO)
        } else if a.is_zero() {
            Some(u / b)
        } else {
            let r = a * u / w;
            (r.hi > -1.0).then(|| u / w * (r.ln_1p() / r))
        };
        match t_hit {
            Some(th) if th <= t => {
                t = t - th;
                x = x_c;
                let next = if forward { (c + 1 < n).then(|| c + 1) } else { c.checked_sub(1) };
                match next {
                    Some(nc) => {
                        c = nc;
                        heading = Some(forward);
                    }
                    None => return Ok(x - start),
                }
            }
            _ => {
                let ta = t * a;
                let step = if ta.is_zero() { t * b } else { t * w * (ta.exp_m1() / ta) };
                let (lo, hi) = (Dd::new(vertices[c]), Dd::new(vertices[c + 1]));
                let mut end = x + step;
                if end < lo {
                    end = lo;
                } else if end > hi {
                    end = hi;
                }
                return Ok(end - start);
            }
        }
    }
}

/// Central-difference Jacobian of the exact flow at `points`, with every
/// flow evaluated in double-double so that the quotient carries no
/// cancellation noise. One row per point.
pub fn reference_fd_jacobian(
    basis: &CpaBasis,
    theta: &[f64],
    points: &[f64],
    t: f64,
    h: f64,
) -> Result<Vec<Vec<f64>>> {
    if !(h > 0.0) {
        return Err(DifwError::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    if theta.len() != basis.dim() {
        return Err(DifwError::invalid(format!(
            "theta has length {}, basis dimension is {}",
            theta.len(),
            basis.dim()
        )));
    }
    let tess = basis.tessellation();
    let two_h = Dd::new(2.0 * h);
    let mut rows = vec![vec![0.0; theta.len()]; points.len()];
    for k in 0..theta.len() {
        let plus = field_dd(basis, theta, k, h);
        let minus = field_dd(basis, theta, k, -h);
        for (row, &x) in rows.iter_mut().zip(points) {
            let d = displacement_dd(tess, &plus, x, t)? - displacement_dd(tess, &minus, x, t)?;
            row[k] = (d / two_h).to_f64();
        }
    }
    Ok(rows)
}

/// Relative deviation with an absolute floor for near-zero references.
pub fn relative_error(value: f64, reference: f64, abs_floor: f64) -> f64 {
    (value - reference).abs() / reference.abs().max(abs_floor)
}

/// Shared setup for the sweeps: a basis, its prior, and seeded draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldSweep {
    pub n_cells: usize,
    pub zero_boundary: bool,
    pub method: BasisMethod,
    pub lambda_sigma: f64,
    pub lambda_smooth: f64,
    pub seed: u64,
}

impl Default for FieldSweep {
    fn default() -> Self {
        Self {
            n_cells: 16,
            zero_boundary: false,
            method: BasisMethod::default(),
            lambda_sigma: 1e-2,
            lambda_smooth: 0.5,
            seed: 0,
        }
    }
}

impl FieldSweep {
    pub fn basis(&self) -> Result<CpaBasis> {
        CpaBasis::new(&Tessellation::unit(self.n_cells)?, self.zero_boundary, self.method)
    }

    /// `n` prior draws and their fields.
    pub fn draw(&self, basis: &CpaBasis, n: usize) -> Result<Vec<(Vec<f64>, AffineField)>> {
        let prior = PriorCovariance::new(basis, self.lambda_sigma, self.lambda_smooth)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..n)
            .map(|_| {
                let theta = prior.sample_with(&mut rng);
                let field = basis.theta_to_field(&theta)?;
                Ok((theta, field))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionConfig {
    pub sweep: FieldSweep,
    pub n_fields: usize,
    pub n_points: usize,
    pub t: f64,
    pub solver: SolverConfig,
    /// Step used to differentiate the numeric solver.
    pub fd_step: f64,
}

impl Default for PrecisionConfig {
    fn default() -> Self {
        Self {
            sweep: FieldSweep::default(),
            n_fields: 100,
            n_points: 1000,
            t: 1.0,
            solver: SolverConfig::default(),
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub integration: f64,
    pub gradient: Option<f64>,
}

/// Per-field max-abs deviations between the closed form and a numeric
/// method, and their means over fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub config: PrecisionConfig,
    pub integration_eps: Option<f64>,
    pub integration_max: Option<f64>,
    pub gradient_eps: Option<f64>,
    pub gradient_max: Option<f64>,
    pub per_field: Vec<FieldError>,
}

/// Compares closed-form values (and, if `with_gradient`, closed-form
/// gradients against finite differences of the numeric solver).
pub fn precision_report(config: &PrecisionConfig, with_gradient: bool) -> Result<PrecisionReport> {
    let basis = config.sweep.basis()?;
    let tess = basis.tessellation();
    let points = tess.domain().uniform_grid(config.n_points);
    let draws = config.sweep.draw(&basis, config.n_fields)?;
    let mut per_field = Vec::with_capacity(draws.len());
    for (theta, field) in &draws {
        let exact = integrate_grid(tess, field, &points, config.t)?;
        let solver = OdeSolver::new(tess, field, config.t, config.solver)?;
        let integration = exact
            .phi
            .iter()
            .zip(solver.solve_many(&points))
            .map(|(&e, n)| (e - n).abs())
            .fold(0.0, f64::max);
        let gradient = if with_gradient {
            let closed = grad_grid(&basis, field, &exact)?;
            let numeric = finite_diff_jacobian(&basis, theta, config.fd_step, |f| {
                let s = OdeSolver::new(tess, f, config.t, config.solver)?;
                Ok(s.solve_many(&points))
            })?;
            let mut worst: f64 = 0.0;
            for (p, row) in numeric.iter().enumerate() {
                for (g, n) in closed.row(p).iter().zip(row) {
                    worst = worst.max((g - n).abs());
                }
            }
            Some(worst)
        } else {
            None
        };
        per_field.push(FieldError {
            integration,
            gradient,
        });
    }
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let max = |v: &[f64]| v.iter().copied().reduce(f64::max);
    let ints: Vec<f64> = per_field.iter().map(|f| f.integration).collect();
    let grads: Vec<f64> = per_field.iter().filter_map(|f| f.gradient).collect();
    Ok(PrecisionReport {
        config: *config,
        integration_max: max(&ints),
        integration_eps: mean(ints),
        gradient_max: max(&grads),
        gradient_eps: mean(grads),
        per_field,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub sweep: FieldSweep,
    pub n_fields: usize,
    pub n_points: usize,
    pub t: f64,
    pub fd_step: f64,
    /// Denominator floor for near-zero reference entries.
    pub abs_floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            sweep: FieldSweep::default(),
            n_fields: 100,
            n_points: 100,
            t: 1.0,
            fd_step: 1e-6,
            abs_floor: 1e-9,
        }
    }
}

/// Entry-wise agreement between closed-form gradients and central
/// differences of the double-double reference flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub config: GradCheckConfig,
    pub dim: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub max_abs_err: f64,
    /// (field, point, coordinate) of the worst relative error.
    pub worst: Option<(usize, usize, usize)>,
}

pub fn grad_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    let basis = config.sweep.basis()?;
    let tess = basis.tessellation();
    let points = tess.domain().uniform_grid(config.n_points);
    let draws = config.sweep.draw(&basis, config.n_fields)?;
    let (mut max_rel, mut max_abs, mut sum, mut count) = (0.0f64, 0.0f64, 0.0, 0usize);
    let mut worst = None;
    for (i, (theta, field)) in draws.iter().enumerate() {
        let exact = integrate_grid(tess, field, &points, config.t)?;
        let closed = grad_grid(&basis, field, &exact)?;
        let numeric = reference_fd_jacobian(&basis, theta, &points, config.t, config.fd_step)?;
        for (p, row) in numeric.iter().enumerate() {
            for (k, (g, n)) in closed.row(p).iter().zip(row).enumerate() {
                let rel = relative_error(*g, *n, config.abs_floor);
                if rel > max_rel || worst.is_none() {
                    max_rel = max_rel.max(rel);
                    worst = Some((i, p, k));
                }
                max_abs = max_abs.max((g - n).abs());
                sum += rel;
                count += 1;
            }
        }
    }
    Ok(GradCheckReport {
        config: *config,
        dim: basis.dim(),
        max_rel_err: max_rel,
        mean_rel_err: if count == 0 { 0.0 } else { sum / count as f64 },
        max_abs_err: max_abs,
        worst,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedConfig {
    pub batch: usize,
    pub n_points: usize,
    pub n_cells: usize,
    pub repetitions: usize,
    /// Max-abs error the numeric solver is tuned to reach.
    pub target_accuracy: f64,
    /// Prior scale of the timed fields. Unit scale by default: near-identity
    /// fields let a single RK4 step meet the target, which times nothing.
    pub lambda_sigma: f64,
    pub lambda_smooth: f64,
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        Self {
            batch: 40,
            n_points: 1000,
            n_cells: 30,
            repetitions: 20,
            target_accuracy: 1e-5,
            lambda_sigma: 1.0,
            lambda_smooth: 0.5,
            fd_step: 1e-6,
            seed: 0,
        }
    }
}

/// Median wall-clock times in milliseconds for one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub config: SpeedConfig,
    pub closed_forward_ms: f64,
    /// Forward pass with traces plus the closed-form gradient.
    pub closed_backward_ms: f64,
    pub numeric_forward_ms: f64,
    /// Central differences of the closed-form forward pass, `2d` integrations.
    pub finite_difference_backward_ms: f64,
    pub numeric_steps: usize,
    pub numeric_error: f64,
    pub forward_speedup: f64,
    pub backward_speedup: f64,
}

fn median_ms<F: FnMut() -> Result<()>>(reps: usize, mut f: F) -> Result<f64> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f()?;
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let n = times.len();
    Ok(if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    })
}

/// Times the closed form against the RK4 solver and against finite
/// differences on a single worker thread.
pub fn speed_report(config: &SpeedConfig) -> Result<SpeedReport> {
    if config.repetitions == 0 || config.batch == 0 || config.n_points == 0 {
        return Err(DifwError::invalid("batch, points and repetitions must be positive"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| DifwError::Internal(format!("could not build worker pool: {e}")))?;
    pool.install(|| speed_report_inner(config))
}

fn speed_report_inner(config: &SpeedConfig) -> Result<SpeedReport> {
    let sweep = FieldSweep {
        n_cells: config.n_cells,
        zero_boundary: false,
        method: BasisMethod::default(),
        lambda_sigma: config.lambda_sigma,
        lambda_smooth: config.lambda_smooth,
        seed: config.seed,
    };
    let basis = sweep.basis()?;
    let tess = basis.tessellation();
    let points = tess.domain().uniform_grid(config.n_points);
    let draws = sweep.draw(&basis, config.batch)?;
    let exact: Vec<Vec<f64>> = draws
        .iter()
        .map(|(_, f)| Ok(integrate_grid(tess, f, &points, 1.0)?.phi))
        .collect::<Result<_>>()?;

    // smallest power-of-two step count reaching the target accuracy
    let mut numeric_steps = 1usize;
    let numeric_error = loop {
        let solver = SolverConfig {
            method: OdeMethod::Rk4,
            n_steps: numeric_steps,
            cell_step_cache: false,
        };
        let mut worst: f64 = 0.0;
        for ((_, f), e) in draws.iter().zip(&exact) {
            let s = OdeSolver::new(tess, f, 1.0, solver)?;
            for (&x, &ex) in points.iter().zip(e) {
                worst = worst.max((s.solve(x) - ex).abs());
            }
        }
        if worst <= config.target_accuracy {
            break worst;
        }
        if numeric_steps >= 1 << 20 {
            return Err(DifwError::Numeric(format!(
                "RK4 did not reach {} accuracy with {numeric_steps} steps",
                config.target_accuracy
            )));
        }
        numeric_steps *= 2;
    };
    let solver = SolverConfig {
        method: OdeMethod::Rk4,
        n_steps: numeric_steps,
        cell_step_cache: false,
    };

    let reps = config.repetitions;
    let mut sink = 0.0;
    let closed_forward_ms = median_ms(reps, || {
        for (_, f) in &draws {
            sink += transform_points(tess, f, &points, 1.0)?[0];
        }
        Ok(())
    })?;
    let closed_backward_ms = median_ms(reps, || {
        for (_, f) in &draws {
            let r = integrate_grid(tess, f, &points, 1.0)?;
            sink += grad_grid(&basis, f, &r)?.get(0, 0);
        }
        Ok(())
    })?;
    let numeric_forward_ms = median_ms(reps, || {
        for (_, f) in &draws {
            let s = OdeSolver::new(tess, f, 1.0, solver)?;
            for &x in &points {
                sink += s.solve(x);
            }
        }
        Ok(())
    })?;
    let finite_difference_backward_ms = median_ms(reps, || {
        for (theta, _) in &draws {
            let j = finite_diff_jacobian(&basis, theta, config.fd_step, |f| {
                Ok(integrate_grid(tess, f, &points, 1.0)?.phi)
            })?;
            sink += j[0][0];
        }
        Ok(())
    })?;
    std::hint::black_box(sink);
    Ok(SpeedReport {
        config: *config,
        closed_forward_ms,
        closed_backward_ms,
        numeric_forward_ms,
        finite_difference_backward_ms,
        numeric_steps,
        numeric_error,
        forward_speedup: numeric_forward_ms / closed_forward_ms,
        backward_speedup: finite_difference_backward_ms / closed_backward_ms,
    })
}
