//! Differentiable piecewise-linear interpolation.
//!
//! Queries outside the knot range clamp to the end values. A query exactly on
//! an interior knot uses the segment to its right; the last knot uses the
//! final segment.

use crate::error::{DifwError, Result};

/// Relative tolerance for detecting uniformly spaced knots.
const UNIFORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    x: Vec<f64>,
    y: Vec<f64>,
    /// `(x_0, 1/h)` when the knots are uniformly spaced.
    uniform: Option<(f64, f64)>,
}

/// Position of a query relative to the knots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    /// Left knot of the segment used.
    pub segment: usize,
    /// Relative position in the segment, in `[0, 1]`.
    pub lambda: f64,
    /// The query was outside the knot range and got clamped.
    pub clamped: bool,
}

/// Derivatives of one interpolated value. Sparse rows are `(index, value)`
/// pairs with at most two entries.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpGrad {
    pub value: f64,
    /// ∂ŷ/∂y_i.
    pub d_values: Vec<(usize, f64)>,
    /// ∂ŷ/∂x̂.
    pub d_query: f64,
    /// ∂ŷ/∂x_i.
    pub d_knots: Vec<(usize, f64)>,
}

impl SampledFunction {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(DifwError::invalid(format!(
                "knots and values differ in length ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(DifwError::invalid("a sampled function needs at least two knots"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(DifwError::invalid("knots and values must be finite"));
        }
        if let Some(i) = x.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DifwError::invalid(format!(
                "knots must be strictly increasing (x[{}] = {} >= x[{}] = {})",
                i,
                x[i],
                i + 1,
                x[i + 1]
            )));
        }
        let uniform = detect_uniform(&x);
        Ok(Self { x, y, uniform })
    }

    /// Samples `y` on a uniform grid over `[0, 1]`.
    pub fn on_unit_grid(y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(DifwError::invalid("a sampled function needs at least two knots"));
        }
        let x = crate::tessellation::Domain::unit().uniform_grid(n);
        Self::new(x, y)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn into_values(self) -> Vec<f64> {
        self.y
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform.is_some()
    }

    pub fn locate(&self, q: f64) -> Location {
        locate(&self.x, self.uniform, q)
    }

    pub fn eval(&self, q: f64) -> f64 {
        let loc = self.locate(q);
        eval_at(&self.y, loc)
    }

    /// Value and derivative with respect to the query.
    pub fn eval_with_slope(&self, q: f64) -> (f64, f64) {
        let loc = self.locate(q);
        (eval_at(&self.y, loc), slope_at(&self.x, &self.y, loc))
    }

    pub fn grad(&self, q: f64) -> InterpGrad {
        let loc = self.locate(q);
        let i = loc.segment;
        let value = eval_at(&self.y, loc);
        if loc.clamped {
            let end = if loc.lambda == 0.0 { i } else { i + 1 };
            return InterpGrad {
                value,
                d_values: vec![(end, 1.0)],
                d_query: 0.0,
                d_knots: Vec::new(),
            };
        }
        let s = slope_at(&self.x, &self.y, loc);
        let l = loc.lambda;
        InterpGrad {
            value,
            d_values: vec![(i, 1.0 - l), (i + 1, l)],
            d_query: s,
            d_knots: vec![(i, -s * (1.0 - l)), (i + 1, -s * l)],
        }
    }
}

fn detect_uniform(x: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    let h = (x[n - 1] - x[0]) / (n - 1) as f64;
    let scale = x[0].abs().max(x[n - 1].abs()).max(h);
    let ok = x
        .iter()
        .enumerate()
        .all(|(i, &xi)| (xi - (x[0] + i as f64 * h)).abs() <= UNIFORM_TOL * scale);
    ok.then(|| (x[0], 1.0 / h))
}

fn locate(x: &[f64], uniform: Option<(f64, f64)>, q: f64) -> Location {
    let n = x.len();
    let last = n - 2;
    if q <= x[0] {
        return Location {
            segment: 0,
            lambda: 0.0,
            clamped: q < x[0],
        };
    }
    if q >= x[n - 1] {
        return Location {
            segment: last,
            lambda: 1.0,
            clamped: q > x[n - 1],
        };
    }
    let mut i = match uniform {
        Some((x0, inv_h)) => (((q - x0) * inv_h).floor().max(0.0) as usize).min(last),
        None => x.partition_point(|&k| k <= q).saturating_sub(1).min(last),
    };
    // the uniform guess can be off by one near knots
    while i < last && q >= x[i + 1] {
        i += 1;
    }
    while i > 0 && q < x[i] {
        i -= 1;
    }
    let lambda = ((q - x[i]) / (x[i + 1] - x[i])).clamp(0.0, 1.0);
    Location {
        segment: i,
        lambda,
        clamped: false,
    }
}

#[inline]
pub(crate) fn eval_at(y: &[f64], loc: Location) -> f64 {
    let i = loc.segment;
    if loc.lambda == 0.0 {
        y[i]
    } else if loc.lambda == 1.0 {
        y[i + 1]
    } else {
        y[i] + loc.lambda * (y[i + 1] - y[i])
    }
}

#[inline]
pub(crate) fn slope_at(x: &[f64], y: &[f64], loc: Location) -> f64 {
    if loc.clamped {
        return 0.0;
    }
    let i = loc.segment;
    (y[i + 1] - y[i]) / (x[i + 1] - x[i])
}

/// Piecewise-linear value of `f` at `q`.
pub fn interp(f: &SampledFunction, q: f64) -> f64 {
    f.eval(q)
}

/// Derivatives of the interpolated value with respect to the values, the
/// query and the knots.
pub fn interp_grad(f: &SampledFunction, q: f64) -> InterpGrad {
    f.grad(q)
}

/// Resamples `signal` at the warped positions: output `j` is
/// `signal(warp[j])`, on the signal's own knots.
pub fn warp_signal(signal: &SampledFunction, warp: &[f64]) -> Result<SampledFunction> {
    if warp.len() != signal.len() {
        return Err(DifwError::invalid(format!(
            "warp has {} points, signal has {}",
            warp.len(),
            signal.len()
        )));
    }
    let y = warp.iter().map(|&p| signal.eval(p)).collect();
    Ok(SampledFunction {
        x: signal.x.clone(),
        y,
        uniform: signal.uniform,
    })
}

/// One row of the self-composition Jacobian:
/// `d out[k] = w0 * d g[i] + w1 * d g[i+1] + slope * d g[k]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComposeRow {
    pub segment: usize,
    pub w0: f64,
    pub w1: f64,
    pub slope: f64,
}

/// Sparse Jacobian of `g -> g(g)` on a fixed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposeJacobian {
    rows: Vec<ComposeRow>,
}

impl ComposeJacobian {
    pub fn rows(&self) -> &[ComposeRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Applies the Jacobian to a tangent vector.
    pub fn apply(&self, dg: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| r.w0 * dg[r.segment] + r.w1 * dg[r.segment + 1] + r.slope * dg[k])
            .collect()
    }

    /// Applies the Jacobian to each column of a row-major `n x d` matrix.
    pub fn apply_rows(&self, dg: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let (g0, g1, gk) = (&dg[r.segment], &dg[r.segment + 1], &dg[k]);
                (0..gk.len())
                    .map(|c| r.w0 * g0[c] + r.w1 * g1[c] + r.slope * gk[c])
                    .collect()
            })
            .collect()
    }

    /// Dense form, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        let mut m = vec![vec![0.0; n]; n];
        for (k, r) in self.rows.iter().enumerate() {
            m[k][r.segment] += r.w0;
            m[k][r.segment + 1] += r.w1;
            m[k][k] += r.slope;
        }
        m
    }
}

fn check_compose_input(grid: &[f64], warp: &[f64]) -> Result<()> {
    if grid.len() != warp.len() {
        return Err(DifwError::invalid(format!(
            "warp has {} values, grid has {}",
            warp.len(),
            grid.len()
        )));
    }
    if let Some(i) = warp.windows(2).position(|w| w[1] < w[0]) {
        return Err(DifwError::invalid(format!(
            "warp is not monotone at index {i}; composing it would not be a diffeomorphism"
        )));
    }
    Ok(())
}

/// `warp ∘ warp` sampled on `grid`.
pub fn compose_values(grid: &[f64], warp: &[f64]) -> Result<Vec<f64>> {
    check_compose_input(grid, warp)?;
    let f = SampledFunction::new(grid.to_vec(), warp.to_vec())?;
    Ok(warp.iter().map(|&p| f.eval(p)).collect())
}

/// `warp ∘ warp` on `grid` together with its Jacobian with respect to `warp`.
pub fn self_compose(grid: &[f64], warp: &[f64]) -> Result<(Vec<f64>, ComposeJacobian)> {
    check_compose_input(grid, warp)?;
    let f = SampledFunction::new(grid.to_vec(), warp.to_vec())?;
    let mut out = Vec::with_capacity(warp.len());
    let mut rows = Vec::with_capacity(warp.len());
    for &p in warp {
        let loc = f.locate(p);
        out.push(eval_at(&f.y, loc));
        let row = if loc.clamped {
            let (w0, w1) = if loc.lambda == 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
            ComposeRow {
                segment: loc.segment,
                w0,
                w1,
                slope: 0.0,
            }
        } else {
            ComposeRow {
                segment: loc.segment,
                w0: 1.0 - loc.lambda,
                w1: loc.lambda,
                slope: slope_at(&f.x, &f.y, loc),
            }
        };
        rows.push(row);
    }
    Ok((out, ComposeJacobian { rows }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn hat() -> SampledFunction {
        SampledFunction::new(vec![0.0, 0.5, 1.0], vec![0.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn interp_examples() {
        let f = hat();
        assert_eq!(interp(&f, 0.25), 0.5);
        for (x, y) in f.knots().iter().zip(f.values()) {
            assert_eq!(interp(&f, *x), *y);
        }
        assert_eq!(interp(&f, 1.2), 0.0);
        assert_eq!(interp(&f, -0.3), 0.0);
    }

    #[test]
    fn interp_grad_example() {
        let g = interp_grad(&hat(), 0.25);
        assert_eq!(g.d_values, vec![(0, 0.5), (1, 0.5)]);
        assert_eq!(g.d_query, 2.0);
        assert_eq!(g.d_knots, vec![(0, -1.0), (1, -1.0)]);
    }

    #[test]
    fn knot_queries_use_the_right_segment() {
        let f = hat();
        assert_eq!(f.grad(0.5).d_query, -2.0);
        assert_eq!(f.grad(0.0).d_query, 2.0);
        assert_eq!(f.grad(1.0).d_query, -2.0);
    }

    #[test]
    fn clamped_queries_have_zero_spatial_derivative() {
        let g = hat().grad(1.5);
        assert_eq!(g.d_query, 0.0);
        assert_eq!(g.d_values, vec![(2, 1.0)]);
        assert!(g.d_knots.is_empty());
    }

    #[test]
    fn flat_segment_derivatives_vanish() {
        let f = SampledFunction::new(vec![0.0, 1.0, 2.0], vec![3.0, 3.0, 1.0]).unwrap();
        let g = f.grad(0.4);
        assert_eq!(g.d_query, 0.0);
        assert!(g.d_knots.iter().all(|&(_, v)| v == 0.0));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let x = vec![0.0, 0.3, 0.45, 0.8, 1.0];
        let y = vec![0.2, -0.4, 0.9, 0.1, 0.5];
        let q = 0.37;
        let f = SampledFunction::new(x.clone(), y.clone()).unwrap();
        let g = f.grad(q);
        let h = 1e-6;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
        let fd_q = (f.eval(q + h) - f.eval(q - h)) / (2.0 * h);
        assert!(rel(g.d_query, fd_q) < 1e-8);
        let dense = |row: &[(usize, f64)], i: usize| {
            row.iter().filter(|e| e.0 == i).map(|e| e.1).sum::<f64>()
        };
        for i in 0..x.len() {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            let fd = (SampledFunction::new(x.clone(), yp).unwrap().eval(q)
                - SampledFunction::new(x.clone(), ym).unwrap().eval(q))
                / (2.0 * h);
            assert_abs_diff_eq!(dense(&g.d_values, i), fd, epsilon = 1e-8);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (SampledFunction::new(xp, y.clone()).unwrap().eval(q)
                - SampledFunction::new(xm, y.clone()).unwrap().eval(q))
                / (2.0 * h);
            let an = dense(&g.d_knots, i);
            assert!((an - fd).abs() <= 1e-8 * fd.abs().max(1e-6), "knot {i}: {an} vs {fd}");
        }
    }

    #[test]
    fn uniform_fast_path_matches_binary_search() {
        let n = 257;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (7.0 * v).sin()).collect();
        let fast = SampledFunction::new(x.clone(), y.clone()).unwrap();
        assert!(fast.is_uniform());
        let mut xs = x.clone();
        xs[1] += 1e-9;
        let slow = SampledFunction::new(xs, y).unwrap();
        assert!(!slow.is_uniform());
        for k in 0..=1000 {
            let q = k as f64 / 1000.0;
            let (a, b) = (fast.locate(q), slow.locate(q));
            if q > 2.0 / (n - 1) as f64 {
                assert_eq!(a.segment, b.segment, "q={q}");
            }
        }
        for (i, &xi) in x.iter().enumerate() {
            assert_eq!(fast.locate(xi).segment, i.min(n - 2));
        }
    }

    #[test]
    fn invalid_functions() {
        assert!(SampledFunction::new(vec![0.0], vec![1.0]).is_err());
        assert!(SampledFunction::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(SampledFunction::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(warp_signal(&hat(), &[0.0, 1.0]).is_err());
        assert!(self_compose(&[0.0, 0.5, 1.0], &[0.0, 0.6, 0.5]).is_err());
    }

    #[test]
    fn warp_signal_examples() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let s = SampledFunction::new(x.clone(), x.iter().map(|v| v * v).collect()).unwrap();
        assert_eq!(warp_signal(&s, &x).unwrap(), s);
        let lin = SampledFunction::new(x.clone(), x.clone()).unwrap();
        let phi: Vec<f64> = x.iter().map(|v| v.powf(1.3)).collect();
        let out = warp_signal(&lin, &phi).unwrap();
        for (a, b) in out.values().iter().zip(&phi) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn identity_self_composition() {
        let grid: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        let (out, jac) = self_compose(&grid, &grid).unwrap();
        assert_eq!(out, grid);
        let dg: Vec<f64> = (0..6).map(|i| (i as f64).cos() * 1e-3).collect();
        // d(g∘g) = dg∘g + g'·dg = 2 dg at the identity
        for (a, b) in jac.apply(&dg).iter().zip(&dg) {
            assert_abs_diff_eq!(*a, 2.0 * b, epsilon = 1e-15);
        }
    }

    #[test]
    fn self_compose_jacobian_matches_finite_differences() {
        let n = 9;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let warp: Vec<f64> = grid.iter().map(|&x| x + 0.07 * (std::f64::consts::PI * x).sin()).collect();
        let (_, jac) = self_compose(&grid, &warp).unwrap();
        let dense = jac.to_dense();
        let h = 1e-7;
        for j in 0..n {
            let mut wp = warp.clone();
            let mut wm = warp.clone();
            wp[j] += h;
            wm[j] -= h;
            let cp = compose_values(&grid, &wp).unwrap();
            let cm = compose_values(&grid, &wm).unwrap();
            for k in 1..n - 1 {
                let fd = (cp[k] - cm[k]) / (2.0 * h);
                assert_abs_diff_eq!(dense[k][j], fd, epsilon = 1e-6);
            }
        }
    }
}
