//! Continuity constraints on per-cell affine coefficients and bases of the
//! resulting CPA (continuous piecewise-affine) velocity space.
//!
//! A velocity field is stored as `vec(A) = [a_0, b_0, a_1, b_1, ...]`, where
//! cell `c` carries the affine map `v(x) = a_c x + b_c`. Continuity at every
//! shared vertex is a linear constraint `L vec(A) = 0`; a basis `B` of the null
//! space of `L` parametrizes every continuous field as `vec(A) = B theta`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{DifwError, Result};
use crate::tessellation::{Domain, Tessellation};

/// Largest acceptable `|L B|` entry for a freshly built basis.
pub const NULL_SPACE_TOLERANCE: f64 = 1e-12;

/// Algorithm used to obtain the null space of the constraint matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisMethod {
    /// Right singular vectors of the vanishing singular values (orthonormal).
    Svd,
    /// Trailing columns of the full Householder `Q` of `L^T` (orthonormal).
    Qr,
    /// Free-variable vectors of the reduced row echelon form.
    Rref,
    /// One unit-slope tent per free vertex, at most four nonzeros per column.
    Sparse,
}

impl BasisMethod {
    pub const ALL: [BasisMethod; 4] = [
        BasisMethod::Svd,
        BasisMethod::Qr,
        BasisMethod::Rref,
        BasisMethod::Sparse,
    ];

    pub fn is_orthonormal(self) -> bool {
        matches!(self, BasisMethod::Svd | BasisMethod::Qr)
    }
}

impl Default for BasisMethod {
    fn default() -> Self {
        BasisMethod::Sparse
    }
}

impl fmt::Display for BasisMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BasisMethod::Svd => "svd",
            BasisMethod::Qr => "qr",
            BasisMethod::Rref => "rref",
            BasisMethod::Sparse => "sparse",
        };
        f.write_str(s)
    }
}

impl FromStr for BasisMethod {
    type Err = DifwError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svd" => Ok(BasisMethod::Svd),
            "qr" => Ok(BasisMethod::Qr),
            "rref" => Ok(BasisMethod::Rref),
            "sparse" => Ok(BasisMethod::Sparse),
            other => Err(DifwError::invalid(format!(
                "unknown basis method '{other}' (expected svd, qr, rref or sparse)"
            ))),
        }
    }
}

/// Dense constraint matrix with `2 * n_cells` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    pub matrix: DMatrix<f64>,
    pub zero_boundary: bool,
}

impl ConstraintMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// One row `[x_j, 1, -x_j, -1]` per shared vertex `x_j`, plus `v(x_min) = 0`
/// and `v(x_max) = 0` when `zero_boundary` is set.
pub fn constraint_matrix(tess: &Tessellation, zero_boundary: bool) -> ConstraintMatrix {
    let n = tess.n_cells();
    let shared = tess.n_shared_vertices();
    let rows = shared + if zero_boundary { 2 } else { 0 };
    let mut l = DMatrix::zeros(rows, 2 * n);
    let v = tess.vertices();
    for j in 0..shared {
        let x = v[j + 1];
        l[(j, 2 * j)] = x;
        l[(j, 2 * j + 1)] = 1.0;
        l[(j, 2 * j + 2)] = -x;
        l[(j, 2 * j + 3)] = -1.0;
    }
    if zero_boundary {
        l[(shared, 0)] = v[0];
        l[(shared, 1)] = 1.0;
        l[(shared + 1, 2 * n - 2)] = v[n];
        l[(shared + 1, 2 * n - 1)] = 1.0;
    }
    ConstraintMatrix {
        matrix: l,
        zero_boundary,
    }
}

/// Dimension of the CPA space for `n_cells` cells.
pub fn expected_dimension(n_cells: usize, zero_boundary: bool) -> usize {
    if zero_boundary {
        n_cells.saturating_sub(1)
    } else {
        n_cells + 1
    }
}

/// Per-cell affine coefficients `vec(A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineField {
    coeffs: Vec<f64>,
}

impl AffineField {
    pub fn from_vec(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() % 2 != 0 {
            return Err(DifwError::invalid(format!(
                "vec(A) must have a positive even length, got {}",
                coeffs.len()
            )));
        }
        Ok(AffineField { coeffs })
    }

    /// Field built from `(slope, intercept)` pairs, one per cell.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::from_vec(pairs.iter().flat_map(|&(a, b)| [a, b]).collect())
    }

    pub fn zeros(n_cells: usize) -> Self {
        AffineField {
            coeffs: vec![0.0; 2 * n_cells],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.coeffs.len() / 2
    }

    #[inline]
    pub fn slope(&self, c: usize) -> f64 {
        self.coeffs[2 * c]
    }

    #[inline]
    pub fn intercept(&self, c: usize) -> f64 {
        self.coeffs[2 * c + 1]
    }

    #[inline]
    pub fn cell(&self, c: usize) -> (f64, f64) {
        (self.coeffs[2 * c], self.coeffs[2 * c + 1])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn negated(&self) -> Self {
        AffineField {
            coeffs: self.coeffs.iter().map(|v| -v).collect(),
        }
    }

    /// Largest jump `|v(x_j^-) - v(x_j^+)|` over the shared vertices.
    pub fn continuity_defect(&self, tess: &Tessellation) -> f64 {
        let v = tess.vertices();
        (0..self.n_cells().saturating_sub(1))
            .map(|c| {
                let x = v[c + 1];
                let (a0, b0) = self.cell(c);
                let (a1, b1) = self.cell(c + 1);
                ((a0 * x + b0) - (a1 * x + b1)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Basis of the CPA velocity space over a tessellation.
#[derive(Debug, Clone)]
pub struct CpaBasis {
    tess: Tessellation,
    method: BasisMethod,
    zero_boundary: bool,
    /// `2 * n_cells` rows, one column per basis vector.
    matrix: DMatrix<f64>,
}

impl CpaBasis {
    /// Builds the constraint matrix for `tess` and a basis of its null space.
    pub fn new(tess: &Tessellation, zero_boundary: bool, method: BasisMethod) -> Result<Self> {
        let l = constraint_matrix(tess, zero_boundary);
        null_space_basis(tess, &l, method)
    }

    pub fn tessellation(&self) -> &Tessellation {
        &self.tess
    }

    pub fn method(&self) -> BasisMethod {
        self.method
    }

    pub fn zero_boundary(&self) -> bool {
        self.zero_boundary
    }

    /// Number of parameters `d`.
    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Sensitivities `(da_c/dtheta_k, db_c/dtheta_k)` for cell `c`.
    #[inline]
    pub fn cell_rows(&self, c: usize, k: usize) -> (f64, f64) {
        (self.matrix[(2 * c, k)], self.matrix[(2 * c + 1, k)])
    }

    /// `vec(A) = B theta`.
    pub fn theta_to_field(&self, theta: &[f64]) -> Result<AffineField> {
        if theta.len() != self.dim() {
            return Err(DifwError::invalid(format!(
                "theta has length {} but the basis dimension is {}",
                theta.len(),
                self.dim()
            )));
        }
        let rows = self.matrix.nrows();
        let mut coeffs = vec![0.0; rows];
        for (k, &t) in theta.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            for (r, c) in coeffs.iter_mut().enumerate() {
                *c += self.matrix[(r, k)] * t;
            }
        }
        AffineField::from_vec(coeffs)
    }

    /// Least-squares coefficients of `field` in this basis. For orthonormal
    /// bases this is the plain projection `B^T vec(A)`.
    pub fn field_to_theta(&self, field: &AffineField) -> Result<Vec<f64>> {
        if field.as_slice().len() != self.matrix.nrows() {
            return Err(DifwError::invalid(format!(
                "field has {} coefficients, basis expects {}",
                field.as_slice().len(),
                self.matrix.nrows()
            )));
        }
        let a = DVector::from_column_slice(field.as_slice());
        let theta = self.pseudo_inverse()? * a;
        Ok(theta.iter().copied().collect())
    }

    /// `(B^T B)^{-1} B^T`, which reduces to `B^T` for orthonormal bases.
    pub fn pseudo_inverse(&self) -> Result<DMatrix<f64>> {
        let bt = self.matrix.transpose();
        if self.method.is_orthonormal() || self.dim() == 0 {
            return Ok(bt);
        }
        let gram = &bt * &self.matrix;
        let chol = gram.cholesky().ok_or_else(|| {
            DifwError::Numeric("basis Gram matrix is not positive definite".into())
        })?;
        Ok(chol.solve(&bt))
    }

    /// `max |L B|` against the constraint matrix of this basis.
    pub fn constraint_residual(&self) -> f64 {
        let l = constraint_matrix(&self.tess, self.zero_boundary);
        residual(&l.matrix, &self.matrix)
    }

    pub fn to_file(&self) -> BasisFile {
        let (rows, cols) = self.matrix.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(self.matrix[(r, c)]);
            }
        }
        let domain = self.tess.domain();
        BasisFile {
            n_cells: self.tess.n_cells(),
            zero_boundary: self.zero_boundary,
            method: self.method,
            d: cols,
            matrix: data,
            x_min: domain.x_min,
            x_max: domain.x_max,
        }
    }

    /// Rebuilds a basis from its exported form, checking that it still spans
    /// a subspace of the constraint null space.
    pub fn from_file(file: &BasisFile) -> Result<Self> {
        let tess = Tessellation::uniform(Domain::new(file.x_min, file.x_max)?, file.n_cells)?;
        let rows = 2 * file.n_cells;
        if file.d != expected_dimension(file.n_cells, file.zero_boundary) {
            return Err(DifwError::invalid(format!(
                "basis dimension {} does not match {} cells (zero_boundary = {})",
                file.d, file.n_cells, file.zero_boundary
            )));
        }
        if file.matrix.len() != rows * file.d {
            return Err(DifwError::invalid(format!(
                "basis matrix has {} entries, expected {}x{}",
                file.matrix.len(),
                rows,
                file.d
            )));
        }
        let matrix = DMatrix::from_row_slice(rows, file.d, &file.matrix);
        let basis = CpaBasis {
            tess,
            method: file.method,
            zero_boundary: file.zero_boundary,
            matrix,
        };
        let res = basis.constraint_residual();
        // exported values are decimal round trips, allow a little slack
        if res > 1e-9 {
            return Err(DifwError::invalid(format!(
                "imported basis violates the continuity constraints (residual {res:e})"
            )));
        }
        Ok(basis)
    }
}

/// Serialized basis: `matrix` is row-major with `2 * n_cells` rows and `d` columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFile {
    pub n_cells: usize,
    pub zero_boundary: bool,
    pub method: BasisMethod,
    pub d: usize,
    pub matrix: Vec<f64>,
    #[serde(default)]
    pub x_min: f64,
    #[serde(default = "one")]
    pub x_max: f64,
}

fn one() -> f64 {
    1.0
}

fn residual(l: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    if l.nrows() == 0 || b.ncols() == 0 {
        return 0.0;
    }
    (l * b).amax()
}

/// Null-space basis of `l` (built by [`constraint_matrix`] over `tess`).
pub fn null_space_basis(
    tess: &Tessellation,
    l: &ConstraintMatrix,
    method: BasisMethod,
) -> Result<CpaBasis> {
    let n = tess.n_cells();
    if l.cols() != 2 * n {
        return Err(DifwError::invalid(format!(
            "constraint matrix has {} columns, expected {}",
            l.cols(),
            2 * n
        )));
    }
    let d = expected_dimension(n, l.zero_boundary);
    let matrix = if l.rows() == 0 {
        DMatrix::identity(2 * n, 2 * n)
    } else {
        match method {
            BasisMethod::Svd => svd_null_space(&l.matrix, d)?,
            BasisMethod::Qr => qr_null_space(&l.matrix, d)?,
            BasisMethod::Rref => rref_null_space(&l.matrix, d)?,
            BasisMethod::Sparse => sparse_basis(tess, l.zero_boundary),
        }
    };
    if matrix.ncols() != d {
        return Err(DifwError::Internal(format!(
            "null space has dimension {} but {d} was expected",
            matrix.ncols()
        )));
    }
    Ok(CpaBasis {
        tess: tess.clone(),
        method,
        zero_boundary: l.zero_boundary,
        matrix,
    })
}

fn rank_tolerance(l: &DMatrix<f64>, scale: f64) -> f64 {
    l.nrows().max(l.ncols()) as f64 * f64::EPSILON * scale.max(1.0) * 64.0
}

fn svd_null_space(l: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let cols = l.ncols();
    // pad with zero rows so the SVD returns the full set of right singular vectors
    let mut square = DMatrix::zeros(cols, cols);
    square.view_mut((0, 0), (l.nrows(), cols)).copy_from(l);
    let svd = square.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| DifwError::Internal("SVD did not return right singular vectors".into()))?;
    let s_max = svd.singular_values.max();
    let tol = rank_tolerance(l, s_max);
    let null: Vec<usize> = (0..cols)
        .filter(|&i| svd.singular_values[i] <= tol)
        .collect();
    if null.len() != d {
        return Err(DifwError::Internal(format!(
            "SVD found a {}-dimensional null space, expected {d}",
            null.len()
        )));
    }
    let mut b = DMatrix::zeros(cols, d);
    for (j, &i) in null.iter().enumerate() {
        b.set_column(j, &v_t.row(i).transpose());
    }
    Ok(b)
}

fn qr_null_space(l: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let rows = l.nrows();
    let cols = l.ncols();
    if rows > cols {
        return Err(DifwError::Internal(
            "constraint matrix has more rows than columns".into(),
        ));
    }
    // pad L^T with zero columns so Q comes out square
    let mut lt = DMatrix::zeros(cols, cols);
    lt.view_mut((0, 0), (cols, rows)).copy_from(&l.transpose());
    let qr = lt.qr();
    let r = qr.r();
    let scale = r.amax();
    let tol = rank_tolerance(l, scale);
    let rank = (0..rows).filter(|&i| r[(i, i)].abs() > tol).count();
    if rank != rows || cols - rank != d {
        return Err(DifwError::Internal(format!(
            "QR found rank {rank} for a {rows}x{cols} constraint matrix, expected null dimension {d}"
        )));
    }
    let q = qr.q();
    Ok(q.columns(rank, cols - rank).into_owned())
}

fn rref_null_space(l: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let rows = l.nrows();
    let cols = l.ncols();
    let mut m = l.clone();
    let tol = rank_tolerance(l, l.amax());
    let mut pivots: Vec<usize> = Vec::with_capacity(rows);
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (best, best_val) = (r..rows)
            .map(|i| (i, m[(i, c)].abs()))
            .fold((r, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best_val <= tol {
            continue;
        }
        m.swap_rows(r, best);
        let p = m[(r, c)];
        for j in c..cols {
            m[(r, j)] /= p;
        }
        m[(r, c)] = 1.0;
        for i in 0..rows {
            if i != r {
                let f = m[(i, c)];
                if f != 0.0 {
                    for j in c..cols {
                        m[(i, j)] -= f * m[(r, j)];
                    }
                    m[(i, c)] = 0.0;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let free: Vec<usize> = (0..cols).filter(|c| !pivots.contains(c)).collect();
    if free.len() != d {
        return Err(DifwError::Internal(format!(
            "row reduction left {} free columns, expected {d}",
            free.len()
        )));
    }
    let mut b = DMatrix::zeros(cols, d);
    for (j, &f) in free.iter().enumerate() {
        b[(f, j)] = 1.0;
        for (i, &p) in pivots.iter().enumerate() {
            let v = -m[(i, f)];
            if v.abs() > tol {
                b[(p, j)] = v;
            }
        }
    }
    Ok(b)
}

/// Tent velocity at each free vertex: slope +1 on the cell left of the vertex,
/// -1 on the cell to its right, zero elsewhere.
fn sparse_basis(tess: &Tessellation, zero_boundary: bool) -> DMatrix<f64> {
    let n = tess.n_cells();
    let v = tess.vertices();
    let range = if zero_boundary { 1..n } else { 0..n + 1 };
    let mut b = DMatrix::zeros(2 * n, range.len());
    for (j, vertex) in range.enumerate() {
        if vertex > 0 {
            let c = vertex - 1;
            b[(2 * c, j)] = 1.0;
            b[(2 * c + 1, j)] = -v[c];
        }
        if vertex < n {
            let c = vertex;
            b[(2 * c, j)] = -1.0;
            b[(2 * c + 1, j)] = v[c + 1];
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit(n: usize) -> Tessellation {
        Tessellation::unit(n).unwrap()
    }

    #[test]
    fn constraint_rows() {
        let l = constraint_matrix(&unit(2), false);
        assert_eq!(l.matrix.shape(), (1, 4));
        assert_eq!(l.matrix.row(0).iter().copied().collect::<Vec<_>>(), vec![0.5, 1.0, -0.5, -1.0]);

        let l = constraint_matrix(&unit(1), false);
        assert_eq!(l.matrix.shape(), (0, 2));

        let l = constraint_matrix(&unit(2), true);
        assert_eq!(l.matrix.shape(), (3, 4));
        assert_eq!(l.matrix.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(l.matrix.row(2).iter().copied().collect::<Vec<_>>(), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn continuity_rows_have_four_nonzeros_in_adjacent_blocks() {
        let l = constraint_matrix(&unit(9), false);
        for j in 0..l.rows() {
            let nz: Vec<usize> = (0..l.cols()).filter(|&c| l.matrix[(j, c)] != 0.0).collect();
            assert_eq!(nz, vec![2 * j, 2 * j + 1, 2 * j + 2, 2 * j + 3]);
        }
    }

    /// Brute-force elimination of the 3x4 system for two zero-boundary cells:
    /// b0 = 0, a1 + b1 = 0, 0.5 a0 + b0 - 0.5 a1 - b1 = 0. Fixing b1 = 1 gives
    /// a1 = -1 and a0 = (b1 + 0.5 a1) / 0.5 = 1.
    #[test]
    fn two_cell_zero_boundary_null_vector() {
        let expected = [1.0, 0.0, -1.0, 1.0];
        let norm = 3f64.sqrt();
        for method in BasisMethod::ALL {
            let b = CpaBasis::new(&unit(2), true, method).unwrap();
            assert_eq!(b.dim(), 1);
            let col = b.matrix().column(0);
            // proportional to the expected vector
            let ratio = col[0] / expected[0];
            for i in 0..4 {
                assert_abs_diff_eq!(col[i], ratio * expected[i], epsilon = 1e-14);
            }
            if method.is_orthonormal() {
                assert_abs_diff_eq!(ratio.abs(), 1.0 / norm, epsilon = 1e-14);
            } else {
                assert_eq!(ratio, 1.0);
            }
        }
    }

    #[test]
    fn single_cell_is_identity() {
        for method in BasisMethod::ALL {
            let b = CpaBasis::new(&unit(1), false, method).unwrap();
            assert_eq!(b.matrix(), &DMatrix::<f64>::identity(2, 2));
        }
        let b = CpaBasis::new(&unit(1), true, BasisMethod::Svd).unwrap();
        assert_eq!(b.dim(), 0);
    }

    #[test]
    fn residual_and_dimension_for_all_methods() {
        for n in [2, 3, 5, 16, 64] {
            for zb in [false, true] {
                for method in BasisMethod::ALL {
                    let b = CpaBasis::new(&unit(n), zb, method).unwrap();
                    assert_eq!(b.dim(), expected_dimension(n, zb));
                    assert!(b.constraint_residual() <= NULL_SPACE_TOLERANCE);
                    if method.is_orthonormal() {
                        let gram = b.matrix().transpose() * b.matrix();
                        let dev = (gram - DMatrix::<f64>::identity(b.dim(), b.dim())).amax();
                        assert!(dev < 1e-10, "{method} n={n}: {dev}");
                    }
                }
            }
        }
    }

    #[test]
    fn shifted_domain_with_vertex_at_zero() {
        let t = Tessellation::uniform(Domain::new(-1.0, 1.0).unwrap(), 4).unwrap();
        for method in BasisMethod::ALL {
            for zb in [false, true] {
                let b = CpaBasis::new(&t, zb, method).unwrap();
                assert!(b.constraint_residual() <= NULL_SPACE_TOLERANCE);
            }
        }
    }

    #[test]
    fn theta_to_field_examples() {
        let b = CpaBasis::new(&unit(2), true, BasisMethod::Rref).unwrap();
        let f = b.theta_to_field(&[1.0]).unwrap();
        assert_eq!(f.cell(0), (1.0, 0.0));
        assert_eq!(f.cell(1), (-1.0, 1.0));

        let b = CpaBasis::new(&unit(1), false, BasisMethod::Sparse).unwrap();
        assert_eq!(b.theta_to_field(&[2.0, 3.0]).unwrap().cell(0), (2.0, 3.0));

        let b = CpaBasis::new(&unit(8), false, BasisMethod::Svd).unwrap();
        let z = b.theta_to_field(&vec![0.0; 9]).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        assert!(matches!(
            b.theta_to_field(&[1.0]),
            Err(DifwError::InvalidArgument(_))
        ));
    }

    #[test]
    fn field_to_theta_inverts_synthesis() {
        let theta: Vec<f64> = (0..17).map(|i| (i as f64 * 0.37).sin()).collect();
        for method in BasisMethod::ALL {
            let b = CpaBasis::new(&unit(16), false, method).unwrap();
            let f = b.theta_to_field(&theta).unwrap();
            let back = b.field_to_theta(&f).unwrap();
            for (x, y) in theta.iter().zip(&back) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-10);
            }
            let zero = b.field_to_theta(&AffineField::zeros(16)).unwrap();
            assert!(zero.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn export_import() {
        let b = CpaBasis::new(&unit(6), true, BasisMethod::Svd).unwrap();
        let json = serde_json::to_string(&b.to_file()).unwrap();
        let file: BasisFile = serde_json::from_str(&json).unwrap();
        let back = CpaBasis::from_file(&file).unwrap();
        assert_eq!(back.matrix(), b.matrix());
        assert_eq!(back.method(), BasisMethod::Svd);

        let mut bad = file.clone();
        bad.matrix[0] += 1.0;
        assert!(CpaBasis::from_file(&bad).is_err());
        let mut bad = file;
        bad.d = 3;
        assert!(CpaBasis::from_file(&bad).is_err());
    }

    #[test]
    fn method_names() {
        for m in BasisMethod::ALL {
            assert_eq!(m.to_string().parse::<BasisMethod>().unwrap(), m);
        }
        assert!("lu".parse::<BasisMethod>().is_err());
    }
}
