//! Gaussian smoothness prior over CPA parameters.
//!
//! Per-cell coefficients get a squared-exponential covariance over cell
//! centers, shared by the slope block and the intercept block (the two blocks
//! are independent). The covariance is carried into parameter space with the
//! basis pseudo-inverse, which is `B^T` for orthonormal bases.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::basis::CpaBasis;
use crate::error::{DifwError, Result};

/// Relative diagonal jitter tried, in order, when factorizing the covariance.
pub const JITTER_LADDER: [f64; 3] = [1e-12, 1e-10, 1e-8];

#[derive(Debug, Clone)]
pub struct PriorCovariance {
    lambda_sigma: f64,
    lambda_smooth: f64,
    sigma: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
    jitter: f64,
}

/// Squared-exponential covariance of `vec(A)` over cell centers.
pub fn piecewise_affine_covariance(
    basis: &CpaBasis,
    lambda_sigma: f64,
    lambda_smooth: f64,
) -> DMatrix<f64> {
    let tess = basis.tessellation();
    let n = tess.n_cells();
    let var = lambda_sigma * lambda_sigma;
    let mut cov = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let dist = tess.cell_center(i) - tess.cell_center(j);
            let k = var * (-(dist * dist) / (2.0 * lambda_smooth * lambda_smooth)).exp();
            cov[(2 * i, 2 * j)] = k;
            cov[(2 * i + 1, 2 * j + 1)] = k;
        }
    }
    cov
}

impl PriorCovariance {
    pub fn new(basis: &CpaBasis, lambda_sigma: f64, lambda_smooth: f64) -> Result<Self> {
        if !(lambda_sigma > 0.0 && lambda_sigma.is_finite()) {
            return Err(DifwError::invalid(format!(
                "lambda_sigma must be positive, got {lambda_sigma}"
            )));
        }
        if !(lambda_smooth > 0.0 && lambda_smooth.is_finite()) {
            return Err(DifwError::invalid(format!(
                "lambda_smooth must be positive, got {lambda_smooth}"
            )));
        }
        let cov_pa = piecewise_affine_covariance(basis, lambda_sigma, lambda_smooth);
        let p = basis.pseudo_inverse()?;
        let s = &p * cov_pa * p.transpose();
        let sigma = 0.5 * (&s + s.transpose());
        Self::from_matrix(sigma, lambda_sigma, lambda_smooth)
    }

    /// Wraps an explicit symmetric covariance.
    pub fn from_matrix(sigma: DMatrix<f64>, lambda_sigma: f64, lambda_smooth: f64) -> Result<Self> {
        if !sigma.is_square() {
            return Err(DifwError::invalid("covariance must be square"));
        }
        let d = sigma.nrows();
        let mean_diag = if d == 0 {
            0.0
        } else {
            sigma.diagonal().iter().map(|v| v.abs()).sum::<f64>() / d as f64
        };
        let mut chol = None;
        let mut jitter = 0.0;
        if d > 0 && mean_diag > 0.0 {
            for rel in JITTER_LADDER {
                let j = rel * mean_diag;
                let mut m = sigma.clone();
                for i in 0..d {
                    m[(i, i)] += j;
                }
                if let Some(c) = m.cholesky() {
                    chol = Some(c);
                    jitter = j;
                    break;
                }
            }
            if chol.is_none() {
                return Err(DifwError::Numeric(
                    "prior covariance is not positive semidefinite even after jitter".into(),
                ));
            }
        }
        Ok(PriorCovariance {
            lambda_sigma,
            lambda_smooth,
            sigma,
            chol,
            jitter,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn lambda_sigma(&self) -> f64 {
        self.lambda_sigma
    }

    pub fn lambda_smooth(&self) -> f64 {
        self.lambda_smooth
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Diagonal jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Draws `theta ~ N(0, Sigma)` from a generator seeded with `seed`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dim();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        self.color(&z)
    }

    /// `L u` with `Sigma = L L^T`: maps whitened coordinates to theta, so
    /// that `theta^T Sigma^{-1} theta = |u|^2`. Zero for an all-zero prior.
    pub fn color(&self, u: &[f64]) -> Vec<f64> {
        match &self.chol {
            None => vec![0.0; u.len()],
            Some(c) => (c.l_dirty().lower_triangle() * DVector::from_column_slice(u))
                .iter()
                .copied()
                .collect(),
        }
    }

    /// `L^T g`: pulls a theta-gradient back to whitened coordinates.
    pub fn color_transpose(&self, g: &[f64]) -> Vec<f64> {
        match &self.chol {
            None => vec![0.0; g.len()],
            Some(c) => (c.l_dirty().lower_triangle().transpose() * DVector::from_column_slice(g))
                .iter()
                .copied()
                .collect(),
        }
    }

    fn factor(&self) -> Result<&Cholesky<f64, Dyn>> {
        self.chol.as_ref().ok_or_else(|| {
            DifwError::Numeric("prior covariance is singular (all-zero)".into())
        })
    }

    /// `Sigma^{-1} theta` by Cholesky solves.
    pub fn precision_times(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(DifwError::invalid(format!(
                "theta has length {}, prior dimension is {}",
                theta.len(),
                self.dim()
            )));
        }
        if self.dim() == 0 {
            return Ok(Vec::new());
        }
        let x = self.factor()?.solve(&DVector::from_column_slice(theta));
        Ok(x.iter().copied().collect())
    }

    /// `theta^T Sigma^{-1} theta`.
    pub fn quadratic_form(&self, theta: &[f64]) -> Result<f64> {
        let p = self.precision_times(theta)?;
        Ok(theta.iter().zip(&p).map(|(a, b)| a * b).sum())
    }
}

/// Shorthand for [`PriorCovariance::new`].
pub fn prior_covariance(
    basis: &CpaBasis,
    lambda_sigma: f64,
    lambda_smooth: f64,
) -> Result<PriorCovariance> {
    PriorCovariance::new(basis, lambda_sigma, lambda_smooth)
}

/// Shorthand for [`PriorCovariance::sample`].
pub fn sample_prior(prior: &PriorCovariance, seed: u64) -> Vec<f64> {
    prior.sample(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::BasisMethod;
    use crate::tessellation::Tessellation;
    use approx::assert_relative_eq;

    fn basis(n: usize, zb: bool, m: BasisMethod) -> CpaBasis {
        CpaBasis::new(&Tessellation::unit(n).unwrap(), zb, m).unwrap()
    }

    #[test]
    fn single_cell_identity_basis() {
        let b = basis(1, false, BasisMethod::Svd);
        let p = PriorCovariance::new(&b, 0.3, 0.5).unwrap();
        assert_relative_eq!(p.matrix()[(0, 0)], 0.09, max_relative = 1e-14);
        assert_relative_eq!(p.matrix()[(1, 1)], 0.09, max_relative = 1e-14);
        assert_eq!(p.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn psd_by_eigendecomposition() {
        for m in BasisMethod::ALL {
            let b = basis(16, false, m);
            let p = PriorCovariance::new(&b, 1e-2, 0.5).unwrap();
            let s = p.matrix();
            assert_eq!(s, &s.transpose());
            let eig = s.clone().symmetric_eigen();
            assert!(eig.eigenvalues.min() >= -1e-10);
        }
    }

    #[test]
    fn nonpositive_hyperparameters_rejected() {
        let b = basis(4, false, BasisMethod::Sparse);
        assert!(PriorCovariance::new(&b, 0.0, 0.5).is_err());
        assert!(PriorCovariance::new(&b, 0.1, -1.0).is_err());
        assert!(PriorCovariance::new(&b, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let b = basis(8, true, BasisMethod::Sparse);
        let p = PriorCovariance::new(&b, 0.1, 0.2).unwrap();
        assert_eq!(p.sample(11), p.sample(11));
        assert_ne!(p.sample(11), p.sample(12));
    }

    #[test]
    fn vanishing_variance_gives_zero_draws() {
        let b = basis(8, false, BasisMethod::Svd);
        let p = PriorCovariance::new(&b, 1e-200, 0.5).unwrap();
        assert!(p.sample(3).iter().all(|&v| v == 0.0));
        assert!(p.quadratic_form(&vec![1.0; 9]).is_err());
        let tiny = PriorCovariance::new(&b, 1e-8, 0.5).unwrap();
        assert!(tiny.sample(3).iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn monte_carlo_standard_deviations() {
        let b = basis(16, false, BasisMethod::Svd);
        let p = PriorCovariance::new(&b, 1e-3, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 10_000;
        let d = p.dim();
        let mut sq = vec![0.0; d];
        for _ in 0..n {
            let th = p.sample_with(&mut rng);
            for (s, v) in sq.iter_mut().zip(&th) {
                *s += v * v;
            }
        }
        for k in 0..d {
            let emp = (sq[k] / n as f64).sqrt();
            let expected = p.matrix()[(k, k)].sqrt();
            assert!((emp / expected - 1.0).abs() < 0.1, "k={k}: {emp} vs {expected}");
        }
    }

    #[test]
    fn quadratic_form_identity() {
        let p = PriorCovariance::from_matrix(DMatrix::identity(3, 3), 1.0, 1.0).unwrap();
        assert_relative_eq!(p.quadratic_form(&[1.0, 0.0, 0.0]).unwrap(), 1.0, max_relative = 1e-10);
        assert_eq!(p.quadratic_form(&[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn prior_is_basis_independent_in_field_space() {
        // covariance of vec(A) = B theta should not depend on the basis used
        let t = Tessellation::unit(6).unwrap();
        let mut fields = Vec::new();
        for m in BasisMethod::ALL {
            let b = CpaBasis::new(&t, false, m).unwrap();
            let p = PriorCovariance::new(&b, 0.2, 0.3).unwrap();
            fields.push(b.matrix() * p.matrix() * b.matrix().transpose());
        }
        for f in &fields[1..] {
            assert!((f - &fields[0]).amax() < 1e-12);
        }
    }

    #[test]
    fn longer_length_scale_correlates_neighbouring_slopes() {
        let b = basis(8, false, BasisMethod::Sparse);
        let slope_corr = |ls: f64| {
            let p = PriorCovariance::new(&b, 0.2, ls).unwrap();
            let f = b.matrix() * p.matrix() * b.matrix().transpose();
            // slopes of cells 3 and 4 sit at rows 6 and 8
            f[(6, 8)] / (f[(6, 6)] * f[(8, 8)]).sqrt()
        };
        let (short, long) = (slope_corr(0.05), slope_corr(2.0));
        assert!(long > short && long > 0.9, "{short} {long}");
    }

    #[test]
    fn whitened_coordinates_give_unit_quadratic_form() {
        let b = basis(8, false, BasisMethod::Sparse);
        let p = PriorCovariance::new(&b, 0.3, 0.2).unwrap();
        let u: Vec<f64> = (0..p.dim()).map(|k| (k as f64 * 0.7).sin()).collect();
        let theta = p.color(&u);
        let q = p.quadratic_form(&theta).unwrap();
        let norm: f64 = u.iter().map(|v| v * v).sum();
        assert_relative_eq!(q, norm, max_relative = 1e-6);
        // <L u, g> = <u, L^T g>
        let g: Vec<f64> = (0..p.dim()).map(|k| (k as f64 * 1.3).cos()).collect();
        let lhs: f64 = theta.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(p.color_transpose(&g)).map(|(a, b)| a * b).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }
}
