//! Generate-and-recover data: known base shapes warped by prior-sampled
//! latent warps, plus Gaussian noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisMethod, CpaBasis};
use crate::error::Result;
use crate::integrator::integrate_grid;
use crate::prior::PriorCovariance;
use crate::tessellation::{Domain, Tessellation};

use super::batch::TimeSeriesBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub len: usize,
    pub n_cells: usize,
    pub zero_boundary: bool,
    /// Prior scale of the latent warps.
    pub lambda_sigma: f64,
    pub lambda_smooth: f64,
    /// Standard deviation of additive noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            len: 128,
            n_cells: 16,
            zero_boundary: true,
            lambda_sigma: 1e-2,
            lambda_smooth: 0.5,
            noise_std: 0.01,
            seed: 0,
        }
    }
}

/// Signals plus the latent warps that produced them.
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub batch: TimeSeriesBatch,
    pub latent_thetas: Vec<Vec<f64>>,
    pub latent_warps: Vec<Vec<f64>>,
}

/// `per_class[k]` signals of each base shape `bases[k]`, each sampled as
/// `base(phi_i(x_j)) + noise` on a uniform grid of `[0, 1]`. With more than
/// one base the batch is labeled by base index.
pub fn warped_classes(bases: &[&dyn Fn(f64) -> f64], per_class: &[usize], spec: &SyntheticSpec) -> Result<SyntheticSet> {
    let tess = Tessellation::unit(spec.n_cells)?;
    let basis = CpaBasis::new(&tess, spec.zero_boundary, BasisMethod::default())?;
    let prior = PriorCovariance::new(&basis, spec.lambda_sigma, spec.lambda_smooth)?;
    let grid = Domain::unit().uniform_grid(spec.len);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut latent_thetas = Vec::new();
    let mut latent_warps = Vec::new();
    for (k, (base, &count)) in bases.iter().zip(per_class).enumerate() {
        for _ in 0..count {
            let theta = prior.sample_with(&mut rng);
            let field = basis.theta_to_field(&theta)?;
            let phi = integrate_grid(&tess, &field, &grid, 1.0)?.phi;
            let row = phi
                .iter()
                .map(|&p| {
                    let noise: f64 = rng.sample(StandardNormal);
                    base(p) + spec.noise_std * noise
                })
                .collect();
            rows.push(row);
            labels.push(k);
            latent_thetas.push(theta);
            latent_warps.push(phi);
        }
    }
    let mut batch = TimeSeriesBatch::from_rows(rows)?;
    if bases.len() > 1 {
        batch = batch.with_labels(labels)?;
    }
    Ok(SyntheticSet {
        batch,
        latent_thetas,
        latent_warps,
    })
}

/// `n` warped copies of one base shape.
pub fn warped_family(base: &dyn Fn(f64) -> f64, n: usize, spec: &SyntheticSpec) -> Result<SyntheticSet> {
    warped_classes(&[base], &[n], spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let spec = SyntheticSpec { len: 32, ..SyntheticSpec::default() };
        let base = |x: f64| (6.0 * x).sin();
        let a = warped_family(&base, 5, &spec).unwrap();
        let b = warped_family(&base, 5, &spec).unwrap();
        assert_eq!(a.batch, b.batch);
        assert_eq!((a.batch.n_signals(), a.batch.len()), (5, 32));
        assert!(a.batch.labels().is_none());
        let two = warped_classes(&[&base, &|x: f64| x], &[2, 3], &spec).unwrap();
        assert_eq!(two.batch.labels().unwrap(), &[0, 0, 1, 1, 1]);
    }

    #[test]
    fn noiseless_identity_prior_limit() {
        let spec = SyntheticSpec { len: 16, lambda_sigma: 1e-12, noise_std: 0.0, ..SyntheticSpec::default() };
        let s = warped_family(&|x: f64| x * x, 2, &spec).unwrap();
        for (x, y) in Domain::unit().uniform_grid(16).iter().zip(s.batch.signal(0)) {
            assert!((x * x - y).abs() < 1e-9);
        }
    }
}
