//! Alignment losses: within-class variance of warped signals and the prior
//! regularizer on warp parameters.

use crate::error::{DifwError, Result};
use crate::prior::PriorCovariance;

use super::batch::mean_rows;

fn width(rows: &[Vec<f64>]) -> usize {
    rows.first().map_or(0, Vec::len)
}

/// `(1/N) sum_i |z_i - mean(z)|^2`.
pub fn loss_data_single(warped: &[Vec<f64>]) -> f64 {
    if warped.is_empty() {
        return 0.0;
    }
    let mean = mean_rows(warped.iter().map(Vec::as_slice), width(warped));
    let ss: f64 = warped
        .iter()
        .map(|z| z.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>())
        .sum();
    ss / warped.len() as f64
}

/// [`loss_data_single`] and its gradient `(2/N)(z_i - mean(z))`.
pub fn loss_data_single_grad(warped: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
    let n = warped.len() as f64;
    let mean = mean_rows(warped.iter().map(Vec::as_slice), width(warped));
    let mut ss = 0.0;
    let grads = warped
        .iter()
        .map(|z| {
            z.iter()
                .zip(&mean)
                .map(|(a, m)| {
                    ss += (a - m) * (a - m);
                    2.0 * (a - m) / n
                })
                .collect()
        })
        .collect();
    (if warped.is_empty() { 0.0 } else { ss / n }, grads)
}

fn class_index(labels: &[usize], n: usize) -> Result<Vec<Vec<usize>>> {
    if labels.len() != n {
        return Err(DifwError::invalid(format!("{} labels for {n} signals", labels.len())));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut classes = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        classes[l].push(i);
    }
    if let Some(empty) = classes.iter().position(Vec::is_empty) {
        return Err(DifwError::invalid(format!("class {empty} has no signals")));
    }
    Ok(classes)
}

/// `sum_k (1/N_k) L_single(class k)`; the per-class weight is applied on
/// top of the `1/N_k` already inside the single-class loss.
pub fn loss_data_multi(warped: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    Ok(loss_data_multi_grad(warped, labels)?.0)
}

pub fn loss_data_multi_grad(warped: &[Vec<f64>], labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    let classes = class_index(labels, warped.len())?;
    let mut grads = vec![Vec::new(); warped.len()];
    let mut total = 0.0;
    for members in classes {
        let nk = members.len() as f64;
        let sub: Vec<Vec<f64>> = members.iter().map(|&i| warped[i].clone()).collect();
        let (l, g) = loss_data_single_grad(&sub);
        total += l / nk;
        for (i, gi) in members.into_iter().zip(g) {
            grads[i] = gi.into_iter().map(|v| v / nk).collect();
        }
    }
    Ok((total, grads))
}

/// `(1/N) sum_i theta_i^T Sigma^{-1} theta_i`, through Cholesky solves.
pub fn loss_reg(thetas: &[Vec<f64>], prior: &PriorCovariance) -> Result<f64> {
    Ok(loss_reg_grad(thetas, prior)?.0)
}

/// [`loss_reg`] and its gradient `(2/N) Sigma^{-1} theta_i`.
pub fn loss_reg_grad(thetas: &[Vec<f64>], prior: &PriorCovariance) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = thetas.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(thetas.len());
    for theta in thetas {
        if theta.iter().all(|&v| v == 0.0) {
            // zero needs no solve, and stays valid even for a singular prior
            if theta.len() != prior.dim() {
                return Err(DifwError::invalid(format!(
                    "theta has length {}, prior dimension is {}",
                    theta.len(),
                    prior.dim()
                )));
            }
            grads.push(vec![0.0; theta.len()]);
            continue;
        }
        let p = prior.precision_times(theta)?;
        total += theta.iter().zip(&p).map(|(a, b)| a * b).sum::<f64>();
        grads.push(p.into_iter().map(|v| 2.0 * v / n).collect());
    }
    Ok((if thetas.is_empty() { 0.0 } else { total / n }, grads))
}

/// Mean squared deviation of each signal from its class mean.
pub fn within_class_variance(warped: &[Vec<f64>], labels: Option<&[usize]>) -> Result<f64> {
    let n = warped.len();
    if n == 0 {
        return Ok(0.0);
    }
    let classes = match labels {
        Some(l) => class_index(l, n)?,
        None => vec![(0..n).collect()],
    };
    let mut ss = 0.0;
    for members in classes {
        let sub: Vec<Vec<f64>> = members.iter().map(|&i| warped[i].clone()).collect();
        ss += loss_data_single(&sub) * sub.len() as f64;
    }
    Ok(ss / n as f64)
}
