use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{BasisMethod, CpaBasis};
use crate::error::{DifwError, Result};
use crate::gradient::{self, GradientMatrix};
use crate::integrator;
use crate::prior::PriorCovariance;
use crate::sampler::{eval_at, slope_at, SampledFunction};
use crate::tessellation::{Domain, Tessellation};

use super::batch::{mean_rows, TimeSeriesBatch};
use super::loss::{loss_data_multi_grad, loss_data_single_grad, loss_reg_grad};
use super::optim::Adam;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConfig {
    pub n_cells: usize,
    pub zero_boundary: bool,
    pub basis_method: BasisMethod,
    pub lambda_sigma: f64,
    pub lambda_smooth: f64,
    pub n_layers: usize,
    pub n_squarings: u32,
    pub learning_rate: f64,
    /// Number of optimization steps.
    pub epochs: usize,
    /// Signals per step; `None` uses the whole batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Run the optimizer on whitened coordinates `u` with `theta = L u`
    /// (`Sigma = L L^T`) instead of on theta itself. The loss is the same;
    /// only the optimizer geometry changes.
    pub whiten: bool,
    /// Undo any step that increases the full-batch loss and halve the
    /// learning rate, so the loss history never increases.
    pub monotone: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            n_cells: 16,
            zero_boundary: true,
            basis_method: BasisMethod::default(),
            lambda_sigma: 0.1,
            lambda_smooth: 0.5,
            n_layers: 1,
            n_squarings: 0,
            learning_rate: 1e-2,
            epochs: 500,
            batch_size: None,
            seed: 0,
            whiten: true,
            monotone: true,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.n_cells == 0 || self.n_layers == 0 {
            return Err(DifwError::invalid("n_cells and n_layers must be at least 1"));
        }
        if !positive(self.lambda_sigma) || !positive(self.lambda_smooth) || !positive(self.learning_rate) {
            return Err(DifwError::invalid(
                "lambda_sigma, lambda_smooth and the learning rate must be positive",
            ));
        }
        if self.batch_size == Some(0) {
            return Err(DifwError::invalid("batch size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub data: f64,
    pub reg: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// `thetas[signal][layer]`.
    pub thetas: Vec<Vec<Vec<f64>>>,
    pub aligned: TimeSeriesBatch,
    /// Overall warp of each signal on the time grid.
    pub warps: Vec<Vec<f64>>,
    /// Mean aligned signal per class (one entry without labels).
    pub centroids: Vec<Vec<f64>>,
    /// Loss before each step and after the last one.
    pub loss_history: Vec<LossRecord>,
}

/// Stored forward pass of one signal through the warp layers.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Input to each layer, then the output.
    pub states: Vec<Vec<f64>>,
    pub warps: Vec<Vec<f64>>,
    pub jacobians: Vec<GradientMatrix>,
}

impl Forward {
    pub fn output(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Warps signals on a fixed time grid with a stack of CPA layers and
/// back-propagates through the sampler and the flow.
#[derive(Debug, Clone)]
pub struct Warper {
    basis: CpaBasis,
    prior: PriorCovariance,
    grid: Vec<f64>,
    grid_fn: SampledFunction,
    n_channels: usize,
    n_layers: usize,
    n_squarings: u32,
    whiten: bool,
}

impl Warper {
    pub fn new(config: &AlignmentConfig, len: usize, n_channels: usize) -> Result<Self> {
        config.validate()?;
        let tess = Tessellation::unit(config.n_cells)?;
        let basis = CpaBasis::new(&tess, config.zero_boundary, config.basis_method)?;
        let prior = PriorCovariance::new(&basis, config.lambda_sigma, config.lambda_smooth)?;
        let grid = Domain::unit().uniform_grid(len);
        let grid_fn = SampledFunction::new(grid.clone(), grid.clone())?;
        Ok(Self {
            basis,
            prior,
            grid,
            grid_fn,
            n_channels,
            n_layers: config.n_layers,
            n_squarings: config.n_squarings,
            whiten: config.whiten,
        })
    }

    pub fn basis(&self) -> &CpaBasis {
        &self.basis
    }

    pub fn prior(&self) -> &PriorCovariance {
        &self.prior
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    /// Theta of one layer from optimizer coordinates.
    fn theta_of(&self, params: &[f64]) -> Vec<f64> {
        if self.whiten {
            self.prior.color(params)
        } else {
            params.to_vec()
        }
    }

    /// Optimizer-coordinate gradient from a theta-gradient.
    fn param_grad(&self, grad: &[f64]) -> Vec<f64> {
        if self.whiten {
            self.prior.color_transpose(grad)
        } else {
            grad.to_vec()
        }
    }

    fn thetas_of(&self, params: &[f64], n: usize) -> Vec<Vec<Vec<f64>>> {
        let d = self.dim();
        unflatten(params, n, self.n_layers, d)
            .into_iter()
            .map(|stack| stack.iter().map(|p| self.theta_of(p)).collect())
            .collect()
    }

    fn flat_param_grad(&self, grads: &[Vec<Vec<f64>>]) -> Vec<f64> {
        grads
            .iter()
            .flatten()
            .flat_map(|g| self.param_grad(g))
            .collect()
    }

    pub fn zero_thetas(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.dim()]; self.n_layers]
    }

    /// One layer's warp on the grid and its parameter Jacobian.
    pub fn warp(&self, theta: &[f64]) -> Result<(Vec<f64>, GradientMatrix)> {
        let field = self.basis.theta_to_field(theta)?;
        if self.n_squarings == 0 {
            let r = integrator::integrate_grid(self.basis.tessellation(), &field, &self.grid, 1.0)?;
            let j = gradient::grad_grid(&self.basis, &field, &r)?;
            Ok((r.phi, j))
        } else {
            gradient::scaling_squaring_with_grad(&self.basis, &field, &self.grid, 1.0, self.n_squarings)
        }
    }

    fn check_signal(&self, signal: &[f64]) -> Result<()> {
        if signal.len() != self.grid.len() * self.n_channels {
            return Err(DifwError::invalid(format!(
                "signal has {} samples, expected {} channels of {}",
                signal.len(),
                self.n_channels,
                self.grid.len()
            )));
        }
        Ok(())
    }

    fn resample(&self, z: &[f64], warp: &[f64]) -> Vec<f64> {
        let t = self.grid.len();
        let mut out = vec![0.0; z.len()];
        for (j, &p) in warp.iter().enumerate() {
            let loc = self.grid_fn.locate(p);
            for c in 0..self.n_channels {
                out[c * t + j] = eval_at(&z[c * t..(c + 1) * t], loc);
            }
        }
        out
    }

    /// Applies the layers in order: `z_{l+1} = z_l ∘ phi_l`.
    pub fn forward(&self, signal: &[f64], thetas: &[Vec<f64>]) -> Result<Forward> {
        self.check_signal(signal)?;
        if thetas.len() != self.n_layers {
            return Err(DifwError::invalid(format!(
                "{} parameter vectors for {} layers",
                thetas.len(),
                self.n_layers
            )));
        }
        let mut states = vec![signal.to_vec()];
        let mut warps = Vec::with_capacity(self.n_layers);
        let mut jacobians = Vec::with_capacity(self.n_layers);
        for theta in thetas {
            let (phi, jac) = self.warp(theta)?;
            let next = self.resample(states.last().expect("nonempty"), &phi);
            states.push(next);
            warps.push(phi);
            jacobians.push(jac);
        }
        Ok(Forward {
            states,
            warps,
            jacobians,
        })
    }

    /// Gradient with respect to each layer's theta, given `dL/dz` at the output.
    pub fn backward(&self, fwd: &Forward, d_out: &[f64]) -> Vec<Vec<f64>> {
        let t = self.grid.len();
        let knots = self.grid_fn.knots();
        let mut dz = d_out.to_vec();
        let mut grads = vec![Vec::new(); fwd.warps.len()];
        for l in (0..fwd.warps.len()).rev() {
            let z = &fwd.states[l];
            let mut d_phi = vec![0.0; t];
            let mut dz_prev = vec![0.0; z.len()];
            for (j, &p) in fwd.warps[l].iter().enumerate() {
                let loc = self.grid_fn.locate(p);
                let i = loc.segment;
                let (w0, w1) = if loc.clamped {
                    if loc.lambda == 0.0 { (1.0, 0.0) } else { (0.0, 1.0) }
                } else {
                    (1.0 - loc.lambda, loc.lambda)
                };
                for c in 0..self.n_channels {
                    let g = dz[c * t + j];
                    if g == 0.0 {
                        continue;
                    }
                    let zc = &z[c * t..(c + 1) * t];
                    d_phi[j] += g * slope_at(knots, zc, loc);
                    dz_prev[c * t + i] += g * w0;
                    dz_prev[c * t + i + 1] += g * w1;
                }
            }
            grads[l] = fwd.jacobians[l].transpose_times(&d_phi);
            dz = dz_prev;
        }
        grads
    }

    /// Overall warp `phi_0 ∘ phi_1 ∘ ...` on the grid.
    pub fn total_warp(&self, fwd: &Forward) -> Vec<f64> {
        let mut w = match fwd.warps.last() {
            Some(w) => w.clone(),
            None => return self.grid.clone(),
        };
        for phi in fwd.warps.iter().rev().skip(1) {
            w = w
                .iter()
                .map(|&p| eval_at(phi, self.grid_fn.locate(p)))
                .collect();
        }
        w
    }

    /// Loss and gradient for the signals in `active` (all when `None`):
    /// within-class variance of the warped active signals plus the mean
    /// prior quadratic form of their parameters.
    pub fn loss_and_grad(
        &self,
        batch: &TimeSeriesBatch,
        thetas: &[Vec<Vec<f64>>],
        active: Option<&[usize]>,
    ) -> Result<(LossRecord, Vec<Vec<Vec<f64>>>)> {
        let forwards = self.forward_all(batch, thetas)?;
        self.loss_and_grad_from(batch, thetas, &forwards, active)
    }

    pub fn forward_all(&self, batch: &TimeSeriesBatch, thetas: &[Vec<Vec<f64>>]) -> Result<Vec<Forward>> {
        if thetas.len() != batch.n_signals() {
            return Err(DifwError::invalid(format!(
                "{} parameter stacks for {} signals",
                thetas.len(),
                batch.n_signals()
            )));
        }
        (0..batch.n_signals())
            .into_par_iter()
            .map(|i| self.forward(batch.signal(i), &thetas[i]).map_err(|e| DifwError::at_point(i, e)))
            .collect()
    }

    fn loss_and_grad_from(
        &self,
        batch: &TimeSeriesBatch,
        thetas: &[Vec<Vec<f64>>],
        forwards: &[Forward],
        active: Option<&[usize]>,
    ) -> Result<(LossRecord, Vec<Vec<Vec<f64>>>)> {
        let all: Vec<usize>;
        let active = match active {
            Some(a) => a,
            None => {
                all = (0..batch.n_signals()).collect();
                &all
            }
        };
        let outputs: Vec<Vec<f64>> = active.iter().map(|&i| forwards[i].output().to_vec()).collect();
        let (data, d_out) = match batch.labels() {
            Some(labels) if batch.n_classes() > 1 => {
                let sub: Vec<usize> = active.iter().map(|&i| labels[i]).collect();
                loss_data_multi_grad(&outputs, &relabel(&sub))?
            }
            _ => loss_data_single_grad(&outputs),
        };
        let mut reg = 0.0;
        let mut reg_grads = vec![Vec::new(); active.len()];
        for l in 0..self.n_layers {
            let layer: Vec<Vec<f64>> = active.iter().map(|&i| thetas[i][l].clone()).collect();
            let (r, g) = loss_reg_grad(&layer, &self.prior)?;
            reg += r;
            for (rg, gl) in reg_grads.iter_mut().zip(g) {
                rg.push(gl);
            }
        }
        let mut grads = vec![vec![vec![0.0; self.dim()]; self.n_layers]; batch.n_signals()];
        let data_grads: Vec<Vec<Vec<f64>>> = active
            .par_iter()
            .zip(d_out.par_iter())
            .map(|(&i, d)| self.backward(&forwards[i], d))
            .collect();
        for ((&i, dg), rg) in active.iter().zip(data_grads).zip(reg_grads) {
            for l in 0..self.n_layers {
                for ((g, a), b) in grads[i][l].iter_mut().zip(&dg[l]).zip(&rg[l]) {
                    *g = a + b;
                }
            }
        }
        Ok((
            LossRecord {
                data,
                reg,
                total: data + reg,
            },
            grads,
        ))
    }
}

/// Maps labels of a subset onto `0..K'` keeping their order.
fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    labels
        .iter()
        .map(|l| classes.binary_search(l).expect("present"))
        .collect()
}

fn unflatten(flat: &[f64], n: usize, layers: usize, d: usize) -> Vec<Vec<Vec<f64>>> {
    (0..n)
        .map(|i| {
            (0..layers)
                .map(|l| flat[(i * layers + l) * d..(i * layers + l + 1) * d].to_vec())
                .collect()
        })
        .collect()
}

/// Last accepted iterate of the monotone optimizer.
struct Accepted {
    params: Vec<f64>,
    adam: Adam,
    thetas: Vec<Vec<Vec<f64>>>,
    forwards: Vec<Forward>,
    record: LossRecord,
    grads: Vec<Vec<Vec<f64>>>,
}

/// Aligns all signals of `batch` jointly: each signal gets its own stack of
/// warp parameters, optimized with Adam on within-class variance plus the
/// prior regularizer.
pub fn align_joint(batch: &TimeSeriesBatch, config: &AlignmentConfig) -> Result<AlignmentResult> {
    let warper = Warper::new(config, batch.len(), batch.n_channels())?;
    align_with(&warper, batch, config)
}

pub(crate) fn align_with(
    warper: &Warper,
    batch: &TimeSeriesBatch,
    config: &AlignmentConfig,
) -> Result<AlignmentResult> {
    let n = batch.n_signals();
    let (layers, d) = (warper.n_layers(), warper.dim());
    let mut params = vec![0.0; n * layers * d];
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs + 1);

    let mut accepted: Option<Accepted> = None;
    let mut step = 0;
    let forwards = loop {
        let mut thetas = warper.thetas_of(&params, n);
        let mut forwards = warper.forward_all(batch, &thetas)?;
        let (mut record, mut full_grads) = warper.loss_and_grad_from(batch, &thetas, &forwards, None)?;
        if !record.total.is_finite() {
            return Err(DifwError::Numeric(format!(
                "loss became non-finite at step {step} (data {}, reg {}); try a smaller learning rate",
                record.data, record.reg
            )));
        }
        if config.monotone {
            if let Some(prev) = accepted.take() {
                if record.total > prev.record.total {
                    // undo the step and retry from the previous iterate with half the step size
                    let lr = 0.5 * adam.lr;
                    (params, adam, thetas, forwards, record, full_grads) =
                        (prev.params, prev.adam, prev.thetas, prev.forwards, prev.record, prev.grads);
                    adam.lr = lr;
                }
            }
            accepted = Some(Accepted {
                params: params.clone(),
                adam: adam.clone(),
                thetas: thetas.clone(),
                forwards: forwards.clone(),
                record,
                grads: full_grads.clone(),
            });
        }
        history.push(record);
        if step == config.epochs {
            break forwards;
        }
        let grads = match config.batch_size {
            Some(b) if b < n => {
                order.shuffle(&mut rng);
                let mut active = order[..b].to_vec();
                active.sort_unstable();
                warper.loss_and_grad_from(batch, &thetas, &forwards, Some(&active))?.1
            }
            _ => full_grads,
        };
        adam.step(&mut params, &warper.flat_param_grad(&grads));
        step += 1;
    };

    let thetas = warper.thetas_of(&params, n);
    let rows: Vec<Vec<f64>> = forwards.iter().map(|f| f.output().to_vec()).collect();
    let warps = forwards.iter().map(|f| warper.total_warp(f)).collect();
    let aligned = batch.with_rows(rows)?;
    let centroids = (0..batch.n_classes())
        .map(|k| aligned.mean_of(&batch.class_members(k)))
        .collect();
    Ok(AlignmentResult {
        thetas,
        aligned,
        warps,
        centroids,
        loss_history: history,
    })
}

/// Aligns one signal to a fixed target with at most `steps` Adam steps on
/// `|z - target|^2 + sum_l theta_l^T Sigma^{-1} theta_l`. Returns the best
/// iterate seen (the identity included), its warped signal and its squared
/// distance to the target.
pub fn align_to_target(
    warper: &Warper,
    signal: &[f64],
    target: &[f64],
    steps: usize,
    learning_rate: f64,
) -> Result<(Vec<Vec<f64>>, Vec<f64>, f64)> {
    if target.len() != signal.len() {
        return Err(DifwError::invalid("target and signal differ in length"));
    }
    let (layers, d) = (warper.n_layers(), warper.dim());
    let mut params = vec![0.0; layers * d];
    let mut adam = Adam::new(params.len(), learning_rate);
    let mut best: Option<(f64, Vec<Vec<f64>>, Vec<f64>, f64)> = None;
    for step in 0..=steps {
        let thetas = warper.thetas_of(&params, 1).pop().expect("one stack");
        let fwd = warper.forward(signal, &thetas)?;
        let z = fwd.output();
        let diff: Vec<f64> = z.iter().zip(target).map(|(a, b)| a - b).collect();
        let dist: f64 = diff.iter().map(|v| v * v).sum();
        let (reg, reg_grads) = loss_reg_grad_stack(warper, &thetas)?;
        let objective = dist + reg;
        if !objective.is_finite() {
            return Err(DifwError::Numeric(format!(
                "alignment objective became non-finite at step {step}"
            )));
        }
        if best.as_ref().map_or(true, |b| objective < b.0) {
            best = Some((objective, thetas.clone(), z.to_vec(), dist));
        }
        if step == steps {
            break;
        }
        let d_out: Vec<f64> = diff.iter().map(|v| 2.0 * v).collect();
        let data_grads = warper.backward(&fwd, &d_out);
        let theta_grads: Vec<Vec<Vec<f64>>> = vec![data_grads
            .iter()
            .zip(&reg_grads)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect()];
        let grad = warper.flat_param_grad(&theta_grads);
        adam.step(&mut params, &grad);
    }
    let (_, thetas, z, dist) = best.expect("at least one evaluation");
    Ok((thetas, z, dist))
}

fn loss_reg_grad_stack(warper: &Warper, thetas: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(thetas.len());
    for t in thetas {
        let (r, mut g) = loss_reg_grad(std::slice::from_ref(t), warper.prior())?;
        total += r;
        grads.push(g.pop().expect("one gradient"));
    }
    Ok((total, grads))
}

/// Pointwise mean of rows.
pub(crate) fn mean_of_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    mean_rows(rows.iter().map(Vec::as_slice), rows.first().map_or(0, Vec::len))
}
