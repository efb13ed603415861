//! Closed-form continuous piecewise-affine (CPA) warping of 1-D domains.
//!
//! The pieces, bottom up:
//! - [`tessellation`]: uniform cells and point membership,
//! - [`basis`]: continuity constraints and null-space bases for CPA fields,
//! - [`prior`]: Gaussian smoothness prior over basis coefficients,
//! - [`integrator`]: exact flow integration and scaling-and-squaring,
//! - [`gradient`]: exact parameter gradient of the flow,
//! - [`sampler`]: differentiable piecewise-linear resampling,
//! - [`oracle`]: numeric ODE solvers and finite differences for checking,
//! - [`alignment`]: joint alignment of time series and nearest-centroid
//!   classification.
//!
//! Fields live on `[x_min, x_max]` (usually `[0, 1]`); signals on other
//! intervals should be mapped with [`tessellation::Domain::normalize`] first.

pub mod alignment;
pub mod basis;
pub mod cli;
mod dd;
pub mod error;
pub mod gradient;
pub mod integrator;
pub mod oracle;
pub mod prior;
pub mod sampler;
pub mod special;
pub mod tessellation;

pub use basis::{AffineField, BasisMethod, CpaBasis};
pub use error::{DifwError, Result};
pub use gradient::{grad_grid, grad_point, grad_scaling_squaring, GradientMatrix};
pub use integrator::{integrate, integrate_grid, scaling_squaring, TraversalTrace, WarpResult};
pub use prior::{prior_covariance, sample_prior, PriorCovariance};
pub use sampler::{interp, interp_grad, self_compose, warp_signal, SampledFunction};
pub use tessellation::{Domain, Tessellation};
