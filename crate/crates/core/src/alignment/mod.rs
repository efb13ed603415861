//! Joint alignment of time series by direct optimization of per-signal warp
//! parameters, and nearest-centroid classification on top of it.

mod batch;
mod joint;
mod loss;
mod ncc;
mod optim;
pub mod synthetic;

pub use batch::TimeSeriesBatch;
pub use joint::{align_joint, align_to_target, AlignmentConfig, AlignmentResult, Forward, LossRecord, Warper};
pub use loss::{
    loss_data_multi, loss_data_multi_grad, loss_data_single, loss_data_single_grad, loss_reg,
    loss_reg_grad, within_class_variance,
};
pub use ncc::{accuracy, ncc_fit, ncc_predict, EuclideanNcc, NearestCentroid, MAX_PREDICT_STEPS};
pub use optim::Adam;
