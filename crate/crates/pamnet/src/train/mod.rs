//! Training: forecasting losses, the Adam optimizer, the fit loop with
//! early stopping, and finite-difference gradient verification.

mod adam;
mod fit;
mod gradcheck;
mod loss;

pub use adam::{adam_step, AdamState, OptimConfig};
pub use fit::{eval_loss, fit, TrainReport};
pub use gradcheck::{grad_check, GradCheckEntry, GradCheckReport};
pub use loss::{freq_mae, hybrid_loss, loss_node, time_mae, time_mse, LossConfig, LossMode};
