//! Incremental shared-basis RBF fitting.
//!
//! Stage 0 fits the observed values; every later stage fits the residual left
//! by the stages before it, training only its own bases. Stages stop once the
//! observed-cell MAPE of the cumulative function falls under the threshold.

mod config;
mod init;
mod train;

pub use config::{BankMode, SigmaInit, TrainConfig};
pub use init::{init_centers, init_sigmas, init_weights, CenterInit};
pub use train::{
    fit, fit_stage, grad_step, observed_mape, stage_gradient, stage_loss, update_residual,
    FitOutput, ResidualTarget, StageGradient, StageReport,
};
