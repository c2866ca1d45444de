//! Losses, fraction-proposal gradients, optimisers and the
//! finite-difference gradient oracle.

mod fraction_grad;
mod gradcheck;
mod loss;
mod optim;

pub use fraction_grad::{fraction_logit_grad, fraction_weight_grad, FractionGradMode};
pub use gradcheck::{verify_gradients, GradCheckReport, GradCheckSetup, GroupReport};
pub use loss::{
    huber, huber_grad, huber_quantile_loss, huber_quantile_loss_grad, td_errors,
    wasserstein_grad_tau, wasserstein_loss, LossConfig,
};
pub use optim::{adam_step, rmsprop_step, AdamConfig, OptimizerState, RmsPropConfig};
