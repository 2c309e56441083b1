//! Desk-scale diffusion training: schedule, noise-prediction loss, a toy
//! denoiser, its training loop and gradient verification.

mod gradcheck;
mod schedule;
mod toy;
mod train;

pub use gradcheck::{
    gradcheck_all, relative_error, GradcheckReport, GroupCheck, FD_STEP, GRAD_TOLERANCE, REL_FLOOR,
};
pub use schedule::{
    make_schedule, DiffusionSchedule, DEFAULT_BETA_END, DEFAULT_BETA_START, DEFAULT_STEPS,
};
pub use toy::{toy_backward, toy_forward, ToyDenoiser, ToyTrace};
pub use train::{
    analytic_gain, fit_scalar_gain, init_models, toy_corpus, train_toy, train_toy_standard,
    TrainConfig, TrainPair, TrainReport, TrainSummary,
};

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// Mean squared error between a noise prediction and the injected noise.
pub fn training_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return invalid(format!(
            "prediction {:?} and target {:?} differ in shape",
            pred.shape(),
            target.shape()
        ));
    }
    let sse: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sse / pred.len() as f64)
}

/// Gradient of [`training_loss`] with respect to the prediction.
pub fn training_loss_grad(pred: &Tensor, target: &Tensor) -> Vec<f64> {
    let scale = 2.0 / pred.len() as f64;
    pred.data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| scale * (p - t))
        .collect()
}
