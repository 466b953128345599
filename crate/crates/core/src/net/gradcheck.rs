//! Central finite-difference verification of the analytic gradients.
//!
//! These helpers evaluate the loss through the forward pass only, so they are
//! independent of the backward-pass code they check.

use crate::tensor::Tensor;

use super::layers::{mse_loss, mse_loss_backward};
use super::SrpModel;

/// Relative error with an absolute floor: values that are both below 1e-7
/// are considered equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs());
    if denom < 1e-7 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

fn model_loss(model: &SrpModel, x: &Tensor, target: &Tensor) -> f64 {
    let y = model.forward(x).expect("forward on checked shapes");
    mse_loss(&y, target).expect("shapes agree")
}

/// Max relative error between analytic parameter gradients of the MSE loss
/// and central finite differences with step `h`.
pub fn max_param_grad_error(model: &SrpModel, x: &Tensor, target: &Tensor, h: f64) -> f64 {
    let mut traced = model.clone();
    traced.zero_grads();
    let (y, trace) = traced.forward_trace(x.clone()).expect("forward");
    let grad_y = mse_loss_backward(&y, target).expect("shapes agree");
    traced.backward(&trace, &grad_y).expect("backward");

    let analytic: Vec<(String, Vec<f64>)> = traced
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.clone()))
        .collect();

    let mut max_rel = 0.0f64;
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for idx in 0..grads.len() {
            let mut plus = model.clone();
            plus.params_mut()[pi].data[idx] += h;
            let mut minus = model.clone();
            minus.params_mut()[pi].data[idx] -= h;
            let fd = (model_loss(&plus, x, target) - model_loss(&minus, x, target)) / (2.0 * h);
            let rel = relative_error(grads[idx], fd);
            if rel > max_rel {
                max_rel = rel;
            }
            debug_assert!(
                rel.is_finite(),
                "non-finite gradient comparison at {name}[{idx}]"
            );
        }
    }
    max_rel
}

/// Max relative error between the analytic input gradient and central
/// finite differences with step `h`.
pub fn max_input_grad_error(model: &SrpModel, x: &Tensor, target: &Tensor, h: f64) -> f64 {
    let mut traced = model.clone();
    traced.zero_grads();
    let (y, trace) = traced.forward_trace(x.clone()).expect("forward");
    let grad_y = mse_loss_backward(&y, target).expect("shapes agree");
    let grad_x = traced.backward(&trace, &grad_y).expect("backward");

    let mut max_rel = 0.0f64;
    for idx in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[idx] += h;
        let mut xm = x.clone();
        xm.data_mut()[idx] -= h;
        let fd = (model_loss(model, &xp, target) - model_loss(model, &xm, target)) / (2.0 * h);
        let rel = relative_error(grad_x.data()[idx], fd);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    max_rel
}
