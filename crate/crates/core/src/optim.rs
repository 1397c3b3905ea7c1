//! Adadelta parameter updates.
//!
//! Per step, with decay rho and stabilizer eps:
//!
//! ```text
//! E[g^2]  <- rho E[g^2]  + (1 - rho) g^2
//! dx       = -(RMS[dx] / RMS[g]) g          RMS[v] = sqrt(v + eps)
//! E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
//! x       <- x + dx
//! ```
//!
//! There is no global learning rate; the RMS ratio self-normalizes the
//! step size per parameter.

use crate::error::{Error, Result};
use crate::layers::ParamSlot;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const DEFAULT_RHO: f64 = 0.95;
pub const DEFAULT_EPS: f64 = 1e-6;

/// Per-parameter accumulators of squared gradients and squared updates.
/// Both stay elementwise non-negative and mirror the parameter shape.
pub struct AdadeltaState<S: Scalar> {
    pub acc_grad_sq: Tensor<S>,
    pub acc_delta_sq: Tensor<S>,
}

impl<S: Scalar> AdadeltaState<S> {
    pub fn new(dims: &[usize]) -> Self {
        AdadeltaState {
            acc_grad_sq: Tensor::zeros(dims),
            acc_delta_sq: Tensor::zeros(dims),
        }
    }
}

/// One in-place Adadelta update of a parameter tensor. Fails on non-finite
/// gradients, naming the parameter.
pub fn adadelta_step<S: Scalar>(
    name: &str,
    param: &mut Tensor<S>,
    grad: &Tensor<S>,
    state: &mut AdadeltaState<S>,
    rho: f64,
    eps: f64,
) -> Result<()> {
    if param.dims() != grad.dims() || param.dims() != state.acc_grad_sq.dims() {
        return Err(Error::Dimension {
            op: "adadelta_step",
            detail: format!(
                "parameter {name}: shapes disagree (param {:?}, grad {:?}, state {:?})",
                param.dims(),
                grad.dims(),
                state.acc_grad_sq.dims()
            ),
        });
    }
    if grad.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric {
            op: "adadelta_step",
            detail: format!("non-finite gradient for parameter {name}"),
        });
    }
    let rho = S::of_f64(rho);
    let one_minus_rho = S::one() - rho;
    let eps = S::of_f64(eps);
    let pd = param.data_mut();
    let gd = grad.data();
    let eg = state.acc_grad_sq.data_mut();
    let ed = state.acc_delta_sq.data_mut();
    for i in 0..pd.len() {
        let g = gd[i];
        eg[i] = rho * eg[i] + one_minus_rho * g * g;
        let dx = -((ed[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * g;
        ed[i] = rho * ed[i] + one_minus_rho * dx * dx;
        pd[i] = pd[i] + dx;
    }
    Ok(())
}

/// Optimizer bound to one model's parameter list, in enumeration order.
pub struct Adadelta<S: Scalar> {
    pub rho: f64,
    pub eps: f64,
    states: Vec<AdadeltaState<S>>,
}

impl<S: Scalar> Adadelta<S> {
    pub fn new(param_dims: &[Vec<usize>]) -> Self {
        Adadelta {
            rho: DEFAULT_RHO,
            eps: DEFAULT_EPS,
            states: param_dims.iter().map(|d| AdadeltaState::new(d)).collect(),
        }
    }

    pub fn step(&mut self, mut slots: Vec<ParamSlot<'_, S>>) -> Result<()> {
        if slots.len() != self.states.len() {
            return Err(Error::State {
                op: "adadelta_step",
                detail: "optimizer state count does not match parameter count",
            });
        }
        for (slot, state) in slots.iter_mut().zip(&mut self.states) {
            adadelta_step(&slot.name, slot.value, slot.grad, state, self.rho, self.eps)?;
        }
        Ok(())
    }
}
