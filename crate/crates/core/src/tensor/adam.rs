//! Adam optimizer state and update rule.
//!
//! Hyperparameters beyond the learning rate are fixed at the usual
//! defaults: beta1 = 0.9, beta2 = 0.999, eps = 1e-8.

use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// First and second moment estimates plus the step counter for one
/// parameter tensor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m: Tensor,
    v: Tensor,
    t: u64,
}

impl AdamState {
    /// Fresh state for a parameter of the given shape.
    pub fn new(rows: usize, cols: usize) -> AdamState {
        AdamState {
            m: Tensor::zeros(rows, cols),
            v: Tensor::zeros(rows, cols),
            t: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.m.shape()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Reassembles a state from its serialized pieces.
    pub fn from_parts(m: Tensor, v: Tensor, t: u64) -> Result<AdamState, TensorError> {
        if m.shape() != v.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_from_parts",
                lhs: m.shape(),
                rhs: v.shape(),
            });
        }
        Ok(AdamState { m, v, t })
    }

    /// Moment estimates and step counter, for serialization.
    pub fn parts(&self) -> (&Tensor, &Tensor, u64) {
        (&self.m, &self.v, self.t)
    }
}

/// One bias-corrected Adam update, applied to `param` in place.
pub fn adam_step(
    param: &mut Tensor,
    grad: &Tensor,
    state: &mut AdamState,
    lr: f64,
) -> Result<(), TensorError> {
    if param.shape() != grad.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "adam_step",
            lhs: param.shape(),
            rhs: grad.shape(),
        });
    }
    if param.shape() != state.shape() {
        return Err(TensorError::ShapeMismatch {
            op: "adam_step",
            lhs: param.shape(),
            rhs: state.shape(),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    for i in 0..param.len() {
        let g = grad.data()[i];
        let m = BETA1 * state.m.data()[i] + (1.0 - BETA1) * g;
        let v = BETA2 * state.v.data()[i] + (1.0 - BETA2) * g * g;
        state.m.data_mut()[i] = m;
        state.v.data_mut()[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        param.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
    }
    param.assert_finite("adam_step");
    Ok(())
}
