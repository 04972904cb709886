//! Adam with bias correction over the flat parameter table.

use alloc::vec::Vec;

// Pulls in float math on builds without std.
#[allow(unused_imports)]
use num_traits::Float;

use super::resnet::{NeuralError, Network};
use super::scalar::Scalar;
use super::tensor::Tensor;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// First/second moment estimates aligned with the parameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Tensor<F>>,
    pub v: Vec<Tensor<F>>,
    pub step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(net: &Network<F>) -> Self {
        AdamState { m: net.zero_grads(), v: net.zero_grads(), step: 0 }
    }

    pub fn cast<G: Scalar>(&self) -> AdamState<G> {
        AdamState {
            m: self.m.iter().map(Tensor::cast).collect(),
            v: self.v.iter().map(Tensor::cast).collect(),
            step: self.step,
        }
    }
}

/// One Adam update. `mask[i] == false` leaves parameter tensor `i` (and its
/// moments) untouched. A non-finite gradient rejects the whole step and
/// names the offending tensor.
pub fn adam_step<F: Scalar>(
    net: &mut Network<F>,
    state: &mut AdamState<F>,
    grads: &[Tensor<F>],
    lr: f64,
    mask: Option<&[bool]>,
) -> Result<(), NeuralError> {
    for (i, g) in grads.iter().enumerate() {
        if mask.map_or(true, |m| m[i]) && !g.all_finite() {
            return Err(NeuralError::NonFiniteGradient(net.arch.metas[i].name.clone()));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let b1 = F::of_f64(BETA1);
    let b2 = F::of_f64(BETA2);
    let one = F::one();
    let corr1 = 1.0 - BETA1.powi(t);
    let corr2 = 1.0 - BETA2.powi(t);
    // Fold both bias corrections into the step size.
    let alpha = F::of_f64(lr * corr2.sqrt() / corr1);
    let eps = F::of_f64(EPS * corr2.sqrt());
    for i in 0..grads.len() {
        if !mask.map_or(true, |m| m[i]) {
            continue;
        }
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = net.params[i].data_mut();
        for j in 0..g.len() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            p[j] = p[j] - alpha * m[j] / (v[j].sqrt() + eps);
        }
    }
    Ok(())
}
