use alloc::vec;
use alloc::vec::Vec;

use super::ModelParams;
use crate::math::sqrt;
use crate::{Error, Result};

pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_CLIP_NORM: f64 = 5.0;

/// Adam moments plus step count and hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    pub lr: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimState {
    pub fn new(params: &ModelParams, lr: f64, clip_norm: f64) -> Self {
        Self {
            m: vec![0.0; params.len()],
            v: vec![0.0; params.len()],
            step: 0,
            lr,
            clip_norm,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
    /// Factor applied to the gradient before the moment update.
    pub clip_scale: f64,
}

/// Scale that brings a gradient of norm `norm` within `max_norm`.
pub fn clip_scale(norm: f64, max_norm: f64) -> f64 {
    if max_norm > 0.0 && norm > max_norm {
        max_norm / norm
    } else {
        1.0
    }
}

/// One Adam update with global-norm clipping. Non-finite gradients abort the step
/// before anything is modified.
pub fn optimizer_step(
    params: &mut ModelParams,
    grads: &ModelParams,
    opt: &mut OptimState,
) -> Result<StepInfo> {
    if params.dims() != grads.dims() || opt.m.len() != params.len() {
        return Err(Error::Shape("optimizer state does not match parameters".into()));
    }
    for t in grads.tensors() {
        if grads.as_slice()[t.range].iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(t.name));
        }
    }
    let grad_norm = sqrt(grads.as_slice().iter().map(|g| g * g).sum());
    let scale = clip_scale(grad_norm, opt.clip_norm);
    opt.step += 1;
    let bc1 = 1.0 - libm::pow(opt.beta1, opt.step as f64);
    let bc2 = 1.0 - libm::pow(opt.beta2, opt.step as f64);
    for (i, (p, &g)) in params
        .as_mut_slice()
        .iter_mut()
        .zip(grads.as_slice())
        .enumerate()
    {
        let g = g * scale;
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
        let m_hat = opt.m[i] / bc1;
        let v_hat = opt.v[i] / bc2;
        *p -= opt.lr * m_hat / (sqrt(v_hat) + opt.eps);
    }
    Ok(StepInfo {
        grad_norm,
        clip_scale: scale,
    })
}
