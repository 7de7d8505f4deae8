use ndarray::Array2;

use super::ParamSet;
use crate::numerics::RealMatrix;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    m: Vec<RealMatrix>,
    v: Vec<RealMatrix>,
    step: u64,
}

impl OptimizerState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros = || params.iter().map(|t| Array2::zeros(t.value.dim())).collect();
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Clears the gradients afterwards.
pub fn adam_step(params: &mut ParamSet, state: &mut OptimizerState, cfg: &AdamConfig) {
    assert_eq!(state.m.len(), params.len(), "optimizer state does not match parameters");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in params.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        ndarray::Zip::from(&mut p.value)
            .and(&p.grad)
            .and(m)
            .and(v)
            .for_each(|w, &g, m, v| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
            });
    }
    params.clear_grads();
}
