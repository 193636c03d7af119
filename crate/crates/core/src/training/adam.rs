use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore};
use crate::numerics::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one pair per stored parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Mat>,
    pub v: Vec<Mat>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Mat> = params.iter().map(|(_, _, p)| Mat::zeros(p.rows(), p.cols())).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

impl Adam {
    /// One bias-corrected update of the parameters in `trainable`.
    pub fn update(&self, state: &mut AdamState, params: &mut ParamStore, grads: &[Mat], trainable: &[ParamId]) {
        state.step += 1;
        let t = state.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for &id in trainable {
            let i = id.index();
            let g = grads[i].as_slice();
            let m = state.m[i].as_mut_slice();
            let v = state.v[i].as_mut_slice();
            let p = params.get_mut(id).as_mut_slice();
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                p[k] -= self.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}
