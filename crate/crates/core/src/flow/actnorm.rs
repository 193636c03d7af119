use serde::{Deserialize, Serialize};

use super::{Direction, FlowError};
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::numerics::Mat;

const MIN_STD: f64 = 1e-6;

/// Per-channel affine normalization: `y = (x + bias) * exp(log_scale)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActNorm {
    log_scale: ParamId,
    bias: ParamId,
    dim: usize,
    initialized: bool,
}

impl ActNorm {
    pub fn new(store: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        Self {
            log_scale: store.add(format!("{prefix}.log_scale"), Mat::zeros(1, dim)),
            bias: store.add(format!("{prefix}.bias"), Mat::zeros(1, dim)),
            dim,
            initialized: false,
        }
    }

    pub fn log_scale(&self) -> ParamId {
        self.log_scale
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Marks the current parameter values as final without data.
    pub fn mark_initialized(&mut self) {
        self.initialized = true;
    }

    /// Data-dependent init: the batch maps to zero mean, unit variance per channel.
    pub fn initialize(&mut self, store: &mut ParamStore, batch: &Mat) -> Result<(), FlowError> {
        if batch.cols() != self.dim {
            return Err(FlowError::DimMismatch { expected: self.dim, got: batch.cols() });
        }
        if batch.rows() < 2 {
            return Err(FlowError::BatchTooSmall(batch.rows()));
        }
        let n = batch.rows() as f64;
        let mut bias = vec![0.0; self.dim];
        let mut log_scale = vec![0.0; self.dim];
        for c in 0..self.dim {
            let mean = (0..batch.rows()).map(|r| batch.get(r, c)).sum::<f64>() / n;
            let var = (0..batch.rows()).map(|r| (batch.get(r, c) - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std <= MIN_STD {
                return Err(FlowError::DegenerateChannel(c));
            }
            bias[c] = -mean;
            log_scale[c] = -std.ln();
        }
        *store.get_mut(self.bias) = Mat::row_vector(&bias);
        *store.get_mut(self.log_scale) = Mat::row_vector(&log_scale);
        self.initialized = true;
        Ok(())
    }

    /// Applies the layer to each row of `x`; returns the per-sample log-determinant.
    pub fn apply(&self, store: &ParamStore, x: &Mat, dir: Direction) -> Result<(Mat, f64), FlowError> {
        if !self.initialized {
            return Err(FlowError::Uninitialized);
        }
        if x.cols() != self.dim {
            return Err(FlowError::DimMismatch { expected: self.dim, got: x.cols() });
        }
        let ls = store.get(self.log_scale).as_slice();
        let b = store.get(self.bias).as_slice();
        let mut y = x.clone();
        for r in 0..y.rows() {
            for (c, v) in y.row_mut(r).iter_mut().enumerate() {
                *v = match dir {
                    Direction::Forward => (*v + b[c]) * ls[c].exp(),
                    Direction::Inverse => *v * (-ls[c]).exp() - b[c],
                };
            }
        }
        let logdet: f64 = ls.iter().sum();
        Ok((y, dir.sign() * logdet))
    }

    /// Forward pass on a graph; the log-determinant is a `1×1` node.
    pub fn forward_graph(&self, g: &mut Graph, x: Var) -> (Var, Var) {
        let ls = g.param(self.log_scale);
        let b = g.param(self.bias);
        let shifted = g.add_row(x, b);
        let scale = g.exp(ls);
        let y = g.mul_row(shifted, scale);
        let logdet = g.sum(ls);
        (y, logdet)
    }
}
