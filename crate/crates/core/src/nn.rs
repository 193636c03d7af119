//! Shared layer building blocks.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::numerics::{Mat, RngStream};

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    /// Gaussian weights with standard deviation `gain / sqrt(fan_in)`.
    Scaled(f64),
}

/// Affine map on row vectors: `y = x·W + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    weight: ParamId,
    bias: ParamId,
    inputs: usize,
    outputs: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        inputs: usize,
        outputs: usize,
        init: Init,
        rng: &mut RngStream,
    ) -> Self {
        let weight = match init {
            Init::Zeros => Mat::zeros(inputs, outputs),
            Init::Scaled(gain) => {
                let std = gain / (inputs as f64).sqrt();
                Mat::raw(inputs, outputs, (0..inputs * outputs).map(|_| std * rng.next_normal()).collect())
            }
        };
        Self {
            weight: store.add(format!("{prefix}.weight"), weight),
            bias: store.add(format!("{prefix}.bias"), Mat::zeros(1, outputs)),
            inputs,
            outputs,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn bias(&self) -> ParamId {
        self.bias
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn apply(&self, store: &ParamStore, x: &Mat) -> Mat {
        let mut y = x.matmul(store.get(self.weight));
        let b = store.get(self.bias).as_slice();
        for r in 0..y.rows() {
            y.row_mut(r).iter_mut().zip(b).for_each(|(v, b)| *v += b);
        }
        y
    }

    pub fn forward_graph(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.weight);
        let b = g.param(self.bias);
        let xw = g.matmul(x, w);
        g.add_row(xw, b)
    }
}
