//! Glow bijection between speaker-embedding space (`x`) and semantic space (`z`).
//!
//! Each block applies actnorm, an invertible linear map and an affine
//! coupling, in that order, when going `x → z`. Log-determinants are exact in
//! both directions.

mod actnorm;
mod coupling;
mod invlinear;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use actnorm::ActNorm;
pub use coupling::{Coupling, LOG_SCALE_CLAMP};
pub use invlinear::InvLinear;

use crate::autodiff::{Graph, ParamStore, Var};
use crate::numerics::{Mat, NumericsError, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Inverse => -1.0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("actnorm used before initialization")]
    Uninitialized,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("coupling needs an even dimension, got {0}")]
    OddDimension(usize),
    #[error("actnorm channel {0} is constant over the init batch")]
    DegenerateChannel(usize),
    #[error("actnorm init needs at least 2 samples, got {0}")]
    BatchTooSmall(usize),
    #[error("flow must have at least one block")]
    NoBlocks,
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub dim: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    /// Coupling conditioner width; `None` means the flow dimension.
    #[serde(default)]
    pub hidden: Option<usize>,
}

fn default_blocks() -> usize {
    12
}

impl FlowConfig {
    pub fn new(dim: usize, blocks: usize) -> Self {
        Self { dim, blocks, hidden: None }
    }

    pub fn hidden_width(&self) -> usize {
        self.hidden.unwrap_or(self.dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowBlock {
    pub actnorm: ActNorm,
    pub linear: InvLinear,
    pub coupling: Coupling,
}

/// Block structure of a flow; parameter values live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    config: FlowConfig,
    blocks: Vec<FlowBlock>,
}

impl Flow {
    /// Random-rotation linear layers, identity couplings, actnorm awaiting data.
    pub fn new(store: &mut ParamStore, config: FlowConfig, rng: &mut RngStream) -> Result<Self, FlowError> {
        Self::build(store, config, rng, true)
    }

    /// A flow whose every layer is the identity map.
    pub fn identity(store: &mut ParamStore, config: FlowConfig, rng: &mut RngStream) -> Result<Self, FlowError> {
        let mut flow = Self::build(store, config, rng, false)?;
        flow.blocks.iter_mut().for_each(|b| b.actnorm.mark_initialized());
        Ok(flow)
    }

    fn build(
        store: &mut ParamStore,
        config: FlowConfig,
        rng: &mut RngStream,
        rotate: bool,
    ) -> Result<Self, FlowError> {
        if config.blocks == 0 {
            return Err(FlowError::NoBlocks);
        }
        if config.dim < 2 || config.dim % 2 != 0 {
            return Err(FlowError::OddDimension(config.dim));
        }
        let dim = config.dim;
        let blocks = (0..config.blocks)
            .map(|i| {
                let prefix = format!("flow.{i}");
                let actnorm = ActNorm::new(store, &format!("{prefix}.actnorm"), dim);
                let linear = if rotate {
                    InvLinear::random_rotation(store, &format!("{prefix}.linear"), dim, rng)?
                } else {
                    InvLinear::identity(store, &format!("{prefix}.linear"), dim)
                };
                let coupling = Coupling::new(
                    store,
                    &format!("{prefix}.coupling"),
                    dim,
                    config.hidden_width(),
                    i % 2 == 1,
                    rng,
                )?;
                Ok(FlowBlock { actnorm, linear, coupling })
            })
            .collect::<Result<_, FlowError>>()?;
        Ok(Self { config, blocks })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn blocks(&self) -> &[FlowBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [FlowBlock] {
        &mut self.blocks
    }

    pub fn is_initialized(&self) -> bool {
        self.blocks.iter().all(|b| b.actnorm.is_initialized())
    }

    /// Data-dependent actnorm init, block by block, on the batch's activations.
    pub fn initialize(&mut self, store: &mut ParamStore, batch: &Mat) -> Result<(), FlowError> {
        let mut x = batch.clone();
        for block in &mut self.blocks {
            if !block.actnorm.is_initialized() {
                block.actnorm.initialize(store, &x)?;
            }
            x = apply_block(block, store, &x, Direction::Forward)?.0;
        }
        Ok(())
    }

    /// `x → z` for every row, with per-row log|det J|.
    pub fn forward(&self, store: &ParamStore, x: &Mat) -> Result<(Mat, Vec<f64>), FlowError> {
        self.check_dim(x)?;
        let mut logdet = vec![0.0; x.rows()];
        let mut h = x.clone();
        for block in &self.blocks {
            let (next, ld) = apply_block(block, store, &h, Direction::Forward)?;
            logdet.iter_mut().zip(ld).for_each(|(a, b)| *a += b);
            h = next;
        }
        Ok((h, logdet))
    }

    /// `z → x` for every row, with per-row log|det| of the inverse map.
    pub fn inverse(&self, store: &ParamStore, z: &Mat) -> Result<(Mat, Vec<f64>), FlowError> {
        self.check_dim(z)?;
        let mut logdet = vec![0.0; z.rows()];
        let mut h = z.clone();
        for block in self.blocks.iter().rev() {
            let (next, ld) = apply_block(block, store, &h, Direction::Inverse)?;
            logdet.iter_mut().zip(ld).for_each(|(a, b)| *a += b);
            h = next;
        }
        Ok((h, logdet))
    }

    pub fn forward_vec(&self, store: &ParamStore, x: &[f64]) -> Result<(Vec<f64>, f64), FlowError> {
        let (z, ld) = self.forward(store, &Mat::row_vector(x))?;
        Ok((z.into_vec(), ld[0]))
    }

    pub fn inverse_vec(&self, store: &ParamStore, z: &[f64]) -> Result<Vec<f64>, FlowError> {
        Ok(self.inverse(store, &Mat::row_vector(z))?.0.into_vec())
    }

    /// Differentiable `x → z`; returns `z` and an `n×1` log-determinant column.
    pub fn forward_graph(&self, g: &mut Graph, x: Var) -> (Var, Var) {
        let mut h = x;
        let mut shared: Option<Var> = None;
        let mut per_row: Option<Var> = None;
        for block in &self.blocks {
            let (a, ld_a) = block.actnorm.forward_graph(g, h);
            let (b, ld_b) = block.linear.forward_graph(g, a);
            let (c, ld_c) = block.coupling.forward_graph(g, b);
            let block_shared = g.add(ld_a, ld_b);
            shared = Some(match shared {
                Some(s) => g.add(s, block_shared),
                None => block_shared,
            });
            per_row = Some(match per_row {
                Some(p) => g.add(p, ld_c),
                None => ld_c,
            });
            h = c;
        }
        let logdet = g.add_scalar(per_row.expect("at least one block"), shared.expect("at least one block"));
        (h, logdet)
    }

    fn check_dim(&self, x: &Mat) -> Result<(), FlowError> {
        if x.cols() != self.config.dim {
            return Err(FlowError::DimMismatch { expected: self.config.dim, got: x.cols() });
        }
        if !self.is_initialized() {
            return Err(FlowError::Uninitialized);
        }
        Ok(())
    }
}

/// One block in the given direction; inverse runs the layers in reverse order.
pub fn apply_block(
    block: &FlowBlock,
    store: &ParamStore,
    x: &Mat,
    dir: Direction,
) -> Result<(Mat, Vec<f64>), FlowError> {
    let (y, ld) = match dir {
        Direction::Forward => {
            let (a, la) = block.actnorm.apply(store, x, dir)?;
            let (b, lb) = block.linear.apply(store, &a, dir)?;
            let (c, lc) = block.coupling.apply(store, &b, dir)?;
            (c, lc.into_iter().map(|l| l + la + lb).collect::<Vec<_>>())
        }
        Direction::Inverse => {
            let (c, lc) = block.coupling.apply(store, x, dir)?;
            let (b, lb) = block.linear.apply(store, &c, dir)?;
            let (a, la) = block.actnorm.apply(store, &b, dir)?;
            (a, lc.into_iter().map(|l| l + la + lb).collect::<Vec<_>>())
        }
    };
    Ok((y, ld))
}
