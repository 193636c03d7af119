use serde::{Deserialize, Serialize};

use super::{Direction, FlowError};
use crate::autodiff::{Graph, ParamStore, Var};
use crate::nn::{Init, Linear};
use crate::numerics::{Mat, RngStream};

/// Bound applied to the raw log-scale before exponentiation.
pub const LOG_SCALE_CLAMP: f64 = 4.0;

/// Affine coupling: one half of the channels conditions a scale and shift
/// applied to the other half.
///
/// The conditioner is four pointwise layers `d/2 → h → h → h → d` with tanh
/// between them. Its last layer starts at zero, so a fresh coupling is the
/// identity. With `flip` set the halves trade roles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    layers: Vec<Linear>,
    dim: usize,
    flip: bool,
}

impl Coupling {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        hidden: usize,
        flip: bool,
        rng: &mut RngStream,
    ) -> Result<Self, FlowError> {
        if dim < 2 || dim % 2 != 0 {
            return Err(FlowError::OddDimension(dim));
        }
        let half = dim / 2;
        let widths = [half, hidden, hidden, hidden, dim];
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let init = if i == widths.len() - 2 { Init::Zeros } else { Init::Scaled(1.0) };
                Linear::new(store, &format!("{prefix}.net.{i}"), w[0], w[1], init, rng)
            })
            .collect();
        Ok(Self { layers, dim, flip })
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    fn halves(&self) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let half = self.dim / 2;
        if self.flip {
            (half..self.dim, 0..half)
        } else {
            (0..half, half..self.dim)
        }
    }

    /// Conditioner output split into clamped log-scale and shift.
    fn conditioner(&self, store: &ParamStore, cond: &Mat) -> (Mat, Mat) {
        let mut h = cond.clone();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(store, &h);
            if i < last {
                h = h.map(f64::tanh);
            }
        }
        let half = self.dim / 2;
        let mut log_scale = Mat::zeros(h.rows(), half);
        let mut shift = Mat::zeros(h.rows(), half);
        for r in 0..h.rows() {
            for c in 0..half {
                log_scale.set(r, c, h.get(r, c).clamp(-LOG_SCALE_CLAMP, LOG_SCALE_CLAMP));
                shift.set(r, c, h.get(r, half + c));
            }
        }
        (log_scale, shift)
    }

    /// Returns transformed rows and one log-determinant per row.
    pub fn apply(&self, store: &ParamStore, x: &Mat, dir: Direction) -> Result<(Mat, Vec<f64>), FlowError> {
        if x.cols() != self.dim {
            return Err(FlowError::DimMismatch { expected: self.dim, got: x.cols() });
        }
        let (keep, change) = self.halves();
        let cond = gather_cols(x, keep);
        let (log_scale, shift) = self.conditioner(store, &cond);
        let mut y = x.clone();
        let mut logdets = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let (ls, t) = (log_scale.row(r), shift.row(r));
            let row = y.row_mut(r);
            for (k, c) in change.clone().enumerate() {
                row[c] = match dir {
                    Direction::Forward => row[c] * ls[k].exp() + t[k],
                    Direction::Inverse => (row[c] - t[k]) * (-ls[k]).exp(),
                };
            }
            logdets.push(dir.sign() * ls.iter().sum::<f64>());
        }
        Ok((y, logdets))
    }

    /// Forward pass on a graph; the log-determinant is an `n×1` column.
    pub fn forward_graph(&self, g: &mut Graph, x: Var) -> (Var, Var) {
        let half = self.dim / 2;
        let (keep, change) = self.halves();
        let cond = g.slice_cols(x, keep.start, keep.end);
        let target = g.slice_cols(x, change.start, change.end);
        let mut h = cond;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward_graph(g, h);
            if i < last {
                h = g.tanh(h);
            }
        }
        let raw = g.slice_cols(h, 0, half);
        let log_scale = g.clamp(raw, -LOG_SCALE_CLAMP, LOG_SCALE_CLAMP);
        let shift = g.slice_cols(h, half, self.dim);
        let scale = g.exp(log_scale);
        let scaled = g.mul(target, scale);
        let moved = g.add(scaled, shift);
        let y = if self.flip { g.concat_cols(&[moved, cond]) } else { g.concat_cols(&[cond, moved]) };
        let logdet = g.sum_cols(log_scale);
        (y, logdet)
    }
}

fn gather_cols(x: &Mat, cols: std::ops::Range<usize>) -> Mat {
    let width = cols.len();
    let mut out = Vec::with_capacity(x.rows() * width);
    for r in 0..x.rows() {
        out.extend_from_slice(&x.row(r)[cols.clone()]);
    }
    Mat::raw(x.rows(), width, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_jacobian, FD_EPS};

    fn randomized(dim: usize, flip: bool, seed: u64) -> (ParamStore, Coupling) {
        let mut rng = RngStream::new(seed);
        let mut store = ParamStore::new();
        let layer = Coupling::new(&mut store, "c", dim, dim, flip, &mut rng).unwrap();
        let last = layer.layers().last().unwrap().clone();
        for id in [last.weight(), last.bias()] {
            for v in store.get_mut(id).as_mut_slice() {
                *v = 0.3 * rng.next_normal();
            }
        }
        (store, layer)
    }

    #[test]
    fn zero_init_is_identity() {
        let mut store = ParamStore::new();
        let layer = Coupling::new(&mut store, "c", 4, 8, false, &mut RngStream::new(0)).unwrap();
        let x = Mat::row_vector(&[0.5, -1.0, 2.0, 3.0]);
        let (y, ld) = layer.apply(&store, &x, Direction::Forward).unwrap();
        assert_eq!(y, x);
        assert_eq!(ld, vec![0.0]);
    }

    #[test]
    fn odd_dimension_rejected() {
        let mut store = ParamStore::new();
        let err = Coupling::new(&mut store, "c", 5, 8, false, &mut RngStream::new(0));
        assert_eq!(err.unwrap_err(), FlowError::OddDimension(5));
    }

    #[test]
    fn round_trip_both_orientations() {
        for flip in [false, true] {
            let (store, layer) = randomized(8, flip, 3);
            let mut rng = RngStream::new(17);
            let x = Mat::from_vec(20, 8, (0..160).map(|_| rng.next_normal()).collect()).unwrap();
            let (y, fwd) = layer.apply(&store, &x, Direction::Forward).unwrap();
            let (back, inv) = layer.apply(&store, &y, Direction::Inverse).unwrap();
            assert!(back.max_abs_diff(&x) <= 1e-10);
            for (a, b) in fwd.iter().zip(&inv) {
                assert!((a + b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn logdet_matches_numerical_jacobian() {
        for flip in [false, true] {
            let (store, layer) = randomized(4, flip, 9);
            let x = [0.4, -0.3, 0.9, -1.2];
            let f = |v: &[f64]| {
                layer.apply(&store, &Mat::row_vector(v), Direction::Forward).unwrap().0.into_vec()
            };
            let (_, numeric) = finite_diff_jacobian(f, &x, FD_EPS).slogdet().unwrap();
            let (_, ld) = layer.apply(&store, &Mat::row_vector(&x), Direction::Forward).unwrap();
            assert!((numeric - ld[0]).abs() < 1e-4, "{numeric} vs {}", ld[0]);
        }
    }

    #[test]
    fn graph_forward_matches_direct() {
        let (store, layer) = randomized(6, true, 2);
        let mut rng = RngStream::new(4);
        let x = Mat::from_vec(3, 6, (0..18).map(|_| rng.next_normal()).collect()).unwrap();
        let (direct, ld) = layer.apply(&store, &x, Direction::Forward).unwrap();
        let mut g = Graph::new(&store);
        let xv = g.leaf(x);
        let (y, gld) = layer.forward_graph(&mut g, xv);
        assert!(g.value(y).max_abs_diff(&direct) < 1e-12);
        for (r, l) in ld.iter().enumerate() {
            assert!((g.value(gld).get(r, 0) - l).abs() < 1e-12);
        }
    }
}
