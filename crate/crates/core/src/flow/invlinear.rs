use serde::{Deserialize, Serialize};

use super::{Direction, FlowError};
use crate::autodiff::{Graph, ParamId, ParamStore, Var};
use crate::numerics::{Mat, NumericsError, RngStream};

/// Invertible channel-mixing map `W = Q·L·(U + diag(sign·exp(log_s)))`.
///
/// `Q` is a fixed permutation (`W` row `perm[i]` is row `i` of `L·U`), `L` is
/// unit lower triangular and `U` strictly upper triangular. Only the strict
/// triangles of the stored `lower`/`upper` matrices are read, so `W` stays
/// invertible for any parameter values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvLinear {
    lower: ParamId,
    upper: ParamId,
    log_s: ParamId,
    perm: Vec<usize>,
    sign: Vec<f64>,
}

impl InvLinear {
    /// Identity parameterization.
    pub fn identity(store: &mut ParamStore, prefix: &str, dim: usize) -> Self {
        Self {
            lower: store.add(format!("{prefix}.lower"), Mat::zeros(dim, dim)),
            upper: store.add(format!("{prefix}.upper"), Mat::zeros(dim, dim)),
            log_s: store.add(format!("{prefix}.log_s"), Mat::zeros(1, dim)),
            perm: (0..dim).collect(),
            sign: vec![1.0; dim],
        }
    }

    /// Starts from the LU factors of a random rotation.
    pub fn random_rotation(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        rng: &mut RngStream,
    ) -> Result<Self, NumericsError> {
        let lu = random_orthogonal(dim, rng).lu()?;
        let upper = lu.upper();
        let mut strict = upper.clone();
        let mut log_s = vec![0.0; dim];
        let mut sign = vec![1.0; dim];
        for i in 0..dim {
            let d = upper.get(i, i);
            log_s[i] = d.abs().ln();
            sign[i] = d.signum();
            strict.set(i, i, 0.0);
        }
        Ok(Self {
            lower: store.add(format!("{prefix}.lower"), lu.lower()),
            upper: store.add(format!("{prefix}.upper"), strict),
            log_s: store.add(format!("{prefix}.log_s"), Mat::row_vector(&log_s)),
            perm: lu.perm().to_vec(),
            sign,
        })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn lower(&self) -> ParamId {
        self.lower
    }

    pub fn upper(&self) -> ParamId {
        self.upper
    }

    pub fn log_s(&self) -> ParamId {
        self.log_s
    }

    pub fn sign(&self) -> &[f64] {
        &self.sign
    }

    /// Materializes `W`.
    pub fn weight(&self, store: &ParamStore) -> Mat {
        let n = self.dim();
        let mut w = Mat::zeros(n, n);
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = self.forward_row(store, &e);
            for r in 0..n {
                w.set(r, c, col[r]);
            }
        }
        w
    }

    fn forward_row(&self, store: &ParamStore, x: &[f64]) -> Vec<f64> {
        let (lower, upper) = (store.get(self.lower), store.get(self.upper));
        let log_s = store.get(self.log_s).as_slice();
        let n = self.dim();
        let u: Vec<f64> = (0..n)
            .map(|i| {
                let strict: f64 = (i + 1..n).map(|j| upper.get(i, j) * x[j]).sum();
                self.sign[i] * log_s[i].exp() * x[i] + strict
            })
            .collect();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let below: f64 = (0..i).map(|j| lower.get(i, j) * u[j]).sum();
            y[self.perm[i]] = u[i] + below;
        }
        y
    }

    fn inverse_row(&self, store: &ParamStore, y: &[f64]) -> Vec<f64> {
        let (lower, upper) = (store.get(self.lower), store.get(self.upper));
        let log_s = store.get(self.log_s).as_slice();
        let n = self.dim();
        let mut u: Vec<f64> = self.perm.iter().map(|&p| y[p]).collect();
        for i in 0..n {
            let below: f64 = (0..i).map(|j| lower.get(i, j) * u[j]).sum();
            u[i] -= below;
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let strict: f64 = (i + 1..n).map(|j| upper.get(i, j) * x[j]).sum();
            x[i] = (u[i] - strict) / (self.sign[i] * log_s[i].exp());
        }
        x
    }

    pub fn logdet(&self, store: &ParamStore) -> f64 {
        store.get(self.log_s).sum()
    }

    pub fn apply(&self, store: &ParamStore, x: &Mat, dir: Direction) -> Result<(Mat, f64), FlowError> {
        if x.cols() != self.dim() {
            return Err(FlowError::DimMismatch { expected: self.dim(), got: x.cols() });
        }
        let mut out = Vec::with_capacity(x.rows() * x.cols());
        for r in 0..x.rows() {
            out.extend(match dir {
                Direction::Forward => self.forward_row(store, x.row(r)),
                Direction::Inverse => self.inverse_row(store, x.row(r)),
            });
        }
        let y = Mat::raw(x.rows(), x.cols(), out);
        Ok((y, dir.sign() * self.logdet(store)))
    }

    pub fn forward_graph(&self, g: &mut Graph, x: Var) -> (Var, Var) {
        let n = self.dim();
        let (lower_mask, upper_mask) = strict_masks(n);
        let lower = g.param(self.lower);
        let upper = g.param(self.upper);
        let log_s = g.param(self.log_s);

        let lower = g.mul_const(lower, lower_mask);
        let lower = g.offset(lower, &Mat::identity(n));
        let magnitude = g.exp(log_s);
        let diag = g.mul_const(magnitude, Mat::row_vector(&self.sign));
        let diag = g.diag(diag);
        let upper = g.mul_const(upper, upper_mask);
        let upper = g.add(upper, diag);
        let lu = g.matmul(lower, upper);
        let mut q = Mat::zeros(n, n);
        for (i, &p) in self.perm.iter().enumerate() {
            q.set(p, i, 1.0);
        }
        let q = g.leaf(q);
        let w = g.matmul(q, lu);
        let y = g.matmul_t(x, w);
        let logdet = g.sum(log_s);
        (y, logdet)
    }
}

fn strict_masks(n: usize) -> (Mat, Mat) {
    let mut lower = Mat::zeros(n, n);
    let mut upper = Mat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            if c < r {
                lower.set(r, c, 1.0);
            } else if c > r {
                upper.set(r, c, 1.0);
            }
        }
    }
    (lower, upper)
}

/// Gram-Schmidt orthonormalization of a Gaussian matrix.
fn random_orthogonal(n: usize, rng: &mut RngStream) -> Mat {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut v: Vec<f64> = (0..n).map(|_| rng.next_normal()).collect();
        for r in &rows {
            let proj = crate::numerics::dot(&v, r);
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= proj * b);
        }
        let len = crate::numerics::norm(&v);
        if len > 1e-6 {
            rows.push(v.iter().map(|a| a / len).collect());
        }
    }
    Mat::from_rows(&rows).expect("finite orthonormal rows")
}
