//! Linear algebra, random streams, densities and the finite-difference oracle.

mod mat;
mod rng;

use thiserror::Error;

pub use mat::{dot, Lu, Mat, PIVOT_EPS};
pub use rng::RngStream;

/// Default central-difference step for unit-scale inputs.
pub const FD_EPS: f64 = 1e-4;

const ZERO_NORM: f64 = 1e-12;
const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("expected a square matrix, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("singular matrix (pivot magnitude below {PIVOT_EPS:e})")]
    SingularMatrix,
    #[error("shape error: {0}")]
    Shape(String),
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("zero vector (norm below {ZERO_NORM:e})")]
    ZeroVector,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Log density of a diagonal Gaussian parameterized by log-variance.
pub fn gaussian_logpdf(x: &[f64], mean: &[f64], logvar: &[f64]) -> Result<f64, NumericsError> {
    if x.len() != mean.len() {
        return Err(NumericsError::DimMismatch(x.len(), mean.len()));
    }
    if x.len() != logvar.len() {
        return Err(NumericsError::DimMismatch(x.len(), logvar.len()));
    }
    let lp: f64 = x
        .iter()
        .zip(mean)
        .zip(logvar)
        .map(|((x, m), lv)| -HALF_LN_TAU - 0.5 * lv - 0.5 * (x - m).powi(2) * (-lv).exp())
        .sum();
    if lp.is_finite() {
        Ok(lp)
    } else {
        Err(NumericsError::NonFinite("gaussian log density"))
    }
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `1 - cos(v1, v2)`, in `[0, 2]`.
pub fn cosine_distance(v1: &[f64], v2: &[f64]) -> Result<f64, NumericsError> {
    if v1.len() != v2.len() {
        return Err(NumericsError::DimMismatch(v1.len(), v2.len()));
    }
    let (n1, n2) = (norm(v1), norm(v2));
    if n1 < ZERO_NORM || n2 < ZERO_NORM {
        return Err(NumericsError::ZeroVector);
    }
    // sqrt(s * s) == s exactly, so identical vectors give exactly zero.
    let cos = dot(v1, v2) / (dot(v1, v1) * dot(v2, v2)).sqrt();
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_diff_grad<F>(f: F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let plus = f(&probe);
            probe[i] = x[i] - eps;
            let minus = f(&probe);
            probe[i] = x[i];
            (plus - minus) / (2.0 * eps)
        })
        .collect()
}

/// Jacobian of a vector map by central differences; row `i` holds `d f_i / d x`.
pub fn finite_diff_jacobian<F>(f: F, x: &[f64], eps: f64) -> Mat
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = x.len();
    let mut probe = x.to_vec();
    let mut jac = Mat::zeros(f(x).len(), n);
    for j in 0..n {
        probe[j] = x[j] + eps;
        let plus = f(&probe);
        probe[j] = x[j] - eps;
        let minus = f(&probe);
        probe[j] = x[j];
        for (i, (p, m)) in plus.iter().zip(&minus).enumerate() {
            jac.set(i, j, (p - m) / (2.0 * eps));
        }
    }
    jac
}

pub fn standard_normal(rng: &mut RngStream, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.next_normal()).collect()
}

/// Element-wise arithmetic mean of equal-length vectors.
pub fn mean_vector<V: AsRef<[f64]>>(vs: &[V]) -> Option<Vec<f64>> {
    let first = vs.first()?.as_ref();
    let mut acc = vec![0.0; first.len()];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v.as_ref()) {
            *a += x;
        }
    }
    let n = vs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Some(acc)
}
