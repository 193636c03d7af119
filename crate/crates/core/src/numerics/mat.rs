//! Dense row-major matrices and LU factorization.

use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Pivots with magnitude below this are treated as zero.
pub const PIVOT_EPS: f64 = 1e-12;

/// Dense row-major matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl Mat {
    /// Builds a matrix, rejecting shape mismatches and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 || rows * cols != values.len() {
            return Err(NumericsError::Shape(format!(
                "{rows}x{cols} matrix cannot hold {} values",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from rows of equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(NumericsError::Shape("ragged rows".into()));
        }
        let values = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_vec(rows.len(), cols, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, values: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m.values[i * n + i] = *d;
        }
        m
    }

    /// A single-row matrix.
    pub fn row_vector(values: &[f64]) -> Self {
        Self { rows: 1, cols: values.len(), values: values.to_vec() }
    }

    /// Unchecked constructor for internal kernels whose shapes are known.
    pub(crate) fn raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, values.len());
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    /// Matrix product. Panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.cols, other.rows,
            "matmul shape mismatch: {:?} x {:?}",
            self.shape(),
            other.shape()
        );
        let (n, k, m) = (self.rows, self.cols, other.cols);
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let out_row = &mut out[i * m..(i + 1) * m];
            for p in 0..k {
                let a = self.values[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.values[p * m..(p + 1) * m];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Mat::raw(n, m, out)
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(
            self.cols, other.cols,
            "matmul_t shape mismatch: {:?} x {:?}^T",
            self.shape(),
            other.shape()
        );
        let (n, m) = (self.rows, other.rows);
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            let a = self.row(i);
            for j in 0..m {
                out.push(dot(a, other.row(j)));
            }
        }
        Mat::raw(n, m, out)
    }

    /// `self * v` for a column vector given as a slice.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "mul_vec shape mismatch");
        (0..self.rows).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Mat {
        Mat::raw(self.rows, self.cols, self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn zip_map(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
        assert_eq!(self.shape(), other.shape(), "elementwise shape mismatch");
        Mat::raw(
            self.rows,
            self.cols,
            self.values.iter().zip(&other.values).map(|(a, b)| f(*a, *b)).collect(),
        )
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.shape(), other.shape(), "add_assign shape mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn scale(&self, s: f64) -> Mat {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<Lu, NumericsError> {
        if !self.is_square() {
            return Err(NumericsError::NotSquare(self.rows, self.cols));
        }
        if !self.is_finite() {
            return Err(NumericsError::NonFinite("matrix entries"));
        }
        let n = self.rows;
        let mut a = self.values.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for k in 0..n {
            let (pivot_row, pivot_abs) = (k..n)
                .map(|r| (r, a[r * n + k].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot_abs < PIVOT_EPS {
                singular = true;
                continue;
            }
            if pivot_row != k {
                for c in 0..n {
                    a.swap(k * n + c, pivot_row * n + c);
                }
                perm.swap(k, pivot_row);
                sign = -sign;
            }
            let pivot = a[k * n + k];
            for r in k + 1..n {
                let factor = a[r * n + k] / pivot;
                a[r * n + k] = factor;
                if factor != 0.0 {
                    for c in k + 1..n {
                        a[r * n + c] -= factor * a[k * n + c];
                    }
                }
            }
        }
        Ok(Lu { n, factors: a, perm, sign, singular })
    }

    /// Sign and log-magnitude of the determinant.
    ///
    /// A singular matrix yields `(0.0, f64::NEG_INFINITY)`.
    pub fn slogdet(&self) -> Result<(f64, f64), NumericsError> {
        Ok(self.lu()?.slogdet())
    }

    pub fn inverse(&self) -> Result<Mat, NumericsError> {
        let lu = self.lu()?;
        if lu.singular {
            return Err(NumericsError::SingularMatrix);
        }
        let n = self.rows;
        let mut inv = Mat::zeros(n, n);
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = lu.solve(&e);
            for r in 0..n {
                inv.values[r * n + c] = col[r];
            }
        }
        Ok(inv)
    }
}

/// Packed LU factors: `P·A = L·U` with unit-lower `L`.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    factors: Vec<f64>,
    perm: Vec<usize>,
    sign: f64,
    singular: bool,
}

impl Lu {
    pub fn is_singular(&self) -> bool {
        self.singular
    }

    /// Row `i` of `P·A` is row `perm()[i]` of `A`.
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Unit-lower-triangular factor.
    pub fn lower(&self) -> Mat {
        let n = self.n;
        let mut l = Mat::identity(n);
        for r in 0..n {
            for c in 0..r {
                l.set(r, c, self.factors[r * n + c]);
            }
        }
        l
    }

    /// Upper-triangular factor, diagonal included.
    pub fn upper(&self) -> Mat {
        let n = self.n;
        let mut u = Mat::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                u.set(r, c, self.factors[r * n + c]);
            }
        }
        u
    }

    pub fn slogdet(&self) -> (f64, f64) {
        if self.singular {
            return (0.0, f64::NEG_INFINITY);
        }
        let mut sign = self.sign;
        let mut logabs = 0.0;
        for i in 0..self.n {
            let d = self.factors[i * self.n + i];
            if d < 0.0 {
                sign = -sign;
            }
            logabs += d.abs().ln();
        }
        (sign, logabs)
    }

    /// Solves `A·x = b`. Only meaningful for nonsingular factors.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.factors[i * n + j] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.factors[i * n + j] * x[j]).sum();
            x[i] = (x[i] - s) / self.factors[i * n + i];
        }
        x
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn random_mat(rng: &mut RngStream, n: usize) -> Mat {
        let v = (0..n * n).map(|_| rng.next_normal()).collect();
        Mat::from_vec(n, n, v).unwrap()
    }

    #[test]
    fn slogdet_identity() {
        assert_eq!(Mat::identity(3).slogdet().unwrap(), (1.0, 0.0));
    }

    #[test]
    fn slogdet_diagonal() {
        let (s, l) = Mat::from_diag(&[2.0, 3.0]).slogdet().unwrap();
        assert_eq!(s, 1.0);
        assert!((l - 6f64.ln()).abs() < 1e-15);
        assert!((l - 1.791759).abs() < 1e-6);
    }

    #[test]
    fn slogdet_row_swap() {
        let m = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(m.slogdet().unwrap(), (-1.0, 0.0));
    }

    #[test]
    fn slogdet_singular_and_nonsquare() {
        let m = Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(m.slogdet().unwrap(), (0.0, f64::NEG_INFINITY));
        let r = Mat::zeros(2, 3).slogdet();
        assert!(matches!(r, Err(NumericsError::NotSquare(2, 3))));
    }

    #[test]
    fn invert_examples() {
        assert_eq!(Mat::identity(4).inverse().unwrap(), Mat::identity(4));
        let inv = Mat::from_diag(&[2.0, 4.0]).inverse().unwrap();
        assert_eq!(inv, Mat::from_diag(&[0.5, 0.25]));
        let singular = Mat::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(singular.inverse(), Err(NumericsError::SingularMatrix)));
    }

    #[test]
    fn inverse_times_original_is_identity() {
        let mut rng = RngStream::new(11);
        for n in [2, 5, 9] {
            let m = random_mat(&mut rng, n);
            let prod = m.matmul(&m.inverse().unwrap());
            assert!(prod.max_abs_diff(&Mat::identity(n)) < 1e-10 * n as f64);
        }
    }

    #[test]
    fn rejects_non_finite_and_bad_shapes() {
        assert!(Mat::from_vec(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Mat::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(Mat::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn matmul_t_matches_explicit_transpose() {
        let mut rng = RngStream::new(3);
        let a = Mat::from_vec(3, 4, (0..12).map(|_| rng.next_normal()).collect()).unwrap();
        let b = Mat::from_vec(5, 4, (0..20).map(|_| rng.next_normal()).collect()).unwrap();
        assert!(a.matmul_t(&b).max_abs_diff(&a.matmul(&b.transpose())) < 1e-14);
    }
}
