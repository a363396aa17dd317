//! Dense row-major f64 matrices, sized for desk-scale networks.
//!
//! Shape mismatches are programmer errors and panic; singularity and
//! non-finite checks surface as [`Error`] where callers can hit them with
//! runtime data.

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Build from row-major data; panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "Matrix::from_vec: data length {} != {rows}x{cols}",
            data.len()
        );
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        assert!(!rows.is_empty(), "Matrix::from_rows: empty");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "Matrix::from_rows: ragged rows");
            data.extend_from_slice(r);
        }
        Matrix {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `self * other`; (r x k)(k x c) -> (r x c).
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.rows,
            "matmul: inner dims {} vs {}",
            self.cols, other.rows
        );
        let mut out = Matrix::zeros(self.rows, other.cols);
        // i-k-j order keeps the inner loop contiguous on both inputs.
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `self * other^T`; (r x k)(c x k)^T -> (r x c). Rows of both operands
    /// are contiguous, so this is the fast path for `X * W^T`.
    pub fn matmul_tb(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.cols, other.cols,
            "matmul_tb: inner dims {} vs {}",
            self.cols, other.cols
        );
        let mut out = Matrix::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            let orow = &mut out.data[i * other.rows..(i + 1) * other.rows];
            for (j, o) in orow.iter_mut().enumerate() {
                *o = dot(arow, other.row(j));
            }
        }
        out
    }

    /// `self^T * other`; (n x r)^T (n x c) -> (r x c). Used for weight
    /// gradients `dY^T * X`.
    pub fn matmul_ta(&self, other: &Matrix) -> Matrix {
        assert_eq!(
            self.rows, other.rows,
            "matmul_ta: inner dims {} vs {}",
            self.rows, other.rows
        );
        let mut out = Matrix::zeros(self.cols, other.cols);
        for n in 0..self.rows {
            let arow = self.row(n);
            let brow = other.row(n);
            for (j, &a) in arow.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let orow = &mut out.data[j * other.cols..(j + 1) * other.cols];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec: dims {} vs {}", self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "add: shape");
        let mut out = self.clone();
        for (o, &b) in out.data.iter_mut().zip(&other.data) {
            *o += b;
        }
        out
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "sub: shape");
        let mut out = self.clone();
        for (o, &b) in out.data.iter_mut().zip(&other.data) {
            *o -= b;
        }
        out
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let mut out = self.clone();
        for o in out.data.iter_mut() {
            *o *= s;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// v^T * self * v for square `self`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        assert_eq!(self.rows, self.cols, "quad_form: square required");
        assert_eq!(self.rows, v.len(), "quad_form: dims");
        let mut acc = 0.0;
        for i in 0..self.rows {
            acc += v[i] * dot(self.row(i), v);
        }
        acc
    }

    /// Gauss-Jordan inverse with partial pivoting. Errors on singular or
    /// non-finite input; intended for the small solver matrices
    /// (action-dimension sized), not for network math.
    pub fn inverse(&self) -> Result<Matrix> {
        assert_eq!(self.rows, self.cols, "inverse: square required");
        self.ensure_finite("Matrix::inverse input")?;
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Matrix::identity(n);
        for col in 0..n {
            let (mut pivot_row, mut pivot_val) = (col, a.get(col, col).abs());
            for r in col + 1..n {
                let v = a.get(r, col).abs();
                if v > pivot_val {
                    pivot_row = r;
                    pivot_val = v;
                }
            }
            if pivot_val < 1e-300 {
                return Err(Error::InvalidArgument(format!(
                    "Matrix::inverse: singular at column {col}"
                )));
            }
            if pivot_row != col {
                swap_rows(&mut a, col, pivot_row);
                swap_rows(&mut inv, col, pivot_row);
            }
            let p = a.get(col, col);
            for j in 0..n {
                let v = a.get(col, j) / p;
                a.set(col, j, v);
                let w = inv.get(col, j) / p;
                inv.set(col, j, w);
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a.get(r, col);
                if f == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let v = a.get(r, j) - f * a.get(col, j);
                    a.set(r, j, v);
                    let w = inv.get(r, j) - f * inv.get(col, j);
                    inv.set(r, j, w);
                }
            }
        }
        inv.ensure_finite("Matrix::inverse result")?;
        Ok(inv)
    }

    /// Errors with context if any entry is NaN or infinite.
    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.data.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }
}

fn swap_rows(m: &mut Matrix, a: usize, b: usize) {
    if a == b {
        return;
    }
    let cols = m.cols;
    let (lo, hi) = (a.min(b), a.max(b));
    let (head, tail) = m.data.split_at_mut(hi * cols);
    head[lo * cols..(lo + 1) * cols].swap_with_slice(&mut tail[..cols]);
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Estimate of the spectral radius of a square matrix via repeated
/// squaring with Frobenius normalization: after k squarings,
/// rho ~ exp(sum 2^-i ln f_i). Accurate to a few decimal places, which is
/// all the stability checks need.
pub fn spectral_radius(m: &Matrix) -> f64 {
    assert_eq!(m.rows(), m.cols(), "spectral_radius: square required");
    let mut cur = m.clone();
    let mut log_rho = 0.0f64;
    let mut weight = 1.0f64;
    for _ in 0..40 {
        cur = cur.matmul(&cur);
        weight *= 0.5;
        let f = cur.frobenius_norm();
        if f == 0.0 {
            return 0.0;
        }
        if !f.is_finite() {
            return f64::INFINITY;
        }
        log_rho += weight * f.ln();
        cur = cur.scale(1.0 / f);
    }
    log_rho.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_hand_example() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let id = Matrix::identity(2);
        assert_eq!(a.matmul(&id), a);
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.25, 3.0, -1.0]]);
        let b = Matrix::from_rows(&[vec![2.0, 1.0], vec![0.0, -1.0], vec![4.0, 0.5]]);
        let direct = a.matmul(&b); // (2x3)(3x2) -> 2x2
        let via_tb = a.matmul_tb(&b.transpose());
        assert_eq!(direct, via_tb);
        let via_ta = a.transpose().matmul_ta(&b); // (A^T)^T B = A B
        assert_eq!(direct, via_ta);
    }

    #[test]
    fn inverse_diagonal() {
        let d = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let inv = d.inverse().unwrap();
        assert_eq!(inv.data(), &[0.5, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn inverse_roundtrip() {
        let m = Matrix::from_rows(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, -1.0],
            vec![0.5, 0.0, 2.0],
        ]);
        let inv = m.inverse().unwrap();
        let prod = m.matmul(&inv);
        let id = Matrix::identity(3);
        for (x, y) in prod.data().iter().zip(id.data()) {
            assert!((x - y).abs() < 1e-12, "roundtrip off: {x} vs {y}");
        }
    }

    #[test]
    fn inverse_singular_errors() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        assert!(m.inverse().is_err());
    }

    #[test]
    fn quad_form_hand() {
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        // [1,2] M [1,2]^T = 2 + 2 + 2 + 12 = 18
        assert_eq!(m.quad_form(&[1.0, 2.0]), 18.0);
    }

    #[test]
    fn spectral_radius_diagonal() {
        let m = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, -0.9]]);
        assert!((spectral_radius(&m) - 0.9).abs() < 1e-3);
    }

    #[test]
    fn spectral_radius_rotation_scaled() {
        // 0.8 * rotation has complex eigenvalues of magnitude exactly 0.8.
        let th = 0.7f64;
        let m = Matrix::from_rows(&[
            vec![0.8 * th.cos(), -0.8 * th.sin()],
            vec![0.8 * th.sin(), 0.8 * th.cos()],
        ]);
        assert!((spectral_radius(&m) - 0.8).abs() < 1e-3);
    }

    #[test]
    fn ensure_finite_catches_nan() {
        let mut m = Matrix::zeros(2, 2);
        m.set(1, 1, f64::NAN);
        assert!(m.ensure_finite("test").is_err());
    }
}
