use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major 2-D array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

/// Whether an operand enters a product as-is or transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trans {
    No,
    Yes,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("Matrix::from_vec", rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::dim("Matrix::from_rows", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Single column matrix.
    pub fn column(values: &[S]) -> Self {
        Matrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: S) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn col(&self, c: usize) -> Vec<S> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Horizontal concatenation.
    pub fn hstack(parts: &[&Matrix<S>]) -> Result<Self> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::dim("Matrix::hstack", rows, bad.rows));
        }
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            let dst = out.row_mut(r);
            for m in parts {
                dst[off..off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        Ok(out)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(parts: &[&Matrix<S>]) -> Result<Self> {
        let cols = parts.first().map_or(0, |m| m.cols);
        if let Some(bad) = parts.iter().find(|m| m.cols != cols) {
            return Err(Error::dim("Matrix::vstack", cols, bad.cols));
        }
        let mut data = Vec::with_capacity(parts.iter().map(|m| m.data.len()).sum());
        for m in parts {
            data.extend_from_slice(&m.data);
        }
        Ok(Matrix {
            rows: parts.iter().map(|m| m.rows).sum(),
            cols,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self = alpha * op(a) * op(b) + beta * self`.
    pub fn gemm(
        &mut self,
        alpha: S,
        a: &Matrix<S>,
        ta: Trans,
        b: &Matrix<S>,
        tb: Trans,
        beta: S,
    ) -> Result<()> {
        let (m, k, rsa, csa) = match ta {
            Trans::No => (a.rows, a.cols, a.cols as isize, 1),
            Trans::Yes => (a.cols, a.rows, 1, a.cols as isize),
        };
        let (kb, n, rsb, csb) = match tb {
            Trans::No => (b.rows, b.cols, b.cols as isize, 1),
            Trans::Yes => (b.cols, b.rows, 1, b.cols as isize),
        };
        if k != kb {
            return Err(Error::dim("gemm inner dimension", k, kb));
        }
        if self.rows != m || self.cols != n {
            return Err(Error::dim("gemm output", m * n, self.rows * self.cols));
        }
        if m == 0 || n == 0 {
            return Ok(());
        }
        if k == 0 {
            for v in &mut self.data {
                *v *= beta;
            }
            return Ok(());
        }
        // SAFETY: shapes and strides were validated above; `self` is a
        // distinct allocation from `a` and `b` because it is borrowed mutably.
        unsafe {
            S::gemm(
                m,
                k,
                n,
                alpha,
                a.data.as_ptr(),
                rsa,
                csa,
                b.data.as_ptr(),
                rsb,
                csb,
                beta,
                self.data.as_mut_ptr(),
                n as isize,
                1,
            );
        }
        Ok(())
    }

    /// `op(a) * op(b)` into a fresh matrix.
    pub fn product(a: &Matrix<S>, ta: Trans, b: &Matrix<S>, tb: Trans) -> Result<Self> {
        let m = if ta == Trans::No { a.rows } else { a.cols };
        let n = if tb == Trans::No { b.cols } else { b.rows };
        let mut out = Matrix::zeros(m, n);
        out.gemm(S::one(), a, ta, b, tb, S::zero())?;
        Ok(out)
    }

    /// Adds `bias` to every row.
    pub fn add_row_vector(&mut self, bias: &[S]) {
        debug_assert_eq!(bias.len(), self.cols);
        for r in 0..self.rows {
            for (v, &b) in self.row_mut(r).iter_mut().zip(bias) {
                *v += b;
            }
        }
    }

    /// Column sums.
    pub fn sum_rows(&self) -> Vec<S> {
        let mut acc = vec![S::zero(); self.cols];
        for r in 0..self.rows {
            for (a, &v) in acc.iter_mut().zip(self.row(r)) {
                *a += v;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_matches_hand_computation() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![5.0, 6.0], vec![7.0, 8.0]]).unwrap();
        let ab = Matrix::product(&a, Trans::No, &b, Trans::No).unwrap();
        assert_eq!(ab.data(), &[19.0, 22.0, 43.0, 50.0]);
        let atb = Matrix::product(&a, Trans::Yes, &b, Trans::No).unwrap();
        assert_eq!(atb.data(), &[26.0, 30.0, 38.0, 44.0]);
        let abt = Matrix::product(&a, Trans::No, &b, Trans::Yes).unwrap();
        assert_eq!(abt.data(), &[17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = Matrix::<f64>::zeros(2, 3);
        let b = Matrix::<f64>::zeros(2, 3);
        assert!(Matrix::product(&a, Trans::No, &b, Trans::No).is_err());
        assert!(Matrix::from_vec(2, 2, vec![1.0f64; 3]).is_err());
    }

    #[test]
    fn hstack_concatenates_columns() {
        let a = Matrix::column(&[1.0f32, 2.0]);
        let b = Matrix::from_rows(&[vec![3.0f32, 4.0], vec![5.0, 6.0]]).unwrap();
        let h = Matrix::hstack(&[&a, &b]).unwrap();
        assert_eq!(h.row(1), &[2.0, 5.0, 6.0]);
    }
}
