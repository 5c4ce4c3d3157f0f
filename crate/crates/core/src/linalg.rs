//! Row-major dense matrices with row-parallel kernels. Every output row is reduced in a
//! fixed order, so results do not depend on the thread count.

use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length");
        Self { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let m = other.cols;
        let mut out = Mat::zeros(self.rows, m);
        if m == 0 {
            return out;
        }
        out.data
            .par_chunks_mut(m)
            .zip(self.data.par_chunks(self.cols.max(1)))
            .for_each(|(o, a)| {
                for (k, &x) in a.iter().enumerate() {
                    if x != 0.0 {
                        o.iter_mut().zip(other.row(k)).for_each(|(oo, b)| *oo += x * b);
                    }
                }
            });
        out
    }

    /// `self^T * other`.
    pub fn t_matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "t_matmul shared dimension");
        self.transpose().matmul(other)
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_t inner dimension");
        let k = other.rows;
        let mut out = Mat::zeros(self.rows, k);
        if k == 0 {
            return out;
        }
        out.data
            .par_chunks_mut(k)
            .zip(self.data.par_chunks(self.cols.max(1)))
            .for_each(|(o, a)| {
                for (j, oo) in o.iter_mut().enumerate() {
                    *oo = dot(a, other.row(j));
                }
            });
        out
    }

    pub fn add_row_vector(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.cols);
        for row in self.data.chunks_exact_mut(self.cols.max(1)) {
            row.iter_mut().zip(v).for_each(|(x, b)| *x += b);
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.data.len(), other.data.len());
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols.max(1)) {
            out.iter_mut().zip(row).for_each(|(o, x)| *o += x);
        }
        out
    }

    /// Stacks `self` on top of `other`.
    pub fn vstack(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Mat::from_vec(self.rows + other.rows, self.cols, data)
    }

    pub fn split_rows(&self, at: usize) -> (Mat, Mat) {
        let (a, b) = self.data.split_at(at * self.cols);
        (
            Mat::from_vec(at, self.cols, a.to_vec()),
            Mat::from_vec(self.rows - at, self.cols, b.to_vec()),
        )
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
