//! Dense row-major tensors and the handful of kernels the model needs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NnError;

/// A dense real-valued tensor of rank 1 or 2, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NnError> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(NnError::ShapeMismatch {
                expected: len,
                found: data.len(),
                context: "tensor construction",
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform initialization in `[-scale, scale]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], scale: f64, rng: &mut R) -> Self {
        let mut t = Tensor::zeros(shape);
        for v in &mut t.data {
            *v = rng.gen_range(-scale..=scale);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        if self.shape.len() > 1 {
            self.shape[1]
        } else {
            1
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `out += self · x`.
    pub fn matvec_add(&self, x: &[f64], out: &mut [f64]) {
        self.matvec_cols_add(0, x, out);
    }

    /// `out += self[:, offset..offset + x.len()] · x`.
    pub fn matvec_cols_add(&self, offset: usize, x: &[f64], out: &mut [f64]) {
        let c = self.cols();
        debug_assert_eq!(out.len(), self.rows());
        debug_assert!(offset + x.len() <= c);
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * c + offset..r * c + offset + x.len()];
            *o += dot(row, x);
        }
    }

    /// `out += self^T · y`.
    pub fn matvec_t_add(&self, y: &[f64], out: &mut [f64]) {
        self.matvec_t_cols_add(0, y, out);
    }

    /// `out += self[:, offset..offset + out.len()]^T · y`.
    pub fn matvec_t_cols_add(&self, offset: usize, y: &[f64], out: &mut [f64]) {
        let c = self.cols();
        debug_assert_eq!(y.len(), self.rows());
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            let row = &self.data[r * c + offset..r * c + offset + out.len()];
            axpy(yr, row, out);
        }
    }

    /// `self += a ⊗ b` (outer product); `b` lands at column `offset`.
    pub fn add_outer(&mut self, offset: usize, a: &[f64], b: &[f64]) {
        let c = self.cols();
        debug_assert_eq!(a.len(), self.rows());
        for (r, &ar) in a.iter().enumerate() {
            if ar == 0.0 {
                continue;
            }
            let row = &mut self.data[r * c + offset..r * c + offset + b.len()];
            axpy(ar, b, row);
        }
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        axpy(1.0, &other.data, &mut self.data);
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators let the compiler vectorize without reassociating.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose_agree_with_hand_values() {
        let w = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut out = vec![0.0; 2];
        w.matvec_add(&[1.0, 0.0, -1.0], &mut out);
        assert_eq!(out, vec![-2.0, -2.0]);

        let mut back = vec![0.0; 3];
        w.matvec_t_add(&[1.0, 1.0], &mut back);
        assert_eq!(back, vec![5.0, 7.0, 9.0]);

        let mut cols = vec![0.0; 2];
        w.matvec_cols_add(1, &[1.0, 1.0], &mut cols);
        assert_eq!(cols, vec![5.0, 11.0]);
    }

    #[test]
    fn outer_product_accumulates_at_offset() {
        let mut w = Tensor::zeros(&[2, 3]);
        w.add_outer(1, &[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(w.data(), &[0.0, 3.0, 4.0, 0.0, 6.0, 8.0]);
    }

    #[test]
    fn from_vec_rejects_bad_length() {
        assert!(Tensor::from_vec(&[2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..7).map(|v| v as f64).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
