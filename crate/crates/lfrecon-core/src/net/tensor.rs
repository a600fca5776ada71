//! Minimal dense containers for the regressor: an NCHW activation tensor
//! and a row-major matrix. Both are thin wrappers over `Vec` with shape
//! bookkeeping; all layer math lives in [`super::layers`].

use crate::error::{Error, Result};

use super::real::Real;

/// Activation tensor, NCHW layout, contiguous row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor4 {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::ShapeMismatch(format!(
                "tensor data length {} != {n}x{c}x{h}x{w}",
                data.len()
            )));
        }
        Ok(Tensor4 { n, c, h, w, data })
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    /// Offset of element (n, c, y, x).
    #[inline]
    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    /// One sample as a contiguous `[C][H][W]` slice.
    #[inline]
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.c * self.plane();
        &self.data[n * len..(n + 1) * len]
    }

    #[inline]
    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.c * self.plane();
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Row-major matrix (used for FC activations and weights).
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "matrix data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut T {
        &mut self.data[r * self.cols + c]
    }

    /// `self · other` (row-major GEMM).
    pub fn matmul(&self, other: &Mat<T>) -> Result<Mat<T>> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch(format!(
                "matmul {}x{} · {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Mat::zeros(self.rows, other.cols);
        T::gemm(
            self.rows,
            self.cols,
            other.cols,
            T::one(),
            &self.data,
            &other.data,
            T::zero(),
            &mut out.data,
        );
        Ok(out)
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_indexing_is_nchw() {
        let mut t = Tensor4::<f64>::zeros(2, 3, 4, 5);
        let p = t.idx(1, 2, 3, 4);
        t.data[p] = 7.0;
        assert_eq!(t.data[((1 * 3 + 2) * 4 + 3) * 5 + 4], 7.0);
        assert_eq!(t.sample(1).len(), 3 * 4 * 5);
    }

    #[test]
    fn bad_shapes_rejected() {
        assert!(Tensor4::<f32>::from_vec(1, 1, 2, 2, vec![0.0; 3]).is_err());
        assert!(Mat::<f32>::from_vec(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn matmul_and_transpose_agree_with_hand_case() {
        let a = Mat::from_vec(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data, vec![58.0, 64.0, 139.0, 154.0]);
        let at = a.transpose();
        assert_eq!(at.rows, 3);
        assert_eq!(at.at(0, 1), 4.0);
        assert!(a.matmul(&a).is_err());
    }
}
