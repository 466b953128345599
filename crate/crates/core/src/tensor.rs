//! Dense `(batch, channels, length)` tensors backing the network.
//!
//! Values are f64; parallel kernels only ever split work along disjoint
//! output rows, so results do not depend on thread count or scheduling.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    batch: usize,
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(batch: usize, channels: usize, len: usize) -> Self {
        Self { batch, channels, len, data: vec![0.0; batch * channels * len] }
    }

    pub fn from_vec(batch: usize, channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != batch * channels * len {
            return Err(Error::ShapeMismatch {
                expected: format!("({batch},{channels},{len}) = {} values", batch * channels * len),
                got: format!("{} values", data.len()),
            });
        }
        Ok(Self { batch, channels, len, data })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.batch, self.channels, self.len)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, n: usize, c: usize) -> &[f64] {
        let start = (n * self.channels + c) * self.len;
        &self.data[start..start + self.len]
    }

    #[inline]
    pub fn row_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let start = (n * self.channels + c) * self.len;
        &mut self.data[start..start + self.len]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape() == other.shape()
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.shape()),
                got: format!("{:?}", other.shape()),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Tensor { batch: self.batch, channels: self.channels, len: self.len, data })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.shape()),
                got: format!("{:?}", other.shape()),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// A named, trainable parameter with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        let expected: usize = shape.iter().product();
        assert_eq!(data.len(), expected, "parameter data does not match shape");
        let grad = vec![0.0; data.len()];
        Self { name: name.into(), shape, data, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `out[i] += w * x[i + shift]` over the index range where both sides exist.
#[inline]
pub(crate) fn axpy_shifted(out: &mut [f64], x: &[f64], w: f64, shift: isize) {
    let len = out.len();
    debug_assert_eq!(len, x.len());
    if shift >= 0 {
        let s = shift as usize;
        if s >= len {
            return;
        }
        for (o, xv) in out[..len - s].iter_mut().zip(&x[s..]) {
            *o += w * xv;
        }
    } else {
        let s = (-shift) as usize;
        if s >= len {
            return;
        }
        for (o, xv) in out[s..].iter_mut().zip(&x[..len - s]) {
            *o += w * xv;
        }
    }
}

/// `sum_i a[i] * b[i + shift]` over the index range where both sides exist.
#[inline]
pub(crate) fn dot_shifted(a: &[f64], b: &[f64], shift: isize) -> f64 {
    let len = a.len();
    debug_assert_eq!(len, b.len());
    if shift >= 0 {
        let s = shift as usize;
        if s >= len {
            return 0.0;
        }
        a[..len - s].iter().zip(&b[s..]).map(|(x, y)| x * y).sum()
    } else {
        let s = (-shift) as usize;
        if s >= len {
            return 0.0;
        }
        a[s..].iter().zip(&b[..len - s]).map(|(x, y)| x * y).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_layout() {
        let mut t = Tensor::zeros(2, 3, 4);
        t.row_mut(1, 2)[3] = 7.0;
        assert_eq!(t.data()[(1 * 3 + 2) * 4 + 3], 7.0);
        assert_eq!(t.row(1, 2)[3], 7.0);
    }

    #[test]
    fn from_vec_checks_size() {
        assert!(Tensor::from_vec(1, 2, 3, vec![0.0; 5]).is_err());
        assert!(Tensor::from_vec(1, 2, 3, vec![0.0; 6]).is_ok());
    }

    #[test]
    fn shifted_kernels() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let mut out = [0.0; 4];
        axpy_shifted(&mut out, &x, 2.0, 1);
        assert_eq!(out, [4.0, 6.0, 8.0, 0.0]);
        let mut out = [0.0; 4];
        axpy_shifted(&mut out, &x, 1.0, -2);
        assert_eq!(out, [0.0, 0.0, 1.0, 2.0]);
        assert_eq!(dot_shifted(&[1.0, 1.0, 1.0], &[5.0, 6.0, 7.0], 1), 13.0);
        assert_eq!(dot_shifted(&[1.0, 1.0, 1.0], &[5.0, 6.0, 7.0], -1), 11.0);
        assert_eq!(dot_shifted(&[1.0], &[5.0], 3), 0.0);
    }
}
