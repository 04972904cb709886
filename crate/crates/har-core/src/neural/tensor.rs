//! Minimal dense tensor: a flat buffer plus a row-major shape. Hot loops
//! index raw slices directly; this type only carries shape bookkeeping.

use alloc::vec;
use alloc::vec::Vec;

use super::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    data: Vec<F>,
    shape: Vec<usize>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { data: vec![F::zero(); shape.iter().product()], shape: shape.to_vec() }
    }

    pub fn from_vec(data: Vec<F>, shape: &[usize]) -> Self {
        assert_eq!(data.len(), shape.iter().product::<usize>(), "shape/data mismatch");
        Tensor { data, shape: shape.to_vec() }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn fill(&mut self, v: F) {
        self.data.fill(v);
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[F] {
        debug_assert_eq!(self.shape.len(), 2);
        let w = self.shape[1];
        &self.data[i * w..(i + 1) * w]
    }

    /// One sample of an `[n, c, t]` batch.
    pub fn sample(&self, i: usize) -> &[F] {
        debug_assert_eq!(self.shape.len(), 3);
        let w = self.shape[1] * self.shape[2];
        &self.data[i * w..(i + 1) * w]
    }

    /// Convert element type, rounding through the target precision.
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            data: self.data.iter().map(|&v| G::of_f64(v.as_f64())).collect(),
            shape: self.shape.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &v| m.max(v.as_f64().abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
