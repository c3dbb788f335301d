//! Dense row-major f64 tensors.

use std::sync::Arc;

use crate::error::TensorError;

/// A dense tensor of 64-bit floats in row-major order.
///
/// Every extent is positive and the element count always equals the product
/// of the extents. Values are checked for finiteness on construction via
/// [`Tensor::new`]; interior computations build results through the private
/// constructors and are validated at the loss level instead.
///
/// Storage is shared on clone and copied on mutation, so tapes and epoch
/// views can hold many references to the same buffer cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    /// Builds a tensor, validating the shape/data contract and that every
    /// value is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(TensorError::EmptyExtent { shape });
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite { index: pos });
        }
        Ok(Self { shape, data: Arc::new(data) })
    }

    /// Zero-filled tensor. Panics on an invalid shape; shapes here come from
    /// the graph builder which has already validated them.
    pub fn zeros(shape: &[usize]) -> Self {
        debug_assert!(!shape.is_empty() && shape.iter().all(|&d| d > 0));
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; numel]),
        }
    }

    /// A 1-element tensor holding `v`.
    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![1],
            data: Arc::new(vec![v]),
        }
    }

    /// 1-D tensor from a slice.
    pub fn vector(v: &[f64]) -> Result<Self, TensorError> {
        Self::new(vec![v.len()], v.to_vec())
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    /// The single value of a 1-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on a tensor with {} elements", self.numel());
        self.data[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_product_must_match_len() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(vec![2, 3], vec![0.0; 5]),
            Err(TensorError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn rejects_zero_extent_and_nonfinite() {
        assert!(matches!(
            Tensor::new(vec![0], vec![]),
            Err(TensorError::EmptyExtent { .. })
        ));
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(TensorError::NonFinite { index: 1 })
        ));
        assert!(matches!(
            Tensor::new(vec![1], vec![f64::INFINITY]),
            Err(TensorError::NonFinite { index: 0 })
        ));
    }
}
