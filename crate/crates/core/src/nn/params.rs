use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One named-by-position parameter array (weights, biases or slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamArray<T> {
    pub dims: Vec<usize>,
    pub values: Vec<T>,
}

/// Flat ordered list of a model's parameter arrays. Gradients use the same
/// layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub arrays: Vec<ParamArray<T>>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros_like(&self) -> Self {
        Self {
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray { dims: a.dims.clone(), values: vec![T::zero(); a.values.len()] })
                .collect(),
        }
    }

    pub fn total_len(&self) -> usize {
        self.arrays.iter().map(|a| a.values.len()).sum()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.arrays.len() == other.arrays.len()
            && self.arrays.iter().zip(&other.arrays).all(|(a, b)| a.dims == b.dims)
    }

    pub fn check_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::invalid("parameter layouts differ"))
        }
    }

    pub fn iter_values(&self) -> impl Iterator<Item = &T> {
        self.arrays.iter().flat_map(|a| a.values.iter())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.arrays.iter_mut().zip(&other.arrays) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += scale * *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in &mut self.arrays {
            for x in &mut a.values {
                *x *= s;
            }
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            arrays: self
                .arrays
                .iter()
                .map(|a| ParamArray {
                    dims: a.dims.clone(),
                    values: a.values.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Anything with an ordered parameter layout that gradient descent can update.
pub trait Trainable<T: Scalar> {
    fn params(&self) -> ModelParams<T>;
    fn set_params(&mut self, params: &ModelParams<T>) -> Result<()>;
    /// Per parameter array, whether it is frozen.
    fn frozen_arrays(&self) -> Vec<bool>;
}
