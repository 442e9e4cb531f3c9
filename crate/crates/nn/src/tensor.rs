use avocodo_core::Real;

use crate::error::{shape_err, Result};

/// Every tensor is rank 3: `[batch, channels, length]` for activations,
/// `[out, in, kernel]` for weights, `[1, 1, 1]` for scalars.
pub type Shape = [usize; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return shape_err(format!("{} values for shape {shape:?}", data.len()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self { shape, data: vec![T::zero(); shape.iter().product()] }
    }

    pub fn scalar(v: T) -> Self {
        Self { shape: [1, 1, 1], data: vec![v] }
    }

    /// A single-channel batch from equal-length sample rows.
    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let len = rows.first().map_or(0, |r| r.len());
        if rows.is_empty() || rows.iter().any(|r| r.len() != len) {
            return shape_err("rows must be non-empty and of equal length");
        }
        Ok(Self { shape: [rows.len(), 1, len], data: rows.concat() })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn len(&self) -> usize {
        self.shape[2]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The single value of a `[1, 1, 1]` tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Row `(b, c)` along the last axis.
    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let len = self.shape[2];
        &self.data[(b * self.shape[1] + c) * len..][..len]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor { shape: self.shape, data: self.data.iter().map(|v| U::lit(v.as_f64())).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
