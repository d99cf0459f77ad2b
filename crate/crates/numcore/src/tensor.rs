use std::sync::Arc;

use crate::error::{NumError, Result};

/// Dense row-major f64 array of rank 1 or 2.
///
/// Data is shared on clone; tensors are immutable once produced by an op.
/// Every constructor that accepts arbitrary data rejects non-finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&d| d == 0) {
            return Err(NumError::InvalidTensor(format!(
                "dims must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NumError::InvalidTensor(format!(
                "shape {shape:?} needs {expected} entries, got {}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(NumError::InvalidTensor(
                "non-finite entry in tensor data".into(),
            ));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
        })
    }

    /// Shape-checked constructor that skips the finite check; graph ops
    /// validate the finished value once and report the op name instead.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub(crate) fn raw_vec(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor::raw(vec![n], data)
    }

    pub fn scalar(v: f64) -> Result<Self> {
        Tensor::new(vec![1], vec![v])
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![0.0; n]),
        }
    }

    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![v; n]),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dims are positive by construction
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable view of the data; clones the buffer if it is shared.
    pub fn data_mut(&mut self) -> &mut [f64] {
        let v: &mut Vec<f64> = Arc::make_mut(&mut self.data);
        v.as_mut_slice()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn at(&self, i: usize) -> f64 {
        self.data[i]
    }

    pub fn at2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    /// Value of a 1-element tensor.
    pub fn as_scalar(&self) -> Result<f64> {
        if self.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(NumError::BadRank {
                op: "as_scalar",
                expected: "a 1-element tensor",
                got: self.shape.clone(),
            })
        }
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// self + scale * other, elementwise. Shapes must match.
    pub fn add_scaled(&self, other: &Tensor, scale: f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(NumError::ShapeMismatch {
                op: "add_scaled",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + scale * b)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    /// Linear interpolation toward `source`: gamma*source + (1-gamma)*self.
    pub fn lerp_toward(&self, source: &Tensor, gamma: f64) -> Result<Tensor> {
        if self.shape != source.shape {
            return Err(NumError::ShapeMismatch {
                op: "lerp_toward",
                lhs: self.shape.clone(),
                rhs: source.shape.clone(),
            });
        }
        let data = self
            .data
            .iter()
            .zip(source.data.iter())
            .map(|(t, s)| gamma * s + (1.0 - gamma) * t)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    pub fn sq_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
