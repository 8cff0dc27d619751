//! Dense row-major tensors over `f32` or `f64`.
//!
//! Every array the engine touches (images, kernels, activations, gradients)
//! is a [`Tensor`]. Training runs in single precision; gradient verification
//! instantiates the same kernels with `f64`.

use crate::error::{Error, Result};
use num_traits::Float;
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Element type the numeric kernels are generic over.
pub trait Scalar:
    Float + num_traits::NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dense N-dimensional array, contiguous row-major storage.
#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor from a shape and matching data buffer.
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected = checked_len(shape)?;
        if expected != data.len() {
            return Err(Error::ShapeMismatch {
                what: "tensor data length",
                expected: format!("{} (= product of {:?})", expected, shape),
                got: data.len().to_string(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = checked_len(shape).expect("tensor shape overflows usize");
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let len = checked_len(shape).expect("tensor shape overflows usize");
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Reinterprets the buffer under a new shape of identical volume.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let expected = checked_len(shape)?;
        if expected != self.data.len() {
            return Err(Error::ShapeMismatch {
                what: "reshape volume",
                expected: expected.to_string(),
                got: self.data.len().to_string(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Fails if any element is NaN or infinite.
    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite { what })
        }
    }

    /// Element-wise conversion to double precision.
    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.as_f64()).collect(),
        }
    }
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    let mut len = 1usize;
    for &dim in shape {
        if dim == 0 {
            return Err(Error::ShapeMismatch {
                what: "tensor dimension",
                expected: "positive extent".into(),
                got: format!("0 in {:?}", shape),
            });
        }
        len = len.checked_mul(dim).ok_or(Error::ShapeMismatch {
            what: "tensor volume",
            expected: "within usize".into(),
            got: format!("{:?}", shape),
        })?;
    }
    Ok(len)
}
