//! ReLU activation.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Elementwise `max(0, x)`.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes gradient where the forward input was strictly positive; the
/// subgradient at exactly zero is taken as zero.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::ShapeMismatch {
            what: "relu grad_out shape",
            expected: format!("{:?}", input.shape()),
            got: format!("{:?}", grad_out.shape()),
        });
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives_to_zero() {
        let x = Tensor::<f64>::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn gradient_is_zero_at_the_kink() {
        let x = Tensor::<f64>::new(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        let g = Tensor::<f64>::filled(&[3], 5.0);
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 5.0]);
    }
}
