//! Softmax cross-entropy classification loss.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Negative log-likelihood of `label` under `softmax(logits)`, with the
/// gradient `softmax(logits) - onehot(label)`.
///
/// The max is subtracted before exponentiating so large logits cannot
/// overflow.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    if logits.shape().len() != 1 {
        return Err(Error::ShapeMismatch {
            what: "logits rank",
            expected: "1".into(),
            got: format!("{:?}", logits.shape()),
        });
    }
    let k = logits.len();
    if label >= k {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let z = logits.data();
    let max = z.iter().cloned().fold(T::neg_infinity(), T::max);
    let mut probs: Vec<T> = z.iter().map(|&v| (v - max).exp()).collect();
    let denom: T = probs.iter().cloned().sum();
    for p in probs.iter_mut() {
        *p /= denom;
    }
    let loss = denom.ln() - (z[label] - max);
    probs[label] -= T::one();
    Ok((loss, Tensor::new(&[k], probs)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_cost_ln_k() {
        let logits = Tensor::<f64>::filled(&[10], 0.37);
        let (loss, grad) = softmax_xent(&logits, 4).unwrap();
        assert!((loss - (10.0f64).ln()).abs() < 1e-12);
        // Gradient entries sum to zero.
        let sum: f64 = grad.data().iter().sum();
        assert!(sum.abs() < 1e-12);
    }

    #[test]
    fn huge_logit_gap_does_not_overflow() {
        let logits = Tensor::<f64>::new(&[2], vec![1000.0, 0.0]).unwrap();
        let (loss, grad) = softmax_xent(&logits, 0).unwrap();
        assert!(loss.is_finite());
        assert!(loss >= 0.0 && loss < 1e-12);
        assert!(grad.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn loss_is_non_negative() {
        let logits = Tensor::<f64>::new(&[4], vec![-0.3, 2.0, 0.1, -5.0]).unwrap();
        for label in 0..4 {
            let (loss, _) = softmax_xent(&logits, label).unwrap();
            assert!(loss >= 0.0);
        }
    }

    #[test]
    fn rejects_out_of_range_label() {
        let logits = Tensor::<f32>::zeros(&[3]);
        assert!(matches!(
            softmax_xent(&logits, 3),
            Err(Error::LabelOutOfRange {
                label: 3,
                classes: 3
            })
        ));
    }

    proptest::proptest! {
        #[test]
        fn loss_non_negative_and_gradient_sums_to_zero(
            logits in proptest::collection::vec(-20.0f64..20.0, 1..16),
            label_pick in 0usize..16,
        ) {
            let k = logits.len();
            let label = label_pick % k;
            let t = Tensor::new(&[k], logits).unwrap();
            let (loss, grad) = softmax_xent(&t, label).unwrap();
            proptest::prop_assert!(loss >= 0.0);
            let sum: f64 = grad.data().iter().sum();
            proptest::prop_assert!(sum.abs() < 1e-12);
        }
    }
}
