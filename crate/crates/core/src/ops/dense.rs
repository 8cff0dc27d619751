//! Fully connected layer: forward map and exact gradients.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Weight matrix `[out, in]` and bias `[out]` of one dense layer.
#[derive(Clone, Debug)]
pub struct DenseParams<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> DenseParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                what: "dense weights rank",
                expected: "2 ([out, in])".into(),
                got: format!("{:?}", weights.shape()),
            });
        }
        if bias.shape() != [weights.shape()[0]] {
            return Err(Error::ShapeMismatch {
                what: "dense bias shape",
                expected: format!("[{}]", weights.shape()[0]),
                got: format!("{:?}", bias.shape()),
            });
        }
        Ok(Self { weights, bias })
    }

    #[inline]
    pub fn out_features(&self) -> usize {
        self.weights.shape()[0]
    }

    #[inline]
    pub fn in_features(&self) -> usize {
        self.weights.shape()[1]
    }
}

fn check_input<T: Scalar>(input: &Tensor<T>, params: &DenseParams<T>) -> Result<()> {
    if input.shape() != [params.in_features()] {
        return Err(Error::ShapeMismatch {
            what: "dense input shape",
            expected: format!("[{}]", params.in_features()),
            got: format!("{:?}", input.shape()),
        });
    }
    Ok(())
}

/// `out[m] = bias[m] + sum_n weights[m,n] * input[n]`.
pub fn dense_forward<T: Scalar>(input: &Tensor<T>, params: &DenseParams<T>) -> Result<Tensor<T>> {
    check_input(input, params)?;
    let (m, n) = (params.out_features(), params.in_features());
    let w = params.weights.data();
    let x = input.data();
    let mut out = params.bias.data().to_vec();
    for row in 0..m {
        let wr = &w[row * n..(row + 1) * n];
        let mut acc = T::zero();
        for col in 0..n {
            acc += wr[col] * x[col];
        }
        out[row] += acc;
    }
    Tensor::new(&[m], out)
}

/// Gradients of [`dense_forward`]: `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &DenseParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    check_input(input, params)?;
    let (m, n) = (params.out_features(), params.in_features());
    if grad_out.shape() != [m] {
        return Err(Error::ShapeMismatch {
            what: "dense grad_out shape",
            expected: format!("[{}]", m),
            got: format!("{:?}", grad_out.shape()),
        });
    }
    let w = params.weights.data();
    let x = input.data();
    let g = grad_out.data();

    let mut grad_w = vec![T::zero(); m * n];
    let mut grad_in = vec![T::zero(); n];
    for row in 0..m {
        let gr = g[row];
        let wr = &w[row * n..(row + 1) * n];
        let gwr = &mut grad_w[row * n..(row + 1) * n];
        for col in 0..n {
            gwr[col] = gr * x[col];
            grad_in[col] += gr * wr[col];
        }
    }
    Ok((
        Tensor::new(&[n], grad_in)?,
        Tensor::new(&[m, n], grad_w)?,
        Tensor::new(&[m], g.to_vec())?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense<T: Scalar>(m: usize, n: usize, w: Vec<T>, b: Vec<T>) -> DenseParams<T> {
        DenseParams::new(
            Tensor::new(&[m, n], w).unwrap(),
            Tensor::new(&[m], b).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let mut w = vec![0.0f64; 9];
        for i in 0..3 {
            w[i * 3 + i] = 1.0;
        }
        let p = dense(3, 3, w, vec![0.0; 3]);
        let x = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        assert_eq!(dense_forward(&x, &p).unwrap().data(), x.data());
    }

    #[test]
    fn zero_weights_output_bias() {
        let p = dense(2, 4, vec![0.0f32; 8], vec![3.0, -1.5]);
        let x = Tensor::new(&[4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(dense_forward(&x, &p).unwrap().data(), &[3.0, -1.5]);
    }

    #[test]
    fn matches_hand_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = dense(2, 3, w.clone(), b.clone());
        let out = dense_forward(&Tensor::new(&[3], x.clone()).unwrap(), &p).unwrap();
        for m in 0..2 {
            let want = b[m] + w[m * 3] * x[0] + w[m * 3 + 1] * x[1] + w[m * 3 + 2] * x[2];
            assert!((out.data()[m] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let p = dense(2, 3, vec![0.0f32; 6], vec![0.0; 2]);
        let x = Tensor::<f32>::zeros(&[4]);
        assert!(dense_forward(&x, &p).is_err());
        let g = Tensor::<f32>::zeros(&[3]);
        assert!(dense_backward(&Tensor::zeros(&[3]), &p, &g).is_err());
    }

    #[test]
    fn backward_reproduces_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let p = dense(
            3,
            2,
            (0..6)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect::<Vec<f64>>(),
            vec![0.0; 3],
        );
        let x = Tensor::new(&[2], vec![0.4, -0.9]).unwrap();
        let g = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let (gi, gw, gb) = dense_backward(&x, &p, &g).unwrap();
        assert_eq!(gb.data(), g.data());
        for m in 0..3 {
            for n in 0..2 {
                assert_eq!(gw.data()[m * 2 + n], g.data()[m] * x.data()[n]);
            }
        }
        for n in 0..2 {
            let want: f64 = (0..3)
                .map(|m| g.data()[m] * p.weights.data()[m * 2 + n])
                .sum();
            assert!((gi.data()[n] - want).abs() < 1e-15);
        }
    }
}
