//! 2x2 max pooling with recorded argmax positions for the backward pass.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Argmax bookkeeping from a forward pooling pass. Each output cell stores
/// the flat index (into the input buffer) of the element that won its window.
#[derive(Clone, Debug)]
pub struct PoolIndices {
    input_shape: [usize; 3],
    output_shape: [usize; 3],
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn output_shape(&self) -> [usize; 3] {
        self.output_shape
    }
}

/// Disjoint 2x2 window max; a trailing odd row/column is dropped.
///
/// Ties inside a window go to the first element in row-major scan order.
pub fn maxpool2x2_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolIndices)> {
    let shape = input.shape();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch {
            what: "pool input rank",
            expected: "3 ([channels, height, width])".into(),
            got: format!("{:?}", shape),
        });
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    if h < 2 || w < 2 {
        return Err(Error::ShapeMismatch {
            what: "pool spatial extent",
            expected: "at least 2x2".into(),
            got: format!("{}x{}", h, w),
        });
    }
    let (ho, wo) = (h / 2, w / 2);
    let data = input.data();
    let mut out = vec![T::zero(); c * ho * wo];
    let mut argmax = vec![0usize; c * ho * wo];
    for ch in 0..c {
        for y in 0..ho {
            for x in 0..wo {
                let base = ch * h * w + (2 * y) * w + 2 * x;
                let mut best_idx = base;
                let mut best = data[base];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = base + dy * w + dx;
                    if data[idx] > best {
                        best = data[idx];
                        best_idx = idx;
                    }
                }
                let o = ch * ho * wo + y * wo + x;
                out[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((
        Tensor::new(&[c, ho, wo], out)?,
        PoolIndices {
            input_shape: [c, h, w],
            output_shape: [c, ho, wo],
            argmax,
        },
    ))
}

/// Routes each output gradient back to its recorded argmax position.
pub fn maxpool2x2_backward<T: Scalar>(
    indices: &PoolIndices,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.shape() != indices.output_shape {
        return Err(Error::ShapeMismatch {
            what: "pool grad_out shape",
            expected: format!("{:?}", indices.output_shape),
            got: format!("{:?}", grad_out.shape()),
        });
    }
    let input_len = indices.input_shape.iter().product();
    let mut grad_input = vec![T::zero(); input_len];
    for (o, &idx) in indices.argmax.iter().enumerate() {
        if idx >= input_len {
            return Err(Error::Corrupt {
                format: "pool argmax record",
                detail: format!("index {} out of range for input length {}", idx, input_len),
            });
        }
        grad_input[idx] += grad_out.data()[o];
    }
    Tensor::new(&indices.input_shape, grad_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_window_takes_max() {
        let input = Tensor::<f64>::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, _) = maxpool2x2_forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn constant_input_stays_constant() {
        let input = Tensor::<f32>::filled(&[2, 4, 6], 0.75);
        let (out, _) = maxpool2x2_forward(&input).unwrap();
        assert_eq!(out.shape(), &[2, 2, 3]);
        assert!(out.data().iter().all(|v| *v == 0.75));
    }

    #[test]
    fn odd_extent_drops_trailing_row_and_column() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let input = Tensor::<f64>::new(
            &[1, 5, 5],
            (0..25).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let (out, _) = maxpool2x2_forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 2, 2]);
        // Exhaustive window scan as the oracle.
        for y in 0..2 {
            for x in 0..2 {
                let mut want = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        want = want.max(input.data()[(2 * y + dy) * 5 + 2 * x + dx]);
                    }
                }
                assert_eq!(out.data()[y * 2 + x], want);
            }
        }
    }

    #[test]
    fn output_never_exceeds_input_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let h = rng.random_range(2..9usize);
            let w = rng.random_range(2..9usize);
            let input = Tensor::<f64>::new(
                &[1, h, w],
                (0..h * w).map(|_| rng.random_range(-5.0..5.0)).collect(),
            )
            .unwrap();
            let (out, _) = maxpool2x2_forward(&input).unwrap();
            let max_in = input
                .data()
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(out.data().iter().all(|v| *v <= max_in));
        }
    }

    #[test]
    fn rejects_sub_window_inputs() {
        assert!(maxpool2x2_forward(&Tensor::<f32>::zeros(&[1, 1, 4])).is_err());
        assert!(maxpool2x2_forward(&Tensor::<f32>::zeros(&[1, 4, 1])).is_err());
    }

    #[test]
    fn backward_routes_to_argmax() {
        let input = Tensor::<f64>::new(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (_, idx) = maxpool2x2_forward(&input).unwrap();
        let gin = maxpool2x2_backward(&idx, &Tensor::new(&[1, 1, 1], vec![1.0]).unwrap()).unwrap();
        assert_eq!(gin.data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn backward_zero_grad_gives_zero() {
        let input = Tensor::<f64>::filled(&[3, 4, 4], 1.5);
        let (_, idx) = maxpool2x2_forward(&input).unwrap();
        let gin = maxpool2x2_backward(&idx, &Tensor::<f64>::zeros(&[3, 2, 2])).unwrap();
        assert!(gin.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ties_go_to_first_in_row_major_order() {
        let input = Tensor::<f64>::new(&[1, 2, 2], vec![7.0, 7.0, 7.0, 7.0]).unwrap();
        let (_, idx) = maxpool2x2_forward(&input).unwrap();
        let gin = maxpool2x2_backward(&idx, &Tensor::new(&[1, 1, 1], vec![2.0]).unwrap()).unwrap();
        assert_eq!(gin.data(), &[2.0, 0.0, 0.0, 0.0]);
    }
}
