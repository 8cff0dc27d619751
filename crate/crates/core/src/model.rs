//! The digit-classification network: two 5x5 same-padded conv layers with
//! 2x2 max pooling, then three dense layers. Includes per-filter ablation
//! masking of the final conv layer and a truncated fully-convolutional
//! forward pass for arbitrary input sizes.

use crate::error::{Error, Result};
use crate::init::{glorot_uniform, seeded_rng};
use crate::ops::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2x2_backward,
    maxpool2x2_forward, relu, relu_backward, softmax_xent, ConvParams, DenseParams,
};
use crate::tensor::{Scalar, Tensor};

/// Kernel size of both conv layers.
pub const KERNEL_SIZE: usize = 5;
/// Symmetric zero padding; 2 keeps the spatial extent of a 5x5 conv.
pub const PADDING: usize = 2;

/// Structural description of a network instance.
///
/// [`ModelSpec::lenet`] is the canonical digit classifier; reduced variants
/// exist for tests. Both conv layers are always 5x5 with padding 2.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub hidden: [usize; 2],
    pub n_classes: usize,
}

impl ModelSpec {
    /// The 28x28 digit classifier: conv 1->6, pool, conv 6->16, pool,
    /// dense 784->120->84->10.
    pub fn lenet() -> Self {
        Self {
            conv1_filters: 6,
            conv2_filters: 16,
            input_height: 28,
            input_width: 28,
            hidden: [120, 84],
            n_classes: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv1_filters == 0 || self.conv2_filters == 0 {
            return Err(Error::InvalidArgument {
                what: "model spec",
                detail: "conv layers need at least one filter".into(),
            });
        }
        if self.input_height < 4 || self.input_width < 4 {
            return Err(Error::InvalidArgument {
                what: "model spec",
                detail: format!(
                    "input {}x{} too small for two pooling stages",
                    self.input_height, self.input_width
                ),
            });
        }
        if self.hidden.contains(&0) || self.n_classes < 2 {
            return Err(Error::InvalidArgument {
                what: "model spec",
                detail: "hidden sizes must be positive and n_classes >= 2".into(),
            });
        }
        Ok(())
    }

    /// Spatial extent of the final-conv responses for this input size.
    pub fn feature_dims(&self) -> (usize, usize) {
        (self.input_height / 2, self.input_width / 2)
    }

    /// Length of the flattened vector entering the first dense layer.
    /// Flattening is row-major over (channel, row, column).
    pub fn flatten_len(&self) -> usize {
        let (fh, fw) = self.feature_dims();
        self.conv2_filters * (fh / 2) * (fw / 2)
    }
}

/// Set of final-conv filters whose output channels are forced to zero.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AblationMask {
    n_filters: usize,
    blocked: Vec<bool>,
}

impl AblationMask {
    pub fn empty(n_filters: usize) -> Self {
        Self {
            n_filters,
            blocked: vec![false; n_filters],
        }
    }

    pub fn all(n_filters: usize) -> Self {
        Self {
            n_filters,
            blocked: vec![true; n_filters],
        }
    }

    /// Blocks exactly one filter.
    pub fn single(n_filters: usize, index: usize) -> Result<Self> {
        Self::from_indices(n_filters, &[index])
    }

    pub fn from_indices(n_filters: usize, indices: &[usize]) -> Result<Self> {
        let mut blocked = vec![false; n_filters];
        for &i in indices {
            if i >= n_filters {
                return Err(Error::InvalidArgument {
                    what: "ablation mask",
                    detail: format!("filter index {} out of range [0, {})", i, n_filters),
                });
            }
            blocked[i] = true;
        }
        Ok(Self { n_filters, blocked })
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters
    }

    pub fn is_empty(&self) -> bool {
        self.blocked.iter().all(|b| !b)
    }

    pub fn blocked_indices(&self) -> Vec<usize> {
        (0..self.n_filters).filter(|&i| self.blocked[i]).collect()
    }

    /// Zeroes the blocked channel planes of a `[n_filters, h, w]` stack.
    fn apply<T: Scalar>(&self, stack: &mut Tensor<T>) {
        if self.is_empty() {
            return;
        }
        let (h, w) = (stack.shape()[1], stack.shape()[2]);
        let plane = h * w;
        let data = stack.data_mut();
        for (i, &b) in self.blocked.iter().enumerate() {
            if b {
                data[i * plane..(i + 1) * plane].fill(T::zero());
            }
        }
    }
}

/// Post-activation responses of the final conv layer, at half the source
/// image resolution, together with the source dimensions.
#[derive(Clone, Debug)]
pub struct FeatureStack<T = f32> {
    maps: Tensor<T>,
    source_height: usize,
    source_width: usize,
}

impl<T: Scalar> FeatureStack<T> {
    /// Wraps raw maps. The stack must sit at half the source resolution,
    /// matching what the truncated forward pass produces.
    pub fn from_maps(maps: Tensor<T>, source_height: usize, source_width: usize) -> Result<Self> {
        if maps.shape().len() != 3 {
            return Err(Error::ShapeMismatch {
                what: "feature stack rank",
                expected: "3 ([filters, h, w])".into(),
                got: format!("{:?}", maps.shape()),
            });
        }
        if maps.shape()[1] != source_height / 2 || maps.shape()[2] != source_width / 2 {
            return Err(Error::ShapeMismatch {
                what: "feature stack resolution",
                expected: format!("{}x{}", source_height / 2, source_width / 2),
                got: format!("{}x{}", maps.shape()[1], maps.shape()[2]),
            });
        }
        Ok(Self {
            maps,
            source_height,
            source_width,
        })
    }

    pub fn maps(&self) -> &Tensor<T> {
        &self.maps
    }

    pub fn n_filters(&self) -> usize {
        self.maps.shape()[0]
    }

    /// `(height, width)` of the feature maps.
    pub fn dims(&self) -> (usize, usize) {
        (self.maps.shape()[1], self.maps.shape()[2])
    }

    /// `(height, width)` of the image the stack was computed from.
    pub fn source_dims(&self) -> (usize, usize) {
        (self.source_height, self.source_width)
    }
}

/// Trainable parameters for a [`ModelSpec`].
#[derive(Clone, Debug)]
pub struct Network<T = f32> {
    spec: ModelSpec,
    pub conv1: ConvParams<T>,
    pub conv2: ConvParams<T>,
    pub fc1: DenseParams<T>,
    pub fc2: DenseParams<T>,
    pub fc3: DenseParams<T>,
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights from a seeded generator, biases zero.
    ///
    /// Sampling order is fixed (conv1, conv2, fc1, fc2, fc3 kernels) so a
    /// seed fully determines the parameters.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = seeded_rng(seed);
        let k = KERNEL_SIZE;
        let conv1 = ConvParams::new(
            glorot_uniform(
                &[spec.conv1_filters, 1, k, k],
                k * k,
                spec.conv1_filters * k * k,
                &mut rng,
            ),
            Tensor::zeros(&[spec.conv1_filters]),
            PADDING,
        )?;
        let conv2 = ConvParams::new(
            glorot_uniform(
                &[spec.conv2_filters, spec.conv1_filters, k, k],
                spec.conv1_filters * k * k,
                spec.conv2_filters * k * k,
                &mut rng,
            ),
            Tensor::zeros(&[spec.conv2_filters]),
            PADDING,
        )?;
        let sizes = [
            (spec.hidden[0], spec.flatten_len()),
            (spec.hidden[1], spec.hidden[0]),
            (spec.n_classes, spec.hidden[1]),
        ];
        let mut dense = sizes.iter().map(|&(m, n)| {
            DenseParams::new(glorot_uniform(&[m, n], n, m, &mut rng), Tensor::zeros(&[m]))
        });
        Ok(Self {
            spec,
            conv1,
            conv2,
            fc1: dense.next().unwrap()?,
            fc2: dense.next().unwrap()?,
            fc3: dense.next().unwrap()?,
        })
    }

    /// Assembles a network from existing parameter tensors, rejecting any
    /// shape that disagrees with the spec.
    pub fn from_parts(
        spec: ModelSpec,
        conv1: ConvParams<T>,
        conv2: ConvParams<T>,
        fc1: DenseParams<T>,
        fc2: DenseParams<T>,
        fc3: DenseParams<T>,
    ) -> Result<Self> {
        spec.validate()?;
        let k = KERNEL_SIZE;
        let expect = |what: &'static str, got: &[usize], want: &[usize]| -> Result<()> {
            if got != want {
                return Err(Error::ShapeMismatch {
                    what,
                    expected: format!("{:?}", want),
                    got: format!("{:?}", got),
                });
            }
            Ok(())
        };
        expect(
            "conv1 kernels",
            conv1.kernels.shape(),
            &[spec.conv1_filters, 1, k, k],
        )?;
        expect(
            "conv2 kernels",
            conv2.kernels.shape(),
            &[spec.conv2_filters, spec.conv1_filters, k, k],
        )?;
        expect(
            "fc1 weights",
            fc1.weights.shape(),
            &[spec.hidden[0], spec.flatten_len()],
        )?;
        expect(
            "fc2 weights",
            fc2.weights.shape(),
            &[spec.hidden[1], spec.hidden[0]],
        )?;
        expect(
            "fc3 weights",
            fc3.weights.shape(),
            &[spec.n_classes, spec.hidden[1]],
        )?;
        if conv1.padding != PADDING || conv2.padding != PADDING {
            return Err(Error::ShapeMismatch {
                what: "conv padding",
                expected: PADDING.to_string(),
                got: format!("{}/{}", conv1.padding, conv2.padding),
            });
        }
        Ok(Self {
            spec,
            conv1,
            conv2,
            fc1,
            fc2,
            fc3,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_final_filters(&self) -> usize {
        self.spec.conv2_filters
    }

    /// Parameter tensors in checkpoint order.
    pub fn param_tensors(&self) -> [&Tensor<T>; 10] {
        [
            &self.conv1.kernels,
            &self.conv1.bias,
            &self.conv2.kernels,
            &self.conv2.bias,
            &self.fc1.weights,
            &self.fc1.bias,
            &self.fc2.weights,
            &self.fc2.bias,
            &self.fc3.weights,
            &self.fc3.bias,
        ]
    }

    pub fn param_tensors_mut(&mut self) -> [&mut Tensor<T>; 10] {
        [
            &mut self.conv1.kernels,
            &mut self.conv1.bias,
            &mut self.conv2.kernels,
            &mut self.conv2.bias,
            &mut self.fc1.weights,
            &mut self.fc1.bias,
            &mut self.fc2.weights,
            &mut self.fc2.bias,
            &mut self.fc3.weights,
            &mut self.fc3.bias,
        ]
    }

    fn check_classify_input(&self, image: &Tensor<T>) -> Result<()> {
        let want = [1, self.spec.input_height, self.spec.input_width];
        if image.shape() != want {
            return Err(Error::ShapeMismatch {
                what: "classifier input shape",
                expected: format!("{:?}", want),
                got: format!("{:?}", image.shape()),
            });
        }
        Ok(())
    }

    /// Full forward pass through all layers.
    ///
    /// Channels listed in `mask` are zeroed after the final conv activation,
    /// before pooling, so nothing from a blocked filter propagates further.
    /// Returns the class logits and the (masked) final-conv feature stack.
    pub fn classify(
        &self,
        image: &Tensor<T>,
        mask: &AblationMask,
    ) -> Result<(Tensor<T>, FeatureStack<T>)> {
        self.check_classify_input(image)?;
        if mask.n_filters() != self.spec.conv2_filters {
            return Err(Error::InvalidArgument {
                what: "ablation mask",
                detail: format!(
                    "mask covers {} filters, network has {}",
                    mask.n_filters(),
                    self.spec.conv2_filters
                ),
            });
        }
        let a1 = relu(&conv2d_forward(image, &self.conv1)?);
        let (p1, _) = maxpool2x2_forward(&a1)?;
        let mut a2 = relu(&conv2d_forward(&p1, &self.conv2)?);
        mask.apply(&mut a2);
        let (p2, _) = maxpool2x2_forward(&a2)?;
        let flat = p2.reshape(&[self.spec.flatten_len()])?;
        let h1 = relu(&dense_forward(&flat, &self.fc1)?);
        let h2 = relu(&dense_forward(&h1, &self.fc2)?);
        let logits = dense_forward(&h2, &self.fc3)?;
        Ok((
            logits,
            FeatureStack {
                maps: a2,
                source_height: self.spec.input_height,
                source_width: self.spec.input_width,
            },
        ))
    }

    /// Truncated forward pass (conv1 -> pool -> conv2, ReLU after each conv)
    /// that accepts any single-channel image of at least 4x4 pixels.
    pub fn features(&self, image: &Tensor<T>) -> Result<FeatureStack<T>> {
        let shape = image.shape();
        if shape.len() != 3 || shape[0] != 1 {
            return Err(Error::ShapeMismatch {
                what: "feature input shape",
                expected: "[1, H, W]".into(),
                got: format!("{:?}", shape),
            });
        }
        let (h, w) = (shape[1], shape[2]);
        if h < 4 || w < 4 {
            return Err(Error::ShapeMismatch {
                what: "feature input size",
                expected: "at least 4x4".into(),
                got: format!("{}x{}", h, w),
            });
        }
        let a1 = relu(&conv2d_forward(image, &self.conv1)?);
        let (p1, _) = maxpool2x2_forward(&a1)?;
        let a2 = relu(&conv2d_forward(&p1, &self.conv2)?);
        Ok(FeatureStack {
            maps: a2,
            source_height: h,
            source_width: w,
        })
    }

    /// Cross-entropy loss and exact parameter gradients for one sample.
    pub fn loss_and_gradients(&self, image: &Tensor<T>, label: usize) -> Result<(T, Gradients<T>)> {
        self.check_classify_input(image)?;
        let z1 = conv2d_forward(image, &self.conv1)?;
        let a1 = relu(&z1);
        let (p1, idx1) = maxpool2x2_forward(&a1)?;
        let z2 = conv2d_forward(&p1, &self.conv2)?;
        let a2 = relu(&z2);
        let (p2, idx2) = maxpool2x2_forward(&a2)?;
        let p2_shape = [p2.shape()[0], p2.shape()[1], p2.shape()[2]];
        let flat = p2.reshape(&[self.spec.flatten_len()])?;
        let z3 = dense_forward(&flat, &self.fc1)?;
        let a3 = relu(&z3);
        let z4 = dense_forward(&a3, &self.fc2)?;
        let a4 = relu(&z4);
        let logits = dense_forward(&a4, &self.fc3)?;

        let (loss, dlogits) = softmax_xent(&logits, label)?;
        let (da4, fc3_w, fc3_b) = dense_backward(&a4, &self.fc3, &dlogits)?;
        let dz4 = relu_backward(&z4, &da4)?;
        let (da3, fc2_w, fc2_b) = dense_backward(&a3, &self.fc2, &dz4)?;
        let dz3 = relu_backward(&z3, &da3)?;
        let (dflat, fc1_w, fc1_b) = dense_backward(&flat, &self.fc1, &dz3)?;
        let dp2 = dflat.reshape(&p2_shape)?;
        let da2 = maxpool2x2_backward(&idx2, &dp2)?;
        let dz2 = relu_backward(&z2, &da2)?;
        let (dp1, conv2_k, conv2_b) = conv2d_backward(&p1, &self.conv2, &dz2)?;
        let da1 = maxpool2x2_backward(&idx1, &dp1)?;
        let dz1 = relu_backward(&z1, &da1)?;
        let (_, conv1_k, conv1_b) = conv2d_backward(image, &self.conv1, &dz1)?;

        Ok((
            loss,
            Gradients {
                tensors: [
                    conv1_k, conv1_b, conv2_k, conv2_b, fc1_w, fc1_b, fc2_w, fc2_b, fc3_w, fc3_b,
                ],
            },
        ))
    }
}

/// Parameter gradients in checkpoint order (see [`Network::param_tensors`]).
#[derive(Clone, Debug)]
pub struct Gradients<T = f32> {
    tensors: [Tensor<T>; 10],
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        let shapes = net.param_tensors();
        Self {
            tensors: std::array::from_fn(|i| Tensor::zeros(shapes[i].shape())),
        }
    }

    pub fn tensors(&self) -> [&Tensor<T>; 10] {
        std::array::from_fn(|i| &self.tensors[i])
    }

    /// Element-wise accumulate; shapes must match.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (dst, src) in self.tensors.iter_mut().zip(other.tensors.iter()) {
            debug_assert_eq!(dst.shape(), src.shape());
            for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += *s;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors.iter_mut() {
            for v in t.data_mut() {
                *v *= factor;
            }
        }
    }
}
