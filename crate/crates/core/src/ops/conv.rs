//! Direct 2D convolution (stride 1, symmetric zero padding) with exact
//! analytic gradients.
//!
//! The forward pass accumulates one shifted input plane per kernel tap so the
//! innermost loop is a contiguous multiply-add over a row; the backward pass
//! reuses the same access pattern for the kernel and input gradients.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Kernel stack and bias of one convolution layer.
///
/// `kernels` is `[out_ch, in_ch, kh, kw]`, `bias` is `[out_ch]`. Padding is
/// the same pixel count on all four sides; stride is fixed at 1.
#[derive(Clone, Debug)]
pub struct ConvParams<T = f32> {
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
    pub padding: usize,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(kernels: Tensor<T>, bias: Tensor<T>, padding: usize) -> Result<Self> {
        if kernels.shape().len() != 4 {
            return Err(Error::ShapeMismatch {
                what: "conv kernels rank",
                expected: "4 ([out_ch, in_ch, kh, kw])".into(),
                got: format!("{:?}", kernels.shape()),
            });
        }
        if bias.shape() != [kernels.shape()[0]] {
            return Err(Error::ShapeMismatch {
                what: "conv bias shape",
                expected: format!("[{}]", kernels.shape()[0]),
                got: format!("{:?}", bias.shape()),
            });
        }
        Ok(Self {
            kernels,
            bias,
            padding,
        })
    }

    #[inline]
    pub fn out_channels(&self) -> usize {
        self.kernels.shape()[0]
    }

    #[inline]
    pub fn in_channels(&self) -> usize {
        self.kernels.shape()[1]
    }

    #[inline]
    pub fn kernel_size(&self) -> (usize, usize) {
        (self.kernels.shape()[2], self.kernels.shape()[3])
    }
}

fn check_input<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<(usize, usize)> {
    let shape = input.shape();
    if shape.len() != 3 {
        return Err(Error::ShapeMismatch {
            what: "conv input rank",
            expected: "3 ([channels, height, width])".into(),
            got: format!("{:?}", shape),
        });
    }
    if shape[0] != params.in_channels() {
        return Err(Error::ShapeMismatch {
            what: "conv input channels",
            expected: params.in_channels().to_string(),
            got: shape[0].to_string(),
        });
    }
    let (kh, kw) = params.kernel_size();
    let (h, w) = (shape[1], shape[2]);
    let p = params.padding;
    if h + 2 * p < kh || w + 2 * p < kw {
        return Err(Error::ShapeMismatch {
            what: "conv spatial extent",
            expected: format!("at least {}x{} after padding {}", kh, kw, p),
            got: format!("{}x{}", h, w),
        });
    }
    Ok((h, w))
}

/// Copies `[C,H,W]` data into a `[C, H+2p, W+2p]` zero-padded buffer.
fn pad_input<T: Scalar>(data: &[T], c: usize, h: usize, w: usize, p: usize) -> Vec<T> {
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let mut padded = vec![T::zero(); c * ph * pw];
    for ch in 0..c {
        for y in 0..h {
            let src = &data[ch * h * w + y * w..ch * h * w + y * w + w];
            let dst_off = ch * ph * pw + (y + p) * pw + p;
            padded[dst_off..dst_off + w].copy_from_slice(src);
        }
    }
    padded
}

/// `out[o,y,x] = bias[o] + sum_{c,i,j} kernels[o,c,i,j] * padded(input)[c, y+i, x+j]`.
///
/// Output extent is `H + 2p - kh + 1` per axis, so 5x5 kernels with padding 2
/// preserve the input extent.
pub fn conv2d_forward<T: Scalar>(input: &Tensor<T>, params: &ConvParams<T>) -> Result<Tensor<T>> {
    let (h, w) = check_input(input, params)?;
    let (ci, co) = (params.in_channels(), params.out_channels());
    let (kh, kw) = params.kernel_size();
    let p = params.padding;
    let (ho, wo) = (h + 2 * p - kh + 1, w + 2 * p - kw + 1);
    let pw = w + 2 * p;

    let padded = pad_input(input.data(), ci, h, w, p);
    let kernels = params.kernels.data();
    let bias = params.bias.data();

    let mut out = vec![T::zero(); co * ho * wo];
    for o in 0..co {
        let out_plane = &mut out[o * ho * wo..(o + 1) * ho * wo];
        out_plane.fill(bias[o]);
        for c in 0..ci {
            let in_plane = &padded[c * (h + 2 * p) * pw..(c + 1) * (h + 2 * p) * pw];
            for ky in 0..kh {
                for kx in 0..kw {
                    let weight = kernels[((o * ci + c) * kh + ky) * kw + kx];
                    for y in 0..ho {
                        let src = &in_plane[(y + ky) * pw + kx..(y + ky) * pw + kx + wo];
                        let dst = &mut out_plane[y * wo..(y + 1) * wo];
                        for x in 0..wo {
                            dst[x] += weight * src[x];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[co, ho, wo], out)
}

/// Exact gradients of [`conv2d_forward`] with respect to input, kernels and
/// bias, given the gradient at the output.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (h, w) = check_input(input, params)?;
    let (ci, co) = (params.in_channels(), params.out_channels());
    let (kh, kw) = params.kernel_size();
    let p = params.padding;
    let (ho, wo) = (h + 2 * p - kh + 1, w + 2 * p - kw + 1);
    if grad_out.shape() != [co, ho, wo] {
        return Err(Error::ShapeMismatch {
            what: "conv grad_out shape",
            expected: format!("[{}, {}, {}]", co, ho, wo),
            got: format!("{:?}", grad_out.shape()),
        });
    }
    let (ph, pw) = (h + 2 * p, w + 2 * p);
    let padded = pad_input(input.data(), ci, h, w, p);
    let kernels = params.kernels.data();
    let gout = grad_out.data();

    let mut grad_kernels = vec![T::zero(); kernels.len()];
    let mut grad_bias = vec![T::zero(); co];
    let mut grad_padded = vec![T::zero(); ci * ph * pw];

    for o in 0..co {
        let gout_plane = &gout[o * ho * wo..(o + 1) * ho * wo];
        grad_bias[o] = gout_plane.iter().copied().sum();
        for c in 0..ci {
            let in_plane = &padded[c * ph * pw..(c + 1) * ph * pw];
            let gin_plane = &mut grad_padded[c * ph * pw..(c + 1) * ph * pw];
            for ky in 0..kh {
                for kx in 0..kw {
                    let kidx = ((o * ci + c) * kh + ky) * kw + kx;
                    let weight = kernels[kidx];
                    let mut acc = T::zero();
                    for y in 0..ho {
                        let src = &in_plane[(y + ky) * pw + kx..(y + ky) * pw + kx + wo];
                        let gin = &mut gin_plane[(y + ky) * pw + kx..(y + ky) * pw + kx + wo];
                        let g = &gout_plane[y * wo..(y + 1) * wo];
                        for x in 0..wo {
                            acc += g[x] * src[x];
                            gin[x] += weight * g[x];
                        }
                    }
                    grad_kernels[kidx] += acc;
                }
            }
        }
    }

    // Crop the padding ring off the accumulated input gradient.
    let mut grad_input = vec![T::zero(); ci * h * w];
    for c in 0..ci {
        for y in 0..h {
            let src_off = c * ph * pw + (y + p) * pw + p;
            let dst_off = c * h * w + y * w;
            grad_input[dst_off..dst_off + w].copy_from_slice(&grad_padded[src_off..src_off + w]);
        }
    }

    Ok((
        Tensor::new(&[ci, h, w], grad_input)?,
        Tensor::new(params.kernels.shape(), grad_kernels)?,
        Tensor::new(&[co], grad_bias)?,
    ))
}
