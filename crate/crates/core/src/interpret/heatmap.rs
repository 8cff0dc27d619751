//! Heatmap synthesis: weighted sum of feature maps, bilinear upsampling
//! back to source resolution, min-max normalization, and percentile
//! thresholding.

use crate::data::{preprocess, GrayImage, Polarity};
use crate::error::{Error, Result};
use crate::interpret::ImportanceReport;
use crate::model::{FeatureStack, Network};
use crate::tensor::Tensor;

/// Single-channel localization map at source-image resolution, normalized
/// to `[0,1]` (all zeros when the raw map was constant).
#[derive(Clone, Debug)]
pub struct Heatmap {
    values: Tensor<f64>,
    provenance: String,
}

impl Heatmap {
    pub fn values(&self) -> &Tensor<f64> {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.values.shape()[0], self.values.shape()[1])
    }

    /// Digest of the importance report the weights came from.
    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// `[0,1]` values as `f32` pixels, e.g. for PGM output.
    pub fn to_pixels(&self) -> Vec<f32> {
        self.values.data().iter().map(|&v| v as f32).collect()
    }
}

/// `raw[y,x] = sum_i weights[i] * stack[i][y,x]`, accumulated in double
/// precision in ascending filter order.
pub fn weighted_sum(stack: &FeatureStack<f32>, weights: &[f64]) -> Result<Tensor<f64>> {
    if stack.n_filters() != weights.len() {
        return Err(Error::ShapeMismatch {
            what: "heatmap channel count",
            expected: format!("{} weights", stack.n_filters()),
            got: weights.len().to_string(),
        });
    }
    let (h, w) = stack.dims();
    let plane = h * w;
    let maps = stack.maps().data();
    let mut raw = vec![0.0f64; plane];
    for (i, &weight) in weights.iter().enumerate() {
        let src = &maps[i * plane..(i + 1) * plane];
        for (acc, &v) in raw.iter_mut().zip(src) {
            *acc += weight * v as f64;
        }
    }
    Tensor::new(&[h, w], raw)
}

/// Corner-aligned bilinear resampling of a `[h,w]` map to `[out_h, out_w]`.
///
/// Output corners sample the source corners exactly: position `oy` maps to
/// `oy * (h-1) / (out_h-1)` (0 when the output axis has a single cell).
pub fn bilinear_upsample(map: &Tensor<f64>, out_h: usize, out_w: usize) -> Result<Tensor<f64>> {
    if map.shape().len() != 2 {
        return Err(Error::ShapeMismatch {
            what: "upsample input rank",
            expected: "2".into(),
            got: format!("{:?}", map.shape()),
        });
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument {
            what: "upsample size",
            detail: "output dimensions must be positive".into(),
        });
    }
    let (h, w) = (map.shape()[0], map.shape()[1]);
    let data = map.data();
    let scale = |o: usize, out_n: usize, n: usize| -> f64 {
        if out_n > 1 {
            o as f64 * (n - 1) as f64 / (out_n - 1) as f64
        } else {
            0.0
        }
    };
    let mut out = vec![0.0f64; out_h * out_w];
    for oy in 0..out_h {
        let sy = scale(oy, out_h, h);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = scale(ox, out_w, w);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let v00 = data[y0 * w + x0];
            let v01 = data[y0 * w + x1];
            let v10 = data[y1 * w + x0];
            let v11 = data[y1 * w + x1];
            out[oy * out_w + ox] =
                (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
        }
    }
    Tensor::new(&[out_h, out_w], out)
}

fn min_max_normalize(map: &mut Tensor<f64>) {
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in map.data() {
        min = min.min(v);
        max = max.max(v);
    }
    let range = max - min;
    if range == 0.0 {
        map.data_mut().fill(0.0);
        return;
    }
    for v in map.data_mut() {
        *v = (*v - min) / range;
    }
}

/// Blends the feature stack with the report weights, upsamples to source
/// resolution, and min-max normalizes.
pub fn heatmap(stack: &FeatureStack<f32>, report: &ImportanceReport) -> Result<Heatmap> {
    let raw = weighted_sum(stack, &report.weights)?;
    let (src_h, src_w) = stack.source_dims();
    let mut values = bilinear_upsample(&raw, src_h, src_w)?;
    min_max_normalize(&mut values);
    Ok(Heatmap {
        values,
        provenance: report.digest(),
    })
}

/// Binary mask of pixels at or above the nearest-rank `percentile` of the
/// heatmap values (mask entries are 0.0 or 1.0).
pub fn extract(hm: &Heatmap, percentile: f64) -> Result<Tensor<f32>> {
    let threshold = percentile_threshold(hm.values().data(), percentile)?;
    let data = hm
        .values()
        .data()
        .iter()
        .map(|&v| if v >= threshold { 1.0f32 } else { 0.0 })
        .collect();
    Tensor::new(hm.values().shape(), data)
}

/// Nearest-rank percentile: the `k`-th smallest value with
/// `k = ceil(p/100 * N)`.
pub fn percentile_threshold(values: &[f64], percentile: f64) -> Result<f64> {
    if !(percentile > 0.0 && percentile < 100.0) {
        return Err(Error::InvalidArgument {
            what: "percentile",
            detail: format!("{} is outside (0, 100)", percentile),
        });
    }
    if values.is_empty() {
        return Err(Error::InvalidArgument {
            what: "percentile input",
            detail: "no values".into(),
        });
    }
    let n = values.len();
    let k = ((percentile / 100.0 * n as f64).ceil() as usize).clamp(1, n);
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("heatmap values are finite"));
    Ok(sorted[k - 1])
}

/// Full localization pipeline for one image: polarity preprocessing, the
/// truncated convolutional forward pass, heatmap blending, and extraction.
pub fn localize(
    net: &Network<f32>,
    image: &GrayImage,
    report: &ImportanceReport,
    percentile: f64,
    polarity: Polarity,
) -> Result<(Heatmap, Tensor<f32>)> {
    let input = preprocess(image, polarity);
    let stack = net.features(&input)?;
    let hm = heatmap(&stack, report)?;
    let mask = extract(&hm, percentile)?;
    Ok((hm, mask))
}
