//! Ablation-based filter importance.
//!
//! The importance of final-conv filter `i` is measured by silencing its
//! channel and re-evaluating classification error: with baseline error `E`
//! (all filters present) and per-filter errors `e_i`, the raw weight is
//! `w'_i = E - e_i`, normalized across filters with a softmax. A filter
//! whose removal hurts has `e_i > E` and therefore a *negative* raw weight;
//! see [`ImportanceOptions::negate`] for the flipped convention.

mod heatmap;

pub use heatmap::{bilinear_upsample, extract, heatmap, localize, weighted_sum, Heatmap};

use crate::checkpoint::{digest_bytes, model_digest};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{AblationMask, Network};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Knobs for [`compute_importance`].
#[derive(Clone, Copy, Debug)]
pub struct ImportanceOptions {
    /// Flip the raw weights to `e_i - E` before the softmax, giving *more*
    /// weight to filters whose ablation increases error.
    pub negate: bool,
    /// Recorded in the report; identifies the eval-subset draw.
    pub seed: u64,
    /// Run the per-filter evaluations concurrently. The result is identical
    /// either way; sequential mode exists so that can be verified.
    pub parallel: bool,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        Self {
            negate: false,
            seed: 0,
            parallel: true,
        }
    }
}

/// Baseline error, per-filter ablation errors, and the derived weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_error: f64,
    pub errors: Vec<f64>,
    pub raw_weights: Vec<f64>,
    pub weights: Vec<f64>,
    pub eval_set_size: usize,
    pub seed: u64,
    pub model_digest: String,
    pub negated: bool,
}

impl ImportanceReport {
    pub fn n_filters(&self) -> usize {
        self.weights.len()
    }

    /// Checks the structural invariants every well-formed report satisfies.
    pub fn validate(&self) -> Result<()> {
        let n = self.errors.len();
        if n == 0 || self.raw_weights.len() != n || self.weights.len() != n {
            return Err(Error::Corrupt {
                format: "importance report",
                detail: "errors/raw_weights/weights lengths disagree".into(),
            });
        }
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.baseline_error) || !self.errors.iter().all(|&e| in_unit(e)) {
            return Err(Error::Corrupt {
                format: "importance report",
                detail: "error rates must lie in [0,1]".into(),
            });
        }
        for (i, &raw) in self.raw_weights.iter().enumerate() {
            let expected = if self.negated {
                self.errors[i] - self.baseline_error
            } else {
                self.baseline_error - self.errors[i]
            };
            if raw != expected {
                return Err(Error::Corrupt {
                    format: "importance report",
                    detail: format!("raw_weights[{}] != baseline - errors[{}]", i, i),
                });
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || !self.weights.iter().all(|&w| w > 0.0) {
            return Err(Error::Corrupt {
                format: "importance report",
                detail: format!("weights must be positive and sum to 1 (sum = {})", sum),
            });
        }
        if argmax(&self.weights) != argmax(&self.raw_weights) {
            return Err(Error::Corrupt {
                format: "importance report",
                detail: "softmax must preserve the argmax".into(),
            });
        }
        Ok(())
    }

    /// Canonical JSON encoding (also the on-disk format).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let report: ImportanceReport = serde_json::from_str(json).map_err(|e| Error::Corrupt {
            format: "importance report",
            detail: e.to_string(),
        })?;
        report.validate()?;
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::checkpoint::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// SHA-256 over the canonical JSON; used as heatmap provenance.
    pub fn digest(&self) -> String {
        digest_bytes(self.to_json().as_bytes())
    }
}

/// Index of the first maximum.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn argmax_f32(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `eval_set` whose argmax logit disagrees with the label when
/// the network runs under `mask`.
pub fn measure_error(net: &Network<f32>, eval_set: &Dataset, mask: &AblationMask) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let spec = net.spec();
    if eval_set.dims() != (spec.input_height, spec.input_width) {
        return Err(Error::ShapeMismatch {
            what: "eval set image size",
            expected: format!("{}x{}", spec.input_height, spec.input_width),
            got: format!("{}x{}", eval_set.dims().0, eval_set.dims().1),
        });
    }
    let wrong: usize = (0..eval_set.len())
        .into_par_iter()
        .map(|i| {
            let (logits, _) = net
                .classify(&eval_set.image(i), mask)
                .expect("eval dims checked above");
            usize::from(argmax_f32(logits.data()) != eval_set.labels()[i] as usize)
        })
        .sum();
    Ok(wrong as f64 / eval_set.len() as f64)
}

/// Per-class and overall accuracy on `eval_set` (no ablation).
pub fn accuracy_by_class(
    net: &Network<f32>,
    eval_set: &Dataset,
) -> Result<(f64, Vec<(usize, usize)>)> {
    if eval_set.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let mask = AblationMask::empty(net.n_final_filters());
    let n_classes = net.spec().n_classes;
    let per_class = (0..eval_set.len())
        .into_par_iter()
        .fold(
            || vec![(0usize, 0usize); n_classes],
            |mut acc, i| {
                let (logits, _) = net
                    .classify(&eval_set.image(i), &mask)
                    .expect("eval dims validated by caller");
                let label = eval_set.labels()[i] as usize;
                acc[label].1 += 1;
                if argmax_f32(logits.data()) == label {
                    acc[label].0 += 1;
                }
                acc
            },
        )
        .reduce(
            || vec![(0usize, 0usize); n_classes],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    x.0 += y.0;
                    x.1 += y.1;
                }
                a
            },
        );
    let correct: usize = per_class.iter().map(|c| c.0).sum();
    Ok((correct as f64 / eval_set.len() as f64, per_class))
}

/// Softmax with max subtraction.
fn softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|&v| (v - max).exp()).collect();
    let denom: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / denom).collect()
}

/// Runs the full ablation protocol: baseline error with every filter
/// present, one error per silenced filter, raw weights, and their softmax.
pub fn compute_importance(
    net: &Network<f32>,
    eval_set: &Dataset,
    options: ImportanceOptions,
) -> Result<ImportanceReport> {
    let n = net.n_final_filters();
    let baseline = measure_error(net, eval_set, &AblationMask::empty(n))?;
    let errors: Vec<f64> = if options.parallel {
        (0..n)
            .into_par_iter()
            .map(|i| measure_error(net, eval_set, &AblationMask::single(n, i)?))
            .collect::<Result<_>>()?
    } else {
        (0..n)
            .map(|i| measure_error(net, eval_set, &AblationMask::single(n, i)?))
            .collect::<Result<_>>()?
    };
    let raw_weights: Vec<f64> = errors
        .iter()
        .map(|&e| {
            if options.negate {
                e - baseline
            } else {
                baseline - e
            }
        })
        .collect();
    let weights = softmax(&raw_weights);
    let report = ImportanceReport {
        baseline_error: baseline,
        errors,
        raw_weights,
        weights,
        eval_set_size: eval_set.len(),
        seed: options.seed,
        model_digest: model_digest(net),
        negated: options.negate,
    };
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::tensor::Tensor;
    use rand::Rng;

    fn toy_spec(n_filters: usize) -> ModelSpec {
        ModelSpec {
            conv1_filters: 2,
            conv2_filters: n_filters,
            input_height: 8,
            input_width: 8,
            hidden: [8, 6],
            n_classes: 4,
        }
    }

    fn random_dataset(n: usize, h: usize, w: usize, n_classes: usize, seed: u64) -> Dataset {
        let mut rng = crate::init::seeded_rng(seed);
        let images = (0..n * h * w).map(|_| rng.random_range(0.0..1.0)).collect();
        let labels = (0..n).map(|i| (i % n_classes) as u8).collect();
        Dataset::from_raw(images, labels, h, w).unwrap()
    }

    #[test]
    fn empty_eval_set_is_rejected() {
        let net = Network::<f32>::init(toy_spec(2), 1).unwrap();
        let empty = Dataset::from_raw(vec![], vec![], 8, 8).unwrap();
        assert!(matches!(
            measure_error(&net, &empty, &AblationMask::empty(2)),
            Err(Error::EmptyEvalSet)
        ));
    }

    #[test]
    fn untrained_net_sits_at_chance_error_on_balanced_data() {
        let net = Network::<f32>::init(ModelSpec::lenet(), 42).unwrap();
        let data = random_dataset(2000, 28, 28, 10, 9);
        let err = measure_error(&net, &data, &AblationMask::empty(16)).unwrap();
        assert!((err - 0.9).abs() < 0.05, "chance-level error, got {err}");
    }

    #[test]
    fn duplicate_filters_get_uniform_weights() {
        // Make every final-conv filter identical: each e_i is then equal,
        // so the softmax must be exactly uniform.
        let mut net = Network::<f32>::init(toy_spec(3), 7).unwrap();
        let kshape = net.conv2.kernels.shape().to_vec();
        let plane: usize = kshape[1..].iter().product();
        let first: Vec<f32> = net.conv2.kernels.data()[..plane].to_vec();
        let repeated: Vec<f32> = first
            .iter()
            .cycle()
            .take(plane * kshape[0])
            .cloned()
            .collect();
        net.conv2.kernels = Tensor::new(&kshape, repeated).unwrap();
        net.conv2.bias = Tensor::zeros(&[kshape[0]]);
        // Symmetry also needs fc1 to treat every channel block identically,
        // otherwise zeroing different duplicates still changes the logits.
        let block = net.spec().flatten_len() / kshape[0];
        let m = net.fc1.weights.shape()[0];
        let w = net.fc1.weights.data_mut();
        for row in 0..m {
            for k in 0..block {
                let v = w[row * block * kshape[0] + k];
                for c in 1..kshape[0] {
                    w[row * block * kshape[0] + c * block + k] = v;
                }
            }
        }
        let data = random_dataset(64, 8, 8, 4, 3);
        let report = compute_importance(&net, &data, ImportanceOptions::default()).unwrap();
        for i in 1..3 {
            assert_eq!(report.errors[0], report.errors[i]);
            assert!((report.weights[i] - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn report_round_trips_through_json() {
        let net = Network::<f32>::init(toy_spec(2), 3).unwrap();
        let data = random_dataset(40, 8, 8, 4, 11);
        let report = compute_importance(&net, &data, ImportanceOptions::default()).unwrap();
        let json = report.to_json();
        let back = ImportanceReport::from_json(&json).unwrap();
        assert_eq!(report, back);
        assert_eq!(json, back.to_json());
    }

    #[test]
    fn negate_flips_the_raw_weight_sign() {
        let net = Network::<f32>::init(toy_spec(2), 3).unwrap();
        let data = random_dataset(40, 8, 8, 4, 11);
        let plain = compute_importance(&net, &data, ImportanceOptions::default()).unwrap();
        let flipped = compute_importance(
            &net,
            &data,
            ImportanceOptions {
                negate: true,
                ..Default::default()
            },
        )
        .unwrap();
        for (a, b) in plain.raw_weights.iter().zip(&flipped.raw_weights) {
            assert_eq!(*a, -*b);
        }
        assert!(flipped.validate().is_ok());
    }

    #[test]
    fn eval_order_does_not_change_the_report() {
        let net = Network::<f32>::init(toy_spec(2), 5).unwrap();
        let data = random_dataset(60, 8, 8, 4, 2);
        let report = compute_importance(&net, &data, ImportanceOptions::default()).unwrap();
        // Reverse the sample order; error counts are order-free sums.
        let reversed = data.select(&(0..60).rev().collect::<Vec<_>>());
        let report_rev = compute_importance(&net, &reversed, ImportanceOptions::default()).unwrap();
        assert_eq!(report.baseline_error, report_rev.baseline_error);
        assert_eq!(report.errors, report_rev.errors);
    }
}
