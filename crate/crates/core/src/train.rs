//! Mini-batch training loop.
//!
//! Per-sample gradients inside a batch are accumulated over a fixed number
//! of chunks that is independent of the worker count, and the chunk buffers
//! are merged in chunk order, so a seed fully determines the trained
//! parameters no matter how many threads run.

use crate::data::{BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::interpret::measure_error;
use crate::model::{AblationMask, Gradients, Network};
use crate::optim::{AdamConfig, AdamState};
use rayon::prelude::*;

/// Chunks per batch for gradient accumulation.
const GRAD_CHUNKS: usize = 16;

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 300,
            seed: 42,
            adam: AdamConfig::default(),
        }
    }
}

/// Loss and accuracy trace of one epoch.
#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Test accuracy after the epoch, when a test set was supplied.
    pub test_accuracy: Option<f64>,
}

/// Trains `net` in place. `on_epoch` fires after each epoch with its stats.
pub fn train(
    net: &mut Network<f32>,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<Vec<EpochStats>> {
    if train_set.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let spec = *net.spec();
    if train_set.dims() != (spec.input_height, spec.input_width) {
        return Err(Error::ShapeMismatch {
            what: "training set image size",
            expected: format!("{}x{}", spec.input_height, spec.input_width),
            got: format!("{}x{}", train_set.dims().0, train_set.dims().1),
        });
    }
    let plan = BatchPlan::new(train_set.len(), config.batch_size, config.seed)?;
    let shapes = net.param_tensors().map(|t| t.shape().to_vec());
    let shape_refs: Vec<&[usize]> = shapes.iter().map(|s| s.as_slice()).collect();
    let mut adam = AdamState::<f32>::new(config.adam, &shape_refs);

    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0f64;
        let mut sample_count = 0usize;
        for batch in plan.epoch(epoch) {
            let (grads, batch_loss) = batch_gradients(net, train_set, &batch)?;
            loss_sum += batch_loss;
            sample_count += batch.len();
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite { what: "batch loss" });
            }
            let grad_tensors = grads.tensors();
            let mut params = net.param_tensors_mut();
            adam.step(&mut params, &grad_tensors)?;
        }
        let mean_loss = loss_sum / sample_count as f64;
        let test_accuracy = match test_set {
            Some(ts) => {
                Some(1.0 - measure_error(net, ts, &AblationMask::empty(spec.conv2_filters))?)
            }
            None => None,
        };
        let stats = EpochStats {
            epoch,
            mean_loss,
            test_accuracy,
        };
        on_epoch(&stats);
        history.push(stats);
    }
    Ok(history)
}

/// Mean gradient and cumulative loss over one batch of sample indices.
fn batch_gradients(
    net: &Network<f32>,
    train_set: &Dataset,
    batch: &[usize],
) -> Result<(Gradients<f32>, f64)> {
    let chunk_size = batch.len().div_ceil(GRAD_CHUNKS);
    let partials: Vec<Result<(Gradients<f32>, f64)>> = batch
        .par_chunks(chunk_size)
        .map(|chunk| {
            let mut acc = Gradients::zeros_like(net);
            let mut loss = 0.0f64;
            for &index in chunk {
                let image = train_set.image(index);
                let label = train_set.labels()[index] as usize;
                let (sample_loss, grads) = net.loss_and_gradients(&image, label)?;
                loss += sample_loss as f64;
                acc.accumulate(&grads);
            }
            Ok((acc, loss))
        })
        .collect();

    let mut total = Gradients::zeros_like(net);
    let mut loss = 0.0f64;
    for partial in partials {
        let (grads, chunk_loss) = partial?;
        total.accumulate(&grads);
        loss += chunk_loss;
    }
    total.scale(1.0 / batch.len() as f32);
    Ok((total, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use rand::Rng;

    fn toy_spec() -> ModelSpec {
        ModelSpec {
            conv1_filters: 2,
            conv2_filters: 3,
            input_height: 8,
            input_width: 8,
            hidden: [12, 8],
            n_classes: 3,
        }
    }

    /// Separable 3-class toy data: class k lights up a distinct region.
    fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = crate::init::seeded_rng(seed);
        let mut images = Vec::with_capacity(n * 64);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 3;
            let mut img = vec![0.0f32; 64];
            for v in img.iter_mut() {
                *v = rng.random_range(0.0..0.15);
            }
            let (y0, x0) = [(1, 1), (1, 5), (5, 3)][class];
            for y in y0..y0 + 2 {
                for x in x0..x0 + 2 {
                    img[y * 8 + x] = rng.random_range(0.85..1.0);
                }
            }
            images.extend_from_slice(&img);
            labels.push(class as u8);
        }
        Dataset::from_raw(images, labels, 8, 8).unwrap()
    }

    #[test]
    fn loss_falls_and_accuracy_rises_on_separable_data() {
        let data = synthetic_dataset(120, 5);
        let mut net = Network::<f32>::init(toy_spec(), 5).unwrap();
        let config = TrainConfig {
            epochs: 8,
            batch_size: 15,
            seed: 5,
            adam: AdamConfig {
                learning_rate: 0.01,
                decay: 0.0,
                ..AdamConfig::default()
            },
        };
        let history = train(&mut net, &data, Some(&data), &config, |_| {}).unwrap();
        let first = history.first().unwrap();
        let last = history.last().unwrap();
        assert!(last.mean_loss < first.mean_loss);
        assert!(
            last.test_accuracy.unwrap() > 0.9,
            "expected the toy task to be learned, got {:?}",
            last.test_accuracy
        );
    }

    #[test]
    fn same_seed_trains_to_identical_parameters() {
        let data = synthetic_dataset(60, 8);
        let config = TrainConfig {
            epochs: 2,
            batch_size: 20,
            seed: 9,
            adam: AdamConfig::default(),
        };
        let mut a = Network::<f32>::init(toy_spec(), 9).unwrap();
        let mut b = Network::<f32>::init(toy_spec(), 9).unwrap();
        train(&mut a, &data, None, &config, |_| {}).unwrap();
        train(&mut b, &data, None, &config, |_| {}).unwrap();
        for (x, y) in a.param_tensors().iter().zip(b.param_tensors().iter()) {
            let xb: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
    }

    #[test]
    fn zero_epochs_leaves_the_network_untouched() {
        let data = synthetic_dataset(30, 2);
        let mut net = Network::<f32>::init(toy_spec(), 2).unwrap();
        let before = net.param_tensors().map(|t| t.data().to_vec());
        let config = TrainConfig {
            epochs: 0,
            batch_size: 10,
            seed: 2,
            adam: AdamConfig::default(),
        };
        let history = train(&mut net, &data, None, &config, |_| {}).unwrap();
        assert!(history.is_empty());
        for (t, b) in net.param_tensors().iter().zip(&before) {
            assert_eq!(t.data(), b.as_slice());
        }
    }
}
