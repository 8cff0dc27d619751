//! Dataset containers, deterministic batch iteration, and image ingestion.

mod idx;
mod pgm;
mod preprocess;

pub use idx::{encode_idx_images, encode_idx_labels, load_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm, GrayImage};
pub use preprocess::{preprocess, Polarity};

use crate::error::{Error, Result};
use crate::init::seeded_rng;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use std::path::Path;

/// Labeled image collection. Pixels are stored contiguously in `[0,1]`;
/// labels are class indices below 10.
#[derive(Clone, Debug)]
pub struct Dataset {
    images: Vec<f32>,
    labels: Vec<u8>,
    height: usize,
    width: usize,
}

impl Dataset {
    pub fn from_raw(
        images: Vec<f32>,
        labels: Vec<u8>,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if images.len() != labels.len() * height * width {
            return Err(Error::CountMismatch {
                images: images.len() / (height * width).max(1),
                labels: labels.len(),
            });
        }
        Ok(Self {
            images,
            labels,
            height,
            width,
        })
    }

    /// Loads the canonical MNIST file pair from a directory, e.g.
    /// `train-images-idx3-ubyte` + `train-labels-idx1-ubyte`.
    pub fn load_mnist(dir: &Path, prefix: &str) -> Result<Self> {
        let images = dir.join(format!("{}-images-idx3-ubyte", prefix));
        let labels = dir.join(format!("{}-labels-idx1-ubyte", prefix));
        load_idx(&images, &labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image_pixels(&self, index: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.images[index * n..(index + 1) * n]
    }

    /// Copies sample `index` into a `[1, H, W]` tensor.
    pub fn image(&self, index: usize) -> Tensor<f32> {
        Tensor::new(
            &[1, self.height, self.width],
            self.image_pixels(index).to_vec(),
        )
        .expect("dataset image dimensions are validated at construction")
    }

    /// Seeded random subset without replacement, in draw order.
    pub fn sample_subset(&self, count: usize, seed: u64) -> Dataset {
        let count = count.min(self.len());
        let mut indices: Vec<usize> = (0..self.len()).collect();
        let mut rng = seeded_rng(seed);
        indices.shuffle(&mut rng);
        indices.truncate(count);
        self.select(&indices)
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        let n = self.height * self.width;
        let mut images = Vec::with_capacity(indices.len() * n);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(self.image_pixels(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            images,
            labels,
            height: self.height,
            width: self.width,
        }
    }

    /// Number of samples per class.
    pub fn class_counts(&self) -> [usize; 10] {
        let mut counts = [0usize; 10];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Deterministic shuffled batch schedule over `n` sample indices.
///
/// Each epoch draws a fresh permutation from the epoch-extended seed and
/// chunks it; with 60000 samples and batch size 300 that is exactly 200
/// batches per epoch.
#[derive(Clone, Copy, Debug)]
pub struct BatchPlan {
    n: usize,
    batch_size: usize,
    seed: u64,
}

impl BatchPlan {
    pub fn new(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument {
                what: "batch size",
                detail: "must be at least 1".into(),
            });
        }
        Ok(Self {
            n,
            batch_size,
            seed,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }

    /// The index batches of one epoch, in iteration order.
    pub fn epoch(&self, epoch: usize) -> Vec<Vec<usize>> {
        let mut indices: Vec<usize> = (0..self.n).collect();
        let mut rng = seeded_rng(epoch_seed(self.seed, epoch));
        indices.shuffle(&mut rng);
        indices
            .chunks(self.batch_size)
            .map(|c| c.to_vec())
            .collect()
    }
}

/// Extends the base seed with the epoch number so every epoch reshuffles
/// differently but reproducibly.
fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset(n: usize) -> Dataset {
        let images = vec![0.5f32; n * 4 * 4];
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        Dataset::from_raw(images, labels, 4, 4).unwrap()
    }

    #[test]
    fn sixty_thousand_by_three_hundred_gives_two_hundred_batches() {
        let plan = BatchPlan::new(60000, 300, 42).unwrap();
        assert_eq!(plan.batches_per_epoch(), 200);
        let batches = plan.epoch(0);
        assert_eq!(batches.len(), 200);
        assert!(batches.iter().all(|b| b.len() == 300));
    }

    #[test]
    fn same_seed_gives_identical_order_and_epochs_differ() {
        let plan = BatchPlan::new(1000, 64, 7).unwrap();
        assert_eq!(plan.epoch(0), plan.epoch(0));
        assert_eq!(plan.epoch(3), plan.epoch(3));
        assert_ne!(plan.epoch(0), plan.epoch(1));
        let other = BatchPlan::new(1000, 64, 8).unwrap();
        assert_ne!(plan.epoch(0), other.epoch(0));
    }

    #[test]
    fn every_epoch_is_a_permutation() {
        let plan = BatchPlan::new(257, 10, 3).unwrap();
        for epoch in 0..3 {
            let mut seen: Vec<usize> = plan.epoch(epoch).into_iter().flatten().collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..257).collect::<Vec<_>>());
        }
    }

    #[test]
    fn zero_batch_size_is_rejected() {
        assert!(BatchPlan::new(10, 0, 0).is_err());
    }

    #[test]
    fn subset_is_deterministic_and_preserves_pairing() {
        let ds = tiny_dataset(50);
        let a = ds.sample_subset(10, 5);
        let b = ds.sample_subset(10, 5);
        assert_eq!(a.labels(), b.labels());
        assert_eq!(a.len(), 10);
        let c = ds.sample_subset(100, 5);
        assert_eq!(c.len(), 50);
    }

    #[test]
    fn class_counts_partition_the_set() {
        let ds = tiny_dataset(95);
        let counts = ds.class_counts();
        assert_eq!(counts.iter().sum::<usize>(), 95);
        assert!(counts.iter().all(|&c| c >= 9));
    }
}
