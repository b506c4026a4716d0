//! Synthetic Gaussian-blob corpus.
//!
//! Each class gets a fixed mean pattern whose elements are drawn uniformly
//! from `[0.5 - mean_spread, 0.5 + mean_spread]`; samples are the class
//! mean plus elementwise Gaussian noise, clipped back into `[0, 1]`.
//! Train and test splits share the class means but use independent noise
//! streams, all derived from one seed.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::nncore::Tensor;
use crate::rng::stream;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub num_classes: usize,
    pub sample_shape: Vec<usize>,
    pub train_size: usize,
    pub test_size: usize,
    /// Half-width of the uniform band the class-mean elements are drawn
    /// from, centered at 0.5.
    pub mean_spread: f32,
    /// Standard deviation of the per-element sample noise.
    pub noise_sigma: f32,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_classes: 10,
            sample_shape: vec![28, 28],
            train_size: 10_000,
            test_size: 2_000,
            mean_spread: 0.18,
            noise_sigma: 0.55,
            seed: 0,
        }
    }
}

/// Generate matched (train, test) datasets.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, Dataset)> {
    if cfg.num_classes == 0 {
        return Err(Error::Config("synthetic num_classes must be positive".into()));
    }
    if cfg.mean_spread < 0.0 || cfg.mean_spread > 0.5 {
        return Err(Error::Config(
            "synthetic mean_spread must lie in [0, 0.5]".into(),
        ));
    }
    if cfg.noise_sigma < 0.0 {
        return Err(Error::Config("synthetic noise_sigma must be >= 0".into()));
    }
    let dim: usize = cfg.sample_shape.iter().product();
    if dim == 0 {
        return Err(Error::Config("synthetic sample_shape must be nonempty".into()));
    }

    let mut means_rng = stream(cfg.seed, "synthetic/means");
    let means: Vec<Vec<f32>> = (0..cfg.num_classes)
        .map(|_| {
            (0..dim)
                .map(|_| means_rng.random_range(0.5 - cfg.mean_spread..=0.5 + cfg.mean_spread))
                .collect()
        })
        .collect();

    let train = draw_split(cfg, &means, cfg.train_size, "train")?;
    let test = draw_split(cfg, &means, cfg.test_size, "test")?;
    Ok((train, test))
}

fn draw_split(
    cfg: &SyntheticConfig,
    means: &[Vec<f32>],
    size: usize,
    split: &str,
) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::Config(format!("synthetic {split} split is empty")));
    }
    let dim = means[0].len();
    let mut rng = stream(cfg.seed, &format!("synthetic/draw/{split}"));
    let mut data = Vec::with_capacity(size * dim);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let class = i % cfg.num_classes;
        labels.push(class);
        for &m in &means[class] {
            let z: f32 = rng.sample(StandardNormal);
            data.push((m + cfg.noise_sigma * z).clamp(0.0, 1.0));
        }
    }
    let mut shape = vec![size];
    shape.extend_from_slice(&cfg.sample_shape);
    Dataset::new(Tensor::new(shape, data)?, labels, cfg.num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_valid_and_deterministic() {
        let cfg = SyntheticConfig {
            num_classes: 4,
            sample_shape: vec![3, 3],
            train_size: 40,
            test_size: 12,
            mean_spread: 0.2,
            noise_sigma: 0.3,
            seed: 9,
        };
        let (train_a, test_a) = generate_synthetic(&cfg).unwrap();
        let (train_b, test_b) = generate_synthetic(&cfg).unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);
        assert_eq!(train_a.len(), 40);
        assert_eq!(test_a.len(), 12);
        assert_eq!(train_a.class_counts(), vec![10; 4]);
        assert!(train_a.features().data().iter().all(|v| (0.0..=1.0).contains(v)));
        // train and test use different noise draws
        assert_ne!(train_a.sample_values(0), test_a.sample_values(0));
    }

    #[test]
    fn classes_are_separated_when_noise_is_small() {
        let cfg = SyntheticConfig {
            num_classes: 2,
            sample_shape: vec![8],
            train_size: 20,
            test_size: 20,
            mean_spread: 0.4,
            noise_sigma: 0.01,
            seed: 3,
        };
        let (train, _) = generate_synthetic(&cfg).unwrap();
        // Samples of the same class are much closer than cross-class.
        let d_same = dist(train.sample_values(0), train.sample_values(2));
        let d_cross = dist(train.sample_values(0), train.sample_values(1));
        assert!(d_same < d_cross, "same {d_same}, cross {d_cross}");
    }

    fn dist(a: &[f32], b: &[f32]) -> f32 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f32>()
            .sqrt()
    }
}
