//! Controlled sampling: uniform class-balanced draws, non-uniform draws
//! favoring one class, and the paired sampling plan used by the
//! experiment driver.
//!
//! All sampling is without replacement and deterministic in its seed.

use rand::seq::index;
use rand::Rng;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

/// Probability that one non-uniform draw picks the favored class; the
/// other classes share the remainder equally.
pub const FAVORED_PROBABILITY: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Uniform,
    NonUniform,
}

/// A recorded sampling request.
#[derive(Debug, Clone)]
pub struct SamplingPlan {
    pub size: usize,
    pub mode: SamplingMode,
    /// Present iff `mode == NonUniform`.
    pub favored_class: Option<usize>,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        match (self.mode, self.favored_class) {
            (SamplingMode::Uniform, Some(_)) => Err(Error::Config(
                "uniform sampling does not take a favored class".into(),
            )),
            (SamplingMode::NonUniform, None) => Err(Error::Config(
                "non-uniform sampling requires a favored class".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        self.validate()?;
        match self.mode {
            SamplingMode::Uniform => sample_uniform(data, self.size, self.seed),
            SamplingMode::NonUniform => sample_nonuniform(
                data,
                self.size,
                self.favored_class.expect("validated"),
                self.seed,
            ),
        }
    }
}

/// Indices of a class-balanced draw of `size` samples without replacement.
///
/// Quotas are distributed one sample at a time over a seeded round-robin
/// of the classes, skipping classes whose samples are used up, so
/// per-class counts differ by at most one whenever capacity allows.
pub fn sample_uniform_indices(data: &Dataset, size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::InvalidDataset("sample of zero size".into()));
    }
    if size > data.len() {
        return Err(Error::InvalidDataset(format!(
            "cannot sample {size} from {} samples",
            data.len()
        )));
    }
    let mut rng = stream(seed, "sample-uniform");
    let by_class = data.class_indices();
    let present: Vec<usize> = (0..data.num_classes())
        .filter(|&c| !by_class[c].is_empty())
        .collect();

    // Round-robin quota assignment over a seeded class order.
    let mut order = present.clone();
    shuffle(&mut order, &mut rng);
    let mut quota = vec![0usize; data.num_classes()];
    let mut remaining = size;
    while remaining > 0 {
        let mut progressed = false;
        for &c in &order {
            if remaining == 0 {
                break;
            }
            if quota[c] < by_class[c].len() {
                quota[c] += 1;
                remaining -= 1;
                progressed = true;
            }
        }
        debug_assert!(progressed, "size <= |data| guarantees capacity");
        if !progressed {
            break;
        }
    }

    let mut picked = Vec::with_capacity(size);
    for &c in &present {
        if quota[c] == 0 {
            continue;
        }
        for k in index::sample(&mut rng, by_class[c].len(), quota[c]) {
            picked.push(by_class[c][k]);
        }
    }
    shuffle(&mut picked, &mut rng);
    Ok(picked)
}

/// Class-balanced draw of `size` samples; see [`sample_uniform_indices`].
pub fn sample_uniform(data: &Dataset, size: usize, seed: u64) -> Result<Dataset> {
    data.subset(&sample_uniform_indices(data, size, seed)?)
}

/// Indices of a draw favoring one class: each draw picks the favored
/// class with probability 0.8, otherwise one of the remaining classes
/// chosen uniformly. Draws are without replacement; an exhausted
/// non-favored class is retried against the others (falling back to the
/// favored class when every other class is empty), and the draw fails only
/// when the favored class itself runs out.
pub fn sample_nonuniform_indices(
    data: &Dataset,
    size: usize,
    favored_class: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::InvalidDataset("sample of zero size".into()));
    }
    if size > data.len() {
        return Err(Error::InvalidDataset(format!(
            "cannot sample {size} from {} samples",
            data.len()
        )));
    }
    if favored_class >= data.num_classes() {
        return Err(Error::InvalidDataset(format!(
            "favored class {favored_class} out of range for {} classes",
            data.num_classes()
        )));
    }
    let mut pools = data.class_indices();
    if pools[favored_class].is_empty() {
        return Err(Error::InvalidDataset(format!(
            "favored class {favored_class} has no samples"
        )));
    }
    let mut rng = stream(seed, "sample-nonuniform");
    let others: Vec<usize> = (0..data.num_classes())
        .filter(|&c| c != favored_class)
        .collect();
    let mut picked = Vec::with_capacity(size);
    for _ in 0..size {
        let wants_favored = rng.random::<f64>() < FAVORED_PROBABILITY;
        let class = if wants_favored {
            favored_class
        } else {
            // Retry a different non-favored class when the drawn one is
            // exhausted; favored is the last resort.
            let mut live: Vec<usize> = others
                .iter()
                .copied()
                .filter(|&c| !pools[c].is_empty())
                .collect();
            if live.is_empty() {
                favored_class
            } else {
                live.swap_remove(rng.random_range(0..live.len()))
            }
        };
        let pool = &mut pools[class];
        if pool.is_empty() {
            debug_assert_eq!(class, favored_class);
            return Err(Error::InvalidDataset(format!(
                "favored class {favored_class} exhausted after {} draws",
                picked.len()
            )));
        }
        let k = rng.random_range(0..pool.len());
        picked.push(pool.swap_remove(k));
    }
    Ok(picked)
}

/// Favored-class draw of `size` samples; see
/// [`sample_nonuniform_indices`].
pub fn sample_nonuniform(
    data: &Dataset,
    size: usize,
    favored_class: usize,
    seed: u64,
) -> Result<Dataset> {
    data.subset(&sample_nonuniform_indices(data, size, favored_class, seed)?)
}

/// One (uniform, non-uniform) dataset pair of a controlled experiment.
#[derive(Debug, Clone)]
pub struct ControlledPair {
    /// 1 = sampled from the training data, 2 = from the test data.
    pub setting: u8,
    pub repetition: usize,
    pub favored_class: usize,
    pub uniform: Dataset,
    pub nonuniform: Dataset,
    /// Row indices into the source dataset, aligned with the samples.
    pub uniform_indices: Vec<usize>,
    pub nonuniform_indices: Vec<usize>,
}

/// Per-setting sample sizes; `None` disables a setting.
#[derive(Debug, Clone, Copy)]
pub struct SettingSizes {
    /// Setting 1 samples from the training data.
    pub setting1: Option<usize>,
    /// Setting 2 samples from the test data.
    pub setting2: Option<usize>,
}

impl Default for SettingSizes {
    fn default() -> Self {
        Self {
            setting1: Some(5000),
            setting2: Some(1000),
        }
    }
}

/// The default controlled plan: per repetition, a (uniform, non-uniform)
/// pair of 5,000 samples from the training data (setting 1) and of 1,000
/// samples from the test data (setting 2). The favored class of each
/// non-uniform draw is picked at random per pair.
pub fn make_controlled_pairs(
    train: &Dataset,
    test: &Dataset,
    repetitions: usize,
    seed: u64,
) -> Result<Vec<ControlledPair>> {
    make_controlled_pairs_sized(train, test, repetitions, SettingSizes::default(), seed)
}

/// [`make_controlled_pairs`] with explicit per-setting sizes.
pub fn make_controlled_pairs_sized(
    train: &Dataset,
    test: &Dataset,
    repetitions: usize,
    sizes: SettingSizes,
    seed: u64,
) -> Result<Vec<ControlledPair>> {
    let mut pairs = Vec::new();
    for rep in 0..repetitions {
        let settings = [(1u8, train, sizes.setting1), (2u8, test, sizes.setting2)];
        for (setting, source, size) in settings {
            let Some(size) = size else { continue };
            if size > source.len() {
                return Err(Error::InvalidDataset(format!(
                    "setting {setting} needs {size} samples but the source has {}",
                    source.len()
                )));
            }
            let label = format!("pairs/s{setting}/rep{rep}");
            let favored = stream(seed, &format!("{label}/favored"))
                .random_range(0..source.num_classes());
            let uniform_indices =
                sample_uniform_indices(source, size, derive_seed(seed, &format!("{label}/uni")))?;
            let nonuniform_indices = sample_nonuniform_indices(
                source,
                size,
                favored,
                derive_seed(seed, &format!("{label}/non")),
            )?;
            pairs.push(ControlledPair {
                setting,
                repetition: rep,
                favored_class: favored,
                uniform: source.subset(&uniform_indices)?,
                nonuniform: source.subset(&nonuniform_indices)?,
                uniform_indices,
                nonuniform_indices,
            });
        }
    }
    Ok(pairs)
}

fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    // Fisher-Yates
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Tensor;

    /// `per_class` samples for each of `classes` classes, feature = class
    /// id scaled into [0, 1].
    fn balanced(classes: usize, per_class: usize) -> Dataset {
        let n = classes * per_class;
        let mut data = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % classes;
            data.push(c as f32 / classes as f32);
            labels.push(c);
        }
        Dataset::new(Tensor::new(vec![n, 1], data).unwrap(), labels, classes).unwrap()
    }

    #[test]
    fn uniform_one_per_class_on_balanced_data() {
        let d = balanced(10, 30);
        let s = sample_uniform(&d, 10, 1).unwrap();
        assert_eq!(s.class_counts(), vec![1; 10]);
    }

    #[test]
    fn uniform_full_size_is_permutation() {
        let d = balanced(3, 7);
        let idx = sample_uniform_indices(&d, d.len(), 2).unwrap();
        let mut sorted = idx.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..d.len()).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_counts_within_one() {
        let d = balanced(10, 200);
        let s = sample_uniform(&d, 995, 3).unwrap();
        let counts = s.class_counts();
        let min = counts.iter().min().unwrap();
        let max = counts.iter().max().unwrap();
        assert!(max - min <= 1, "counts {counts:?}");
    }

    #[test]
    fn uniform_no_duplicates_and_deterministic() {
        let d = balanced(5, 40);
        let a = sample_uniform_indices(&d, 73, 9).unwrap();
        let b = sample_uniform_indices(&d, 73, 9).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), a.len());
    }

    #[test]
    fn uniform_seeds_give_distinct_draws() {
        let d = balanced(5, 40);
        let mut distinct = std::collections::HashSet::new();
        for seed in 0..100u64 {
            let mut idx = sample_uniform_indices(&d, 20, seed).unwrap();
            idx.sort_unstable();
            distinct.insert(idx);
        }
        assert!(distinct.len() > 90, "only {} distinct draws", distinct.len());
    }

    #[test]
    fn uniform_rejects_oversized_request() {
        let d = balanced(2, 3);
        assert!(sample_uniform(&d, 7, 0).is_err());
    }

    #[test]
    fn nonuniform_favored_count_in_binomial_band() {
        // Binomial(1000, 0.8): mean 800, sd 12.6; [750, 850] is the ±4 sd
        // band, so every seed should land inside it.
        let d = balanced(10, 1000);
        for seed in 0..25u64 {
            let s = sample_nonuniform(&d, 1000, 4, seed).unwrap();
            let count = s.class_counts()[4];
            assert!((750..=850).contains(&count), "seed {seed}: count {count}");
        }
    }

    #[test]
    fn nonuniform_single_draw_frequency() {
        let d = balanced(10, 10);
        let mut hits = 0usize;
        for seed in 0..10_000u64 {
            let s = sample_nonuniform(&d, 1, 2, seed).unwrap();
            if s.labels()[0] == 2 {
                hits += 1;
            }
        }
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.8).abs() < 0.02, "frequency {freq}");
    }

    #[test]
    fn nonuniform_empty_favored_class_errors() {
        let d = Dataset::new(
            Tensor::new(vec![4, 1], vec![0.0, 0.1, 0.2, 0.3]).unwrap(),
            vec![0, 0, 1, 1],
            3,
        )
        .unwrap();
        assert!(sample_nonuniform(&d, 2, 2, 0).is_err());
    }

    #[test]
    fn nonuniform_falls_back_to_favored_when_others_exhausted() {
        // 1 sample in each non-favored class, plenty in the favored one:
        // 14 draws must take both singletons and 12 favored samples.
        let mut labels = vec![0usize; 20];
        labels.extend([1, 2]);
        let d = Dataset::new(
            Tensor::new(vec![22, 1], vec![0.5; 22]).unwrap(),
            labels,
            3,
        )
        .unwrap();
        let s = sample_nonuniform(&d, 14, 0, 5).unwrap();
        assert_eq!(s.len(), 14);
        assert_eq!(s.class_counts(), vec![12, 1, 1]);
    }

    #[test]
    fn nonuniform_errors_when_favored_exhausted() {
        let d = Dataset::new(
            Tensor::new(vec![4, 1], vec![0.1; 4]).unwrap(),
            vec![0, 1, 1, 1],
            2,
        )
        .unwrap();
        // Needs ~3 favored draws on average but class 0 has one sample.
        assert!(sample_nonuniform(&d, 4, 0, 0).is_err());
    }

    #[test]
    fn controlled_pairs_shape_and_postconditions() {
        let train = balanced(10, 40);
        let test = balanced(10, 30);
        let sizes = SettingSizes {
            setting1: Some(100),
            setting2: Some(50),
        };
        let pairs = make_controlled_pairs_sized(&train, &test, 5, sizes, 11).unwrap();
        assert_eq!(pairs.len(), 10); // 2 settings x 5 repetitions
        for p in &pairs {
            let size = if p.setting == 1 { 100 } else { 50 };
            assert_eq!(p.uniform.len(), size);
            assert_eq!(p.nonuniform.len(), size);
            // uniform postcondition: balanced within one
            let counts = p.uniform.class_counts();
            assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
            // non-uniform postcondition: favored class dominates
            let favored_count = p.nonuniform.class_counts()[p.favored_class];
            assert!(
                favored_count * 10 >= size * 7,
                "favored {favored_count} of {size}"
            );
            // no duplicate source rows
            for idx in [&p.uniform_indices, &p.nonuniform_indices] {
                let mut sorted = idx.clone();
                sorted.sort_unstable();
                sorted.dedup();
                assert_eq!(sorted.len(), idx.len());
            }
        }
    }

    #[test]
    fn controlled_pairs_zero_repetitions_empty() {
        let train = balanced(2, 10);
        let test = balanced(2, 10);
        let sizes = SettingSizes {
            setting1: Some(4),
            setting2: Some(4),
        };
        assert!(make_controlled_pairs_sized(&train, &test, 0, sizes, 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn controlled_pairs_insufficient_source_errors() {
        let train = balanced(2, 10);
        let test = balanced(2, 10);
        assert!(make_controlled_pairs(&train, &test, 1, 0).is_err());
    }
}
