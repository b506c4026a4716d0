//! Dataset ingestion (IDX, CSV, synthetic) and the controlled sampling
//! procedures used by the experiment driver.

mod idx;
mod sampling;
mod synthetic;

pub use idx::{load_idx, write_idx, IMAGES_MAGIC, LABELS_MAGIC};
pub use sampling::{
    make_controlled_pairs, make_controlled_pairs_sized, sample_nonuniform,
    sample_nonuniform_indices, sample_uniform, sample_uniform_indices, ControlledPair,
    SamplingMode, SamplingPlan, SettingSizes, FAVORED_PROBABILITY,
};
pub use synthetic::{generate_synthetic, SyntheticConfig};

use std::path::Path;

use crate::error::{Error, Result};
use crate::nncore::Tensor;

/// Labeled feature tensors with a fixed class count.
///
/// Invariants: one label per sample, every label below `num_classes`,
/// every feature value within `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let [n, ..] = *features.shape() else {
            return Err(Error::InvalidDataset("features must be [n, ...]".into()));
        };
        if features.shape().len() < 2 {
            return Err(Error::InvalidDataset(
                "features must have a per-sample shape".into(),
            ));
        }
        if n != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{n} samples but {} labels",
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidDataset("num_classes must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if let Some(&bad) = features
            .data()
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidDataset(format!(
                "feature value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    /// Shape of one sample (the feature shape without the leading count).
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    fn sample_len(&self) -> usize {
        self.sample_shape().iter().product()
    }

    /// Raw feature values of sample `i`.
    pub fn sample_values(&self, i: usize) -> &[f32] {
        let len = self.sample_len();
        &self.features.data()[i * len..(i + 1) * len]
    }

    /// Sample `i` as a standalone tensor.
    pub fn sample(&self, i: usize) -> Tensor {
        Tensor::new(self.sample_shape().to_vec(), self.sample_values(i).to_vec())
            .expect("sample shape is consistent")
    }

    /// New dataset holding the given source rows, in the given order.
    /// Indices may repeat.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidDataset("subset of zero samples".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidDataset(format!(
                "subset index {bad} out of range for {} samples",
                self.len()
            )));
        }
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.sample_values(i));
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.sample_shape());
        Ok(Self {
            features: Tensor::new(shape, data)?,
            labels,
            num_classes: self.num_classes,
        })
    }

    /// Per-class sample indices, ordered as they appear.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    /// Per-class sample counts.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rebuild from raw parts without re-copying; used by mutation
    /// operators that already uphold the invariants.
    pub(crate) fn from_parts_unchecked(
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Self {
        debug_assert_eq!(features.shape()[0], labels.len());
        Self {
            features,
            labels,
            num_classes,
        }
    }
}

/// Load a `features...,label` CSV with a header row. Feature values must
/// already be normalized to `[0, 1]`.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::InvalidDataset(format!("{}: {e}", path.display())))?;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (row_idx, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::InvalidDataset(format!("{}: {e}", path.display())))?;
        if record.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "row {row_idx}: need at least one feature and a label"
            )));
        }
        let d = record.len() - 1;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(Error::InvalidDataset(format!(
                    "row {row_idx}: {d} features but earlier rows had {w}"
                )))
            }
            _ => {}
        }
        for field in record.iter().take(d) {
            let v: f32 = field.parse().map_err(|_| {
                Error::InvalidDataset(format!("row {row_idx}: bad feature value {field:?}"))
            })?;
            data.push(v);
        }
        let label: usize = record[d].parse().map_err(|_| {
            Error::InvalidDataset(format!("row {row_idx}: bad label {:?}", &record[d]))
        })?;
        labels.push(label);
    }
    let width = width.ok_or_else(|| Error::InvalidDataset("CSV has no data rows".into()))?;
    let n = labels.len();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Tensor::new(vec![n, width], data)?, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            Tensor::new(vec![4, 2], vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]).unwrap(),
            vec![0, 1, 0, 1],
            2,
        )
        .unwrap()
    }

    #[test]
    fn invariants_enforced() {
        let f = Tensor::new(vec![2, 2], vec![0.0, 0.5, 1.0, 0.5]).unwrap();
        assert!(Dataset::new(f.clone(), vec![0, 2], 2).is_err());
        assert!(Dataset::new(f.clone(), vec![0], 2).is_err());
        let bad = Tensor::new(vec![1, 2], vec![0.0, 1.5]).unwrap();
        assert!(Dataset::new(bad, vec![0], 2).is_err());
        assert!(Dataset::new(f, vec![0, 1], 2).is_ok());
    }

    #[test]
    fn subset_preserves_order_and_values() {
        let d = toy();
        let s = d.subset(&[2, 0]).unwrap();
        assert_eq!(s.labels(), &[0, 0]);
        assert_eq!(s.sample_values(0), d.sample_values(2));
        assert_eq!(s.sample_values(1), d.sample_values(0));
        assert!(d.subset(&[9]).is_err());
    }

    #[test]
    fn class_bookkeeping() {
        let d = toy();
        assert_eq!(d.class_counts(), vec![2, 2]);
        assert_eq!(d.class_indices()[1], vec![1, 3]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("toy.csv");
        std::fs::write(&path, "f0,f1,label\n0.25,0.5,1\n1.0,0.0,0\n").unwrap();
        let d = load_csv(&path).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.num_classes(), 2);
        assert_eq!(d.sample_values(0), &[0.25, 0.5]);
        assert_eq!(d.labels(), &[1, 0]);
    }

    #[test]
    fn csv_rejects_out_of_range_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "f0,label\n3.5,0\n").unwrap();
        assert!(load_csv(&path).is_err());
    }
}
