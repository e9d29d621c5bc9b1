//! Corpora and the sample-ID space.
//!
//! Every sample carries a stable ID assigned at load time. Subsetting keeps
//! IDs, so a forget set written against the full corpus still names the same
//! samples after any chain of splits.

mod blobs;
mod forget;
mod idset;
mod idx;

use std::path::PathBuf;

use ndarray::{Array2, Axis};
use thiserror::Error;

pub use blobs::synth_blobs;
pub use forget::ForgetSpec;
pub use idset::{IdSet, SampleId};
pub use idx::{load_idx, read_idx_images, read_idx_labels};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: bad IDX magic number (expected {expected:#010x}, found {found:#010x})")]
    MagicMismatch {
        path: PathBuf,
        expected: u32,
        found: u32,
    },
    #[error("{images} holds {image_count} images but {labels} holds {label_count} labels")]
    CountMismatch {
        images: PathBuf,
        labels: PathBuf,
        image_count: usize,
        label_count: usize,
    },
    #[error("{path}: truncated file ({detail})")]
    TruncatedFile { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unknown sample id {0}")]
    UnknownId(SampleId),
    #[error("malformed dataset: {0}")]
    Malformed(String),
    #[error("forget spec: {0}")]
    ForgetSpec(String),
}

/// Dense labeled samples with stable IDs (strictly ascending in row order).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    ids: Vec<SampleId>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        ids: Vec<SampleId>,
        num_classes: usize,
    ) -> Result<Self, DataError> {
        if features.nrows() != labels.len() || labels.len() != ids.len() {
            return Err(DataError::Malformed(format!(
                "{} feature rows, {} labels, {} ids",
                features.nrows(),
                labels.len(),
                ids.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::Malformed(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Malformed("non-finite feature value".into()));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::Malformed(
                "sample ids must be unique and ascending in row order".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            ids,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// IDs in row order.
    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn id_set(&self) -> IdSet {
        IdSet::from_sorted(self.ids.clone()).expect("ids ascending by construction")
    }

    /// Number of distinct labels that actually occur.
    pub fn classes_present(&self) -> usize {
        let mut seen = vec![false; self.num_classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        seen.into_iter().filter(|&s| s).count()
    }

    /// Restricts the dataset to the rows whose IDs are in `keep`, preserving
    /// row order and IDs.
    pub fn subset(&self, keep: &IdSet) -> Result<LabeledDataset, DataError> {
        let rows = keep
            .iter()
            .map(|id| self.ids.binary_search(&id).map_err(|_| DataError::UnknownId(id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.take_rows(&rows))
    }

    /// Rows at the given positions, in the given order.
    fn take_rows(&self, rows: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Seeded uniform subset of `n` samples (IDs preserved).
    pub fn sample(&self, n: usize, seed: u64) -> Result<LabeledDataset, DataError> {
        let picked = self.id_set().sample(n, seed)?;
        self.subset(&picked)
    }

    /// Splits the dataset into disjoint train/test parts covering every row.
    pub fn split(&self, spec: &SplitSpec) -> Result<(LabeledDataset, LabeledDataset), DataError> {
        let all = self.id_set();
        let (train, test) = match spec {
            SplitSpec::Fraction { train, seed } => {
                if !(0.0..=1.0).contains(train) {
                    return Err(DataError::InvalidParam(format!(
                        "train fraction {train} outside [0, 1]"
                    )));
                }
                let n_train = (train * self.len() as f64).round() as usize;
                let train_ids = all.sample(n_train, *seed)?;
                let test_ids = all.difference(&train_ids);
                (train_ids, test_ids)
            }
            SplitSpec::Explicit { train, test } => {
                if !train.is_disjoint(test) {
                    return Err(DataError::InvalidParam(
                        "train and test id lists overlap".into(),
                    ));
                }
                if train.union(test) != all {
                    return Err(DataError::InvalidParam(
                        "train and test id lists do not cover the corpus".into(),
                    ));
                }
                (train.clone(), test.clone())
            }
        };
        Ok((self.subset(&train)?, self.subset(&test)?))
    }

    /// SHA-256 over ids, labels and feature bits; identifies a corpus in manifests.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update((self.num_classes as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for &id in &self.ids {
            h.update(id.to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        for v in self.features.iter() {
            h.update(v.to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// How to carve a corpus into train and test parts.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitSpec {
    Fraction { train: f64, seed: u64 },
    Explicit { train: IdSet, test: IdSet },
}
