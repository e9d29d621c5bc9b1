use maxrr::data::{load_idx, synth_blobs, IdSet, SplitSpec};
use maxrr::LabeledDataset;

use crate::config::{CorpusSpec, ExperimentConfig, IDX_FILES};
use crate::CliError;

/// Test IDs are shifted by this much so they never collide with training IDs.
pub const TEST_ID_OFFSET: u64 = 1 << 32;

#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

impl Corpus {
    pub fn m(&self) -> usize {
        self.train.len()
    }
}

fn reid(ds: &LabeledDataset, offset: u64) -> Result<LabeledDataset, CliError> {
    Ok(LabeledDataset::new(
        ds.features().clone(),
        ds.labels().to_vec(),
        ds.ids().iter().map(|&id| id + offset).collect(),
        ds.num_classes(),
    )?)
}

fn subsample(ds: LabeledDataset, n: Option<usize>, seed: u64) -> Result<LabeledDataset, CliError> {
    match n {
        Some(n) if n < ds.len() => Ok(ds.sample(n, seed)?),
        _ => Ok(ds),
    }
}

/// Loads the configured corpus. Subsets are drawn with `base_seed`.
pub fn load(cfg: &ExperimentConfig) -> Result<Corpus, CliError> {
    let (train, test) = match &cfg.corpus {
        CorpusSpec::FashionMnist | CorpusSpec::Mnist => {
            let dir = cfg.corpus_dir();
            let [tri, trl, tei, tel] = IDX_FILES.map(|f| dir.join(f));
            let train = load_idx(&tri, &trl)?;
            let test = load_idx(&tei, &tel)?;
            let classes = train.num_classes().max(test.num_classes());
            (train.with_num_classes(classes)?, test.with_num_classes(classes)?)
        }
        &CorpusSpec::Blobs { num_classes, per_class, test_per_class, dim, separation, seed } => {
            let all = synth_blobs(num_classes, per_class + test_per_class, dim, separation, seed)?;
            // rows are interleaved by class, so a prefix is class-balanced
            let n_train = (num_classes * per_class) as u64;
            let train = IdSet::range(n_train);
            let test = all.id_set().difference(&train);
            all.split(&SplitSpec::Explicit { train, test })?
        }
    };
    let train = subsample(train, cfg.train_subset, cfg.base_seed)?;
    let test = subsample(test, cfg.test_subset, cfg.base_seed)?;
    let test = reid(&test, TEST_ID_OFFSET)?;
    Ok(Corpus { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> ExperimentConfig {
        ExperimentConfig {
            corpus: CorpusSpec::Blobs { num_classes: 3, per_class: 20, test_per_class: 5, dim: 2, separation: 6.0, seed: 1 },
            train_subset: None,
            test_subset: None,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn blobs_split_is_balanced_and_disjoint() {
        let c = load(&blobs()).unwrap();
        assert_eq!(c.train.len(), 60);
        assert_eq!(c.test.len(), 15);
        assert!(c.train.id_set().is_disjoint(&c.test.id_set()));
        for class in 0..3 {
            assert_eq!(c.train.labels().iter().filter(|&&l| l == class).count(), 20);
        }
    }

    #[test]
    fn subsets_are_seeded() {
        let cfg = ExperimentConfig { train_subset: Some(30), ..blobs() };
        let a = load(&cfg).unwrap();
        let b = load(&cfg).unwrap();
        assert_eq!(a.train.ids(), b.train.ids());
        assert_eq!(a.m(), 30);
    }
}
