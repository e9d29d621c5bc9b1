use std::path::{Path, PathBuf};

use maxrr::audit::MemberPool;
use maxrr::nn::{ArchSpec, TrainConfig};
use maxrr::pipeline::{Hyper, PoolPolicy};
use maxrr::svm::SvmConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Environment variable naming the directory that holds the IDX corpora.
pub const DATA_DIR_ENV: &str = "MAXRR_DATA_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorpusSpec {
    FashionMnist,
    Mnist,
    Blobs {
        num_classes: usize,
        per_class: usize,
        test_per_class: usize,
        dim: usize,
        separation: f64,
        seed: u64,
    },
}

/// One experiment; every field has a desk-scale default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSpec,
    /// Directory holding `fashion-mnist/` or `mnist/`; falls back to
    /// `$MAXRR_DATA_DIR`, then `./data`.
    pub data_dir: Option<PathBuf>,
    pub train_subset: Option<usize>,
    pub test_subset: Option<usize>,
    pub arch: String,
    pub train: TrainConfig,
    pub svm: SvmConfig,
    pub platt_holdout: f64,
    /// Core-set size; `m / 3` when unset.
    pub k: Option<usize>,
    /// Size of the random non-core forget set `D_r`; `m / 6` when unset.
    pub random_forget: Option<usize>,
    /// Support vectors forgotten in the sensitivity study; `m / 6` when unset.
    pub sensitivity_forget: Option<usize>,
    pub ranking_runs: usize,
    pub runs: usize,
    pub base_seed: u64,
    /// Forget-set directive or file; the core set when unset.
    pub forget: Option<String>,
    pub pool: PoolPolicy,
    pub mia_pool: MemberPool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            corpus: CorpusSpec::FashionMnist,
            data_dir: None,
            train_subset: Some(10_000),
            test_subset: Some(2_000),
            arch: "mlp".into(),
            train: TrainConfig::default(),
            svm: SvmConfig { c: 0.1, ..SvmConfig::default() },
            platt_holdout: 0.2,
            k: None,
            random_forget: None,
            sensitivity_forget: None,
            ranking_runs: 5,
            runs: 5,
            base_seed: 0,
            forget: None,
            pool: PoolPolicy::Full,
            mia_pool: MemberPool::Full,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.hyper()?;
        if self.runs == 0 || self.ranking_runs == 0 {
            return Err(CliError::Config("runs and ranking_runs must be positive".into()));
        }
        if let CorpusSpec::FashionMnist | CorpusSpec::Mnist = self.corpus {
            let dir = self.corpus_dir();
            for f in IDX_FILES {
                if !dir.join(f).is_file() {
                    return Err(CliError::Config(format!("missing corpus file {}", dir.join(f).display())));
                }
            }
        }
        Ok(())
    }

    pub fn corpus_dir(&self) -> PathBuf {
        let root = self
            .data_dir
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"));
        match self.corpus {
            CorpusSpec::Mnist => root.join("mnist"),
            _ => root.join("fashion-mnist"),
        }
    }

    /// On a blobs corpus `mlp` is a small 16-8 perceptron sized to the blobs;
    /// other architectures expect 28x28 images.
    pub fn hyper(&self) -> Result<Hyper, CliError> {
        let arch = match (&self.corpus, self.arch.as_str()) {
            (CorpusSpec::Blobs { num_classes, dim, .. }, "mlp") => ArchSpec::mlp_with(*dim, &[16, 8], *num_classes),
            (CorpusSpec::Blobs { .. }, other) => {
                return Err(CliError::Config(format!("architecture {other:?} needs an image corpus")))
            }
            _ => ArchSpec::by_name(&self.arch).map_err(|e| CliError::Config(e.to_string()))?,
        };
        Ok(Hyper {
            arch,
            train: self.train.clone(),
            svm: self.svm,
            platt_holdout: self.platt_holdout,
        })
    }

    /// Hash of the settings that shape results (output and data locations
    /// excluded), as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.data_dir = None;
        let digest = Sha256::digest(serde_json::to_vec(&c).expect("config serialises"));
        hex::encode(&digest[..8])
    }
}

pub const IDX_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_partial_files_fill_in() {
        let c = ExperimentConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&text).unwrap(), c);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"runs": 2, "arch": "lenet5"}"#).unwrap();
        assert_eq!(partial.runs, 2);
        assert_eq!(partial.ranking_runs, 5);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"rnus": 2}"#).is_err());
    }

    #[test]
    fn hash_ignores_locations_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.data_dir = Some("/tmp".into());
        assert_eq!(a.hash(), b.hash());
        b.base_seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn validate_rejects_bad_settings() {
        let mut c = ExperimentConfig::default();
        c.arch = "resnet".into();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.data_dir = Some("/nonexistent".into());
        assert!(c.validate().is_err());
    }
}
