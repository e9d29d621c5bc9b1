//! Split models and unlearning.
//!
//! A [`SplitModel`] is a feature extractor trained on a core set `D_k`, an
//! OvR SVM trained on embeddings of a (usually larger) pool, and Platt
//! sigmoids. [`unlearn`] dispatches a forget request: IDs outside the core set
//! and outside the support and calibration sets are already unlearned, other
//! non-core IDs cost one SVM refit, and core IDs get an SVM refit labelled as
//! approximate because the extractor still carries them.

mod container;
mod unlearn;
mod witness;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::CodecError;
use crate::data::{DataError, IdSet, LabeledDataset, SampleId};
use crate::nn::{ArchSpec, EmbeddingSet, FeatureExtractor, NnError, TrainConfig};
use crate::ranking::{CoreRanking, RankingError};
use crate::svm::{OvrSvm, SvmConfig, SvmError};

pub use unlearn::{classify_request, unlearn, Guarantee, PoolPolicy, Retrained, UnlearnMode, UnlearnOutcome, UnlearnRequest};
pub use witness::{check_generalized_exact, probe_grid, WitnessReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Svm(#[from] SvmError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error("sample id {0} is unknown to the model")]
    UnknownId(SampleId),
    #[error("after removing the forget set no sample of class {class} remains")]
    EmptyRemainder { class: usize },
    #[error("witness differs from the unlearned model by {deviation:.3e}")]
    WitnessMismatch { deviation: f64 },
    #[error("outcome carries no exact guarantee")]
    NotExact,
    #[error("model container: {0}")]
    Codec(#[from] CodecError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Everything that shapes a training run apart from data and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub svm: SvmConfig,
    /// Fraction of the calibration pool used to fit the Platt sigmoids.
    pub platt_holdout: f64,
}

impl Hyper {
    pub fn new(arch: ArchSpec) -> Self {
        Self {
            arch,
            train: TrainConfig::default(),
            svm: SvmConfig::default(),
            platt_holdout: 0.2,
        }
    }
}

/// One entry of a model's unlearning history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub mode: UnlearnMode,
    pub pool: PoolPolicy,
    pub forget: IdSet,
}

/// Provenance sufficient to re-derive a model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub corpus_hash: String,
    pub seed: u64,
    pub hyper: Hyper,
    pub k: Option<usize>,
    pub ranking_runs: Option<usize>,
    pub ranking_base_seed: Option<u64>,
    pub history: Vec<HistoryEntry>,
}

/// Feature extractor plus calibrated OvR SVM head.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitModel {
    pub(crate) fe: FeatureExtractor,
    pub(crate) svm: OvrSvm,
    pub(crate) corpus_ids: IdSet,
    /// Samples the Platt holdout is drawn from.
    pub(crate) calib_pool: IdSet,
    pub(crate) manifest: Manifest,
}

impl SplitModel {
    pub fn fe(&self) -> &FeatureExtractor {
        &self.fe
    }

    pub fn svm(&self) -> &OvrSvm {
        &self.svm
    }

    /// `D_k`: the extractor's training IDs.
    pub fn fe_train_ids(&self) -> &IdSet {
        self.fe.train_ids().expect("split models carry trained extractors")
    }

    pub fn svm_train_ids(&self) -> &IdSet {
        self.svm.train_ids()
    }

    /// `S`: union of the per-class support sets.
    pub fn support_ids(&self) -> IdSet {
        self.svm.support_ids()
    }

    /// Samples still part of the model's corpus (forgotten IDs removed).
    pub fn corpus_ids(&self) -> &IdSet {
        &self.corpus_ids
    }

    pub fn calib_pool(&self) -> &IdSet {
        &self.calib_pool
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn num_classes(&self) -> usize {
        self.svm.num_classes()
    }

    pub fn embed(&self, ds: &LabeledDataset) -> Result<EmbeddingSet, PipelineError> {
        Ok(self.fe.embed(ds)?)
    }

    pub fn predict(&self, ds: &LabeledDataset) -> Result<Vec<usize>, PipelineError> {
        let emb = self.embed(ds)?;
        Ok(self.svm.predict(emb.matrix().view())?)
    }

    pub fn accuracy(&self, ds: &LabeledDataset) -> Result<f64, PipelineError> {
        let emb = self.embed(ds)?;
        Ok(self.svm.accuracy(&emb)?)
    }

    /// Hash of the parameters that determine the model's outputs: extractor
    /// weights, and per class the support IDs with their multipliers, bias,
    /// weights and Platt sigmoid. Zero multipliers and ID bookkeeping are not
    /// part of it.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.fe.fingerprint().as_bytes());
        for (c, m) in self.svm.models().iter().enumerate() {
            h.update((c as u64).to_le_bytes());
            for id in m.support_ids().iter() {
                h.update(id.to_le_bytes());
                h.update(m.alpha_of(id).expect("support id").to_le_bytes());
            }
            h.update(m.bias().to_le_bytes());
            for v in m.weights().iter() {
                h.update(v.to_le_bytes());
            }
            h.update(m.c().to_le_bytes());
            if let Some(p) = self.svm.platt() {
                h.update(p[c].a.to_le_bytes());
                h.update(p[c].b.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Calibration pool for an SVM fit on `pool`: the extractor's training set
/// within the pool when it covers every class, the whole pool otherwise.
pub(crate) fn calibration_pool(ds: &LabeledDataset, fe_ids: &IdSet, pool: &IdSet) -> Result<IdSet, PipelineError> {
    let core = fe_ids.intersection(pool);
    let covered = ds.subset(&core)?.classes_present() == ds.num_classes();
    Ok(if covered { core } else { pool.clone() })
}

fn check_classes(ds: &LabeledDataset) -> Result<(), PipelineError> {
    let mut seen = vec![false; ds.num_classes()];
    for &l in ds.labels() {
        seen[l] = true;
    }
    match seen.iter().position(|&s| !s) {
        Some(class) => Err(PipelineError::EmptyRemainder { class }),
        None => Ok(()),
    }
}

/// Fits the OvR SVM on the embeddings of `pool` and calibrates it.
pub(crate) fn fit_head(
    ds: &LabeledDataset,
    fe: &FeatureExtractor,
    pool: &IdSet,
    hyper: &Hyper,
    seed: u64,
) -> Result<(OvrSvm, IdSet), PipelineError> {
    let part = ds.subset(pool)?;
    check_classes(&part)?;
    let emb = fe.embed(&part)?;
    let svm = OvrSvm::fit(&emb, ds.num_classes(), &hyper.svm)?;
    let calib = calibration_pool(ds, fe.train_ids().expect("trained"), pool)?;
    let svm = svm.fit_platt(&emb.subset(&calib)?, hyper.platt_holdout, seed)?;
    Ok((svm, calib))
}

pub(crate) fn train_fe(ds: &LabeledDataset, fe_ids: &IdSet, hyper: &Hyper, seed: u64) -> Result<FeatureExtractor, PipelineError> {
    let part = ds.subset(fe_ids)?;
    let fe = FeatureExtractor::init(hyper.arch.clone(), seed)?;
    Ok(fe.train(&part, &hyper.train, seed)?)
}

/// Trains a split model: extractor on `fe_ids`, SVM on `svm_ids`. Both
/// components are seeded with `seed`.
pub fn train_split(
    ds: &LabeledDataset,
    fe_ids: &IdSet,
    svm_ids: &IdSet,
    hyper: &Hyper,
    seed: u64,
) -> Result<SplitModel, PipelineError> {
    let fe = train_fe(ds, fe_ids, hyper, seed)?;
    let (svm, calib_pool) = fit_head(ds, &fe, svm_ids, hyper, seed)?;
    Ok(SplitModel {
        fe,
        svm,
        corpus_ids: fe_ids.union(svm_ids),
        calib_pool,
        manifest: Manifest {
            corpus_hash: ds.content_hash(),
            seed,
            hyper: hyper.clone(),
            k: None,
            ranking_runs: None,
            ranking_base_seed: None,
            history: Vec::new(),
        },
    })
}

/// Unlearning-aware training: the extractor sees only the `k` top-ranked
/// samples, the SVM sees the whole corpus.
pub fn train_unlearning_aware(
    ds: &LabeledDataset,
    cr: &CoreRanking,
    k: usize,
    hyper: &Hyper,
    seed: u64,
) -> Result<SplitModel, PipelineError> {
    let core = cr.top_k(k)?.intersection(&ds.id_set());
    let mut model = train_split(ds, &core, &ds.id_set(), hyper, seed)?;
    model.manifest.k = Some(k);
    model.manifest.ranking_runs = Some(cr.runs());
    model.manifest.ranking_base_seed = cr.run_seeds().first().copied();
    Ok(model)
}

/// Support union of one uncalibrated end-to-end run on `ds`.
pub(crate) fn support_of_run(ds: &LabeledDataset, hyper: &Hyper, seed: u64) -> Result<IdSet, PipelineError> {
    let all = ds.id_set();
    let fe = train_fe(ds, &all, hyper, seed)?;
    check_classes(ds)?;
    let emb = fe.embed(ds)?;
    Ok(OvrSvm::fit(&emb, ds.num_classes(), &hyper.svm)?.support_ids())
}

/// Baseline: retrain both components without `forget`. With `core` given the
/// extractor is trained on `core ∖ forget`, otherwise on everything left.
pub fn full_retrain(
    ds: &LabeledDataset,
    forget: &IdSet,
    core: Option<&IdSet>,
    hyper: &Hyper,
    seed: u64,
) -> Result<SplitModel, PipelineError> {
    let rest = ds.id_set().difference(forget);
    let fe_ids = match core {
        Some(k) => k.intersection(&rest),
        None => rest.clone(),
    };
    train_split(ds, &fe_ids, &rest, hyper, seed)
}

/// Retrains only the extractor without `forget`; the SVM is fit on the whole
/// corpus again.
pub fn fe_only_unlearn(ds: &LabeledDataset, forget: &IdSet, hyper: &Hyper, seed: u64) -> Result<SplitModel, PipelineError> {
    let rest = ds.id_set().difference(forget);
    train_split(ds, &rest, &ds.id_set(), hyper, seed)
}
