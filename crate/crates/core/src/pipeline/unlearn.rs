use serde::{Deserialize, Serialize};

use super::{fit_head, HistoryEntry, PipelineError, SplitModel};
use crate::data::{IdSet, LabeledDataset};
use crate::svm::OvrSvm;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnlearnRequest {
    pub forget: IdSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnlearnMode {
    ExactNoOp,
    ExactSvmRetrain,
    ApproxSvmRetrain,
    FullRetrain,
    FeOnlyRetrain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guarantee {
    Exact,
    Approximate,
}

impl UnlearnMode {
    pub fn guarantee(self) -> Guarantee {
        match self {
            UnlearnMode::ExactNoOp | UnlearnMode::ExactSvmRetrain | UnlearnMode::FullRetrain => Guarantee::Exact,
            UnlearnMode::ApproxSvmRetrain | UnlearnMode::FeOnlyRetrain => Guarantee::Approximate,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnlearnMode::ExactNoOp => "exact_no_op",
            UnlearnMode::ExactSvmRetrain => "exact_svm_retrain",
            UnlearnMode::ApproxSvmRetrain => "approx_svm_retrain",
            UnlearnMode::FullRetrain => "full_retrain",
            UnlearnMode::FeOnlyRetrain => "fe_only_retrain",
        }
    }
}

/// Which samples an SVM refit may use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolPolicy {
    /// Every remaining SVM training sample.
    #[default]
    Full,
    /// Only the remaining support vectors.
    Support,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retrained {
    pub fe: bool,
    pub svm: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnOutcome {
    pub model: SplitModel,
    pub mode: UnlearnMode,
    pub guarantee: Guarantee,
    pub retrained: Retrained,
    pub forget: IdSet,
}

/// Decides how a forget request can be served.
///
/// IDs the extractor was trained on force an approximate SVM refit. Otherwise
/// the request is exact: a refit is needed only if it touches a support
/// vector or the Platt calibration pool.
pub fn classify_request(model: &SplitModel, req: &UnlearnRequest) -> Result<UnlearnMode, PipelineError> {
    let known = model.corpus_ids.union(model.fe_train_ids()).union(model.svm_train_ids());
    if let Some(id) = req.forget.difference(&known).iter().next() {
        return Err(PipelineError::UnknownId(id));
    }
    if !req.forget.is_disjoint(model.fe_train_ids()) {
        return Ok(UnlearnMode::ApproxSvmRetrain);
    }
    if !req.forget.is_disjoint(&model.support_ids()) || !req.forget.is_disjoint(&model.calib_pool) {
        return Ok(UnlearnMode::ExactSvmRetrain);
    }
    Ok(UnlearnMode::ExactNoOp)
}

/// Removes IDs whose multipliers are all zero from the SVM's bookkeeping.
fn drop_inactive(svm: &OvrSvm, remove: &IdSet) -> OvrSvm {
    let keep = svm.train_ids.difference(remove);
    let pos: Vec<usize> = keep.iter().map(|id| svm.train_ids.position(id).expect("subset")).collect();
    let mut out = svm.clone();
    for m in &mut out.models {
        debug_assert!(remove.iter().all(|id| m.alpha_of(id).is_none_or(|a| a == 0.0)));
        m.alphas = pos.iter().map(|&p| m.alphas[p]).collect();
        m.signs = pos.iter().map(|&p| m.signs[p]).collect();
        m.train_ids = keep.clone();
    }
    out.train_ids = keep;
    out
}

/// Serves a forget request against `model`; `ds` must hold the model's corpus.
/// The extractor is never retrained here.
pub fn unlearn(model: &SplitModel, ds: &LabeledDataset, req: &UnlearnRequest, policy: PoolPolicy) -> Result<UnlearnOutcome, PipelineError> {
    let mode = classify_request(model, req)?;
    let forget = &req.forget;
    let mut out = model.clone();
    let svm_retrained = match mode {
        UnlearnMode::ExactNoOp => {
            out.svm = drop_inactive(&model.svm, forget);
            false
        }
        _ => {
            let pool = match policy {
                PoolPolicy::Full => model.svm_train_ids().difference(forget),
                PoolPolicy::Support => model.support_ids().difference(forget),
            };
            let (svm, calib) = fit_head(ds, &model.fe, &pool, &model.manifest.hyper, model.manifest.seed)?;
            out.svm = svm;
            out.calib_pool = calib;
            true
        }
    };
    out.corpus_ids = model.corpus_ids.difference(forget);
    out.manifest.history.push(HistoryEntry {
        mode,
        pool: policy,
        forget: forget.clone(),
    });
    Ok(UnlearnOutcome {
        model: out,
        mode,
        guarantee: mode.guarantee(),
        retrained: Retrained { fe: false, svm: svm_retrained },
        forget: forget.clone(),
    })
}
