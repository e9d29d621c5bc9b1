use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::unlearn::{Guarantee, PoolPolicy, UnlearnMode, UnlearnOutcome};
use super::{calibration_pool, fit_head, train_fe, PipelineError, SplitModel};
use crate::data::LabeledDataset;

/// Tolerance on decision values for functional equality.
pub const WITNESS_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct WitnessReport {
    /// Largest absolute decision-value difference over probes and test set.
    pub deviation: f64,
    pub predictions_equal: bool,
    pub fe_identical: bool,
    pub fingerprint_equal: bool,
}

/// `n` seeded probe inputs drawn uniformly from the bounding box of `ds`.
pub fn probe_grid(ds: &LabeledDataset, n: usize, seed: u64) -> Array2<f64> {
    let d = ds.dim();
    let f = ds.features();
    let lo: Vec<f64> = (0..d).map(|j| f.column(j).iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|j| f.column(j).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |(_, j)| {
        if ds.is_empty() || lo[j] >= hi[j] {
            if ds.is_empty() { 0.0 } else { lo[j] }
        } else {
            rng.random_range(lo[j]..hi[j])
        }
    })
}

fn decision_on(model: &SplitModel, x: &LabeledDataset) -> Result<Array2<f64>, PipelineError> {
    let emb = model.fe.embed(x)?;
    Ok(model.svm.decision_values(emb.matrix().view())?)
}

/// Rebuilds the witness `A'(D_p)` for an exact outcome from the model before
/// the request and compares it with the unlearned model.
///
/// The extractor is retrained from scratch on the previous extractor's
/// training set with the recorded seed; that set must not meet the forget
/// set. The SVM is refit on the remaining pool; for a no-op outcome the
/// solver is started from the previous multipliers restricted to that pool,
/// which already satisfy the optimality conditions there, so it certifies
/// them without updates.
pub fn check_generalized_exact(
    before: &SplitModel,
    outcome: &UnlearnOutcome,
    ds: &LabeledDataset,
    test: &LabeledDataset,
    probe_seed: u64,
) -> Result<WitnessReport, PipelineError> {
    if outcome.guarantee != Guarantee::Exact {
        return Err(PipelineError::NotExact);
    }
    let after = &outcome.model;
    // the retained data is derived from the model before the request, not
    // from the bookkeeping of the model under test
    let fe_ids = before.fe_train_ids();
    if !fe_ids.is_disjoint(&outcome.forget) {
        return Err(PipelineError::NotExact);
    }
    let hyper = &before.manifest.hyper;
    let seed = before.manifest.seed;
    let policy = after.manifest.history.last().map_or(PoolPolicy::Full, |h| h.pool);
    let pool = match (outcome.mode, policy) {
        (UnlearnMode::ExactSvmRetrain, PoolPolicy::Support) => before.support_ids().difference(&outcome.forget),
        _ => before.svm_train_ids().difference(&outcome.forget),
    };
    let fe = train_fe(ds, fe_ids, hyper, seed)?;
    let (svm, calib_pool) = match outcome.mode {
        UnlearnMode::ExactNoOp => {
            let emb = fe.embed(&ds.subset(&pool)?)?;
            let warm = before.svm.retrain_on(&emb, &hyper.svm)?;
            let calib = calibration_pool(ds, fe_ids, &pool)?;
            let svm = warm.fit_platt(&emb.subset(&calib)?, hyper.platt_holdout, seed)?;
            (svm, calib)
        }
        _ => fit_head(ds, &fe, &pool, hyper, seed)?,
    };
    let witness = SplitModel {
        fe,
        svm,
        corpus_ids: after.corpus_ids.clone(),
        calib_pool,
        manifest: after.manifest.clone(),
    };

    let probes = probe_grid(ds, 100, probe_seed);
    let probe_ds = LabeledDataset::new(probes, vec![0; 100], (0..100).collect(), ds.num_classes())?;
    let mut deviation: f64 = 0.0;
    let mut predictions_equal = true;
    for x in [&probe_ds, test] {
        let a = decision_on(&witness, x)?;
        let b = decision_on(after, x)?;
        for (ra, rb) in a.rows().into_iter().zip(b.rows()) {
            for (va, vb) in ra.iter().zip(rb.iter()) {
                let d = (va - vb).abs();
                deviation = deviation.max(if d.is_nan() { f64::INFINITY } else { d });
            }
            let pa = crate::nn::argmax(ra.iter().copied());
            let pb = crate::nn::argmax(rb.iter().copied());
            predictions_equal &= pa == pb;
        }
    }
    let report = WitnessReport {
        deviation,
        predictions_equal,
        fe_identical: witness.fe == after.fe,
        fingerprint_equal: witness.fingerprint() == after.fingerprint(),
    };
    if report.deviation > WITNESS_TOL || !report.predictions_equal {
        return Err(PipelineError::WitnessMismatch { deviation: report.deviation });
    }
    Ok(report)
}
