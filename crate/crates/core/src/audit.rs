//! Membership-inference verification of unlearning.
//!
//! Confidences are cross-entropies of the calibrated probability of the true
//! label. A threshold `tau*` maximising `TPR - FPR` is fit on known members
//! (training samples that were kept) against known non-members (test samples);
//! a forgotten sample with confidence below `tau*` is judged a member, i.e.
//! not unlearned.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{IdSet, LabeledDataset, SampleId};
use crate::pipeline::{PipelineError, SplitModel};
use crate::svm::SvmError;

/// Probabilities are clamped to this before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("model has no Platt calibration")]
    MissingCalibration,
    #[error("member and non-member pools share sample {0}")]
    OverlappingPools(SampleId),
    #[error("{0} pool is empty")]
    EmptyPool(&'static str),
    #[error("membership set needs both members and non-members")]
    SingleClass,
    #[error("membership set contains a NaN confidence")]
    NanConfidence,
    #[error("reports do not line up: {0}")]
    RunMismatch(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl From<SvmError> for AuditError {
    fn from(e: SvmError) -> Self {
        match e {
            SvmError::MissingCalibration => AuditError::MissingCalibration,
            other => AuditError::Pipeline(other.into()),
        }
    }
}

/// `-ln(max(p, PROB_FLOOR))`.
pub fn cross_entropy(p: f64) -> f64 {
    -(p.clamp(PROB_FLOOR, 1.0)).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceSet {
    pub ids: Vec<SampleId>,
    pub values: Vec<f64>,
    pub fingerprint: String,
}

impl ConfidenceSet {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn value_of(&self, id: SampleId) -> Option<f64> {
        self.ids.binary_search(&id).ok().map(|p| self.values[p])
    }
}

/// Cross-entropy confidence of `model` on every sample of `ds`.
pub fn confidences(model: &SplitModel, ds: &LabeledDataset) -> Result<ConfidenceSet, AuditError> {
    let emb = model.embed(ds)?;
    let probs = model.svm().probabilities(emb.matrix().view())?;
    let values = probs
        .rows()
        .into_iter()
        .zip(ds.labels())
        .map(|(row, &y)| cross_entropy(row[y]))
        .collect();
    Ok(ConfidenceSet {
        ids: ds.ids().to_vec(),
        values,
        fingerprint: model.fingerprint(),
    })
}

/// Labelled confidences: `true` for members.
#[derive(Clone, Debug, PartialEq)]
pub struct MembershipSet {
    pub points: Vec<(f64, bool)>,
}

impl MembershipSet {
    pub fn positives(&self) -> usize {
        self.points.iter().filter(|p| p.1).count()
    }

    pub fn negatives(&self) -> usize {
        self.points.len() - self.positives()
    }
}

pub fn build_membership_set(members: &ConfidenceSet, non_members: &ConfidenceSet) -> Result<MembershipSet, AuditError> {
    if members.is_empty() {
        return Err(AuditError::EmptyPool("member"));
    }
    if non_members.is_empty() {
        return Err(AuditError::EmptyPool("non-member"));
    }
    let a = IdSet::from_unsorted(members.ids.clone());
    let b = IdSet::from_unsorted(non_members.ids.clone());
    if let Some(id) = a.intersection(&b).iter().next() {
        return Err(AuditError::OverlappingPools(id));
    }
    let points = members
        .values
        .iter()
        .map(|&c| (c, true))
        .chain(non_members.values.iter().map(|&c| (c, false)))
        .collect();
    Ok(MembershipSet { points })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// Ascending, starting at `-inf` and ending at `+inf`.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("tau,fpr,tpr\n");
        for i in 0..self.thresholds.len() {
            writeln!(s, "{},{},{}", self.thresholds[i], self.fpr[i], self.tpr[i]).unwrap();
        }
        s
    }
}

/// Thresholds between consecutive distinct values (each realises the cut
/// `c < tau` just above the lower value), plus `-inf` and `+inf`.
pub fn threshold_grid(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    let mut t = Vec::with_capacity(v.len() + 1);
    t.push(f64::NEG_INFINITY);
    for w in v.windows(2) {
        let mid = w[0] + (w[1] - w[0]) / 2.0;
        t.push(if mid > w[0] { mid } else { w[1] });
    }
    t.push(f64::INFINITY);
    t
}

/// ROC over the threshold grid and the Youden-optimal threshold (ties to the
/// smallest threshold).
pub fn roc_and_threshold(m: &MembershipSet) -> Result<(RocCurve, f64), AuditError> {
    let (p, n) = (m.positives(), m.negatives());
    if p == 0 || n == 0 {
        return Err(AuditError::SingleClass);
    }
    if m.points.iter().any(|x| x.0.is_nan()) {
        return Err(AuditError::NanConfidence);
    }
    let values: Vec<f64> = m.points.iter().map(|x| x.0).collect();
    let thresholds = threshold_grid(&values);
    let mut sorted = m.points.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut tp, mut fp, mut idx) = (0usize, 0usize, 0usize);
    let mut curve = RocCurve { thresholds: Vec::new(), fpr: Vec::new(), tpr: Vec::new() };
    let mut best: Option<(i128, f64)> = None;
    for &tau in &thresholds {
        while idx < sorted.len() && sorted[idx].0 < tau {
            if sorted[idx].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            idx += 1;
        }
        curve.thresholds.push(tau);
        curve.tpr.push(tp as f64 / p as f64);
        curve.fpr.push(fp as f64 / n as f64);
        // J scaled by p*n, compared exactly
        let j = tp as i128 * n as i128 - fp as i128 * p as i128;
        if best.is_none_or(|(bj, _)| j > bj) {
            best = Some((j, tau));
        }
    }
    Ok((curve, best.expect("grid is non-empty").1))
}

/// Which known members the attack is fit on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemberPool {
    /// All kept training samples.
    #[default]
    Full,
    /// Kept training samples outside the extractor's core set.
    NonCore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    pub tau_star: f64,
    pub youden_j: f64,
    /// `(id, confidence, member)` for each forgotten sample in ID order.
    pub verdicts: Vec<(SampleId, f64, bool)>,
    pub pool: MemberPool,
    pub seed: u64,
    pub roc: RocCurve,
}

impl AuditReport {
    /// Fraction of forgotten samples judged unlearned.
    pub fn unlearned_fraction(&self) -> f64 {
        if self.verdicts.is_empty() {
            return 0.0;
        }
        self.verdicts.iter().filter(|v| !v.2).count() as f64 / self.verdicts.len() as f64
    }

    pub fn verdicts_csv(&self) -> String {
        let mut s = String::from("id,confidence,verdict\n");
        for (id, c, member) in &self.verdicts {
            writeln!(s, "{id},{c},{}", if *member { "member" } else { "unlearned" }).unwrap();
        }
        s
    }
}

/// Fits the attack on `model` and judges every sample of `forget`.
/// Under [`MemberPool::NonCore`] the members exclude `core`, or the
/// extractor's training set when `core` is `None`. `seed` only labels the
/// report.
pub fn verify_unlearning(
    model: &SplitModel,
    train: &LabeledDataset,
    test: &LabeledDataset,
    forget: &IdSet,
    pool: MemberPool,
    core: Option<&IdSet>,
    seed: u64,
) -> Result<AuditReport, AuditError> {
    let train_ids = train.id_set();
    if let Some(id) = forget.difference(&train_ids).iter().next() {
        return Err(AuditError::Pipeline(PipelineError::UnknownId(id)));
    }
    let mut member_ids = train_ids.difference(forget);
    if pool == MemberPool::NonCore {
        member_ids = member_ids.difference(core.unwrap_or(model.fe_train_ids()));
    }
    let members = confidences(model, &train.subset(&member_ids).map_err(PipelineError::from)?)?;
    let non_members = confidences(model, test)?;
    let ms = build_membership_set(&members, &non_members)?;
    let (roc, tau_star) = roc_and_threshold(&ms)?;
    let k = roc.thresholds.iter().position(|&t| t == tau_star).expect("tau* on the grid");
    let youden_j = roc.tpr[k] - roc.fpr[k];
    let cf = confidences(model, &train.subset(forget).map_err(PipelineError::from)?)?;
    let verdicts = cf.ids.iter().zip(&cf.values).map(|(&id, &c)| (id, c, c < tau_star)).collect();
    Ok(AuditReport { tau_star, youden_j, verdicts, pool, seed, roc })
}

/// Per-sample agreement of two strategies over matched runs.
#[derive(Clone, Debug, PartialEq)]
pub struct AgreementCurve {
    pub runs: usize,
    pub ids: Vec<SampleId>,
    /// Runs in which both strategies gave the same verdict, per sample.
    pub agree: Vec<usize>,
}

impl AgreementCurve {
    /// `(agreement_pct, sample_pct)`: share of samples agreeing in at least
    /// `j` of the runs, for `j = 0..=runs`.
    pub fn ccdf(&self) -> Vec<(f64, f64)> {
        (0..=self.runs)
            .map(|j| {
                let count = self.agree.iter().filter(|&&a| a >= j).count();
                let pct = if self.ids.is_empty() { 0.0 } else { 100.0 * count as f64 / self.ids.len() as f64 };
                (100.0 * j as f64 / self.runs as f64, pct)
            })
            .collect()
    }

    /// Share of samples (in percent) agreeing in at least `frac` of the runs.
    pub fn share_at_least(&self, frac: f64) -> f64 {
        let need = (frac * self.runs as f64 - 1e-9).ceil() as usize;
        let count = self.agree.iter().filter(|&&a| a >= need).count();
        100.0 * count as f64 / self.ids.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("agreement_pct,sample_pct\n");
        for (a, p) in self.ccdf() {
            writeln!(s, "{a},{p}").unwrap();
        }
        s
    }
}

fn check_runs(a: &[AuditReport], b: &[AuditReport]) -> Result<Vec<SampleId>, AuditError> {
    if a.is_empty() || a.len() != b.len() {
        return Err(AuditError::RunMismatch(format!("{} vs {} runs", a.len(), b.len())));
    }
    let ids: Vec<SampleId> = a[0].verdicts.iter().map(|v| v.0).collect();
    for r in a.iter().chain(b) {
        if r.verdicts.len() != ids.len() || r.verdicts.iter().zip(&ids).any(|(v, &id)| v.0 != id) {
            return Err(AuditError::RunMismatch("forget sets differ".into()));
        }
    }
    Ok(ids)
}

pub fn agreement_curve(a: &[AuditReport], b: &[AuditReport]) -> Result<AgreementCurve, AuditError> {
    let ids = check_runs(a, b)?;
    let mut agree = vec![0; ids.len()];
    for (ra, rb) in a.iter().zip(b) {
        for (i, (va, vb)) in ra.verdicts.iter().zip(&rb.verdicts).enumerate() {
            if va.2 == vb.2 {
                agree[i] += 1;
            }
        }
    }
    Ok(AgreementCurve { runs: a.len(), ids, agree })
}

/// `hist[j]` = number of samples judged unlearned in exactly `j` runs.
pub fn claims_histogram(reports: &[AuditReport]) -> Vec<usize> {
    let n = reports.first().map_or(0, |r| r.verdicts.len());
    let mut claims = vec![0usize; n];
    for r in reports {
        for (i, v) in r.verdicts.iter().enumerate() {
            if !v.2 {
                claims[i] += 1;
            }
        }
    }
    let mut hist = vec![0; reports.len() + 1];
    for c in claims {
        hist[c] += 1;
    }
    hist
}

/// `claims,count_strategyA,count_strategyB`.
pub fn claims_csv(a: &[AuditReport], b: &[AuditReport]) -> Result<String, AuditError> {
    check_runs(a, b)?;
    let (ha, hb) = (claims_histogram(a), claims_histogram(b));
    let mut s = String::from("claims,count_strategyA,count_strategyB\n");
    for j in 0..ha.len() {
        writeln!(s, "{j},{},{}", ha[j], hb[j]).unwrap();
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cs(ids: &[u64], vals: &[f64]) -> ConfidenceSet {
        ConfidenceSet { ids: ids.to_vec(), values: vals.to_vec(), fingerprint: String::new() }
    }

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(1.0), 0.0);
        assert!((cross_entropy(0.1) - 10f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(0.0) - 12.0 * 10f64.ln()).abs() < 1e-12);
        assert!((cross_entropy(0.0) - 27.631).abs() < 1e-3);
    }

    #[test]
    fn separable_pools() {
        let m = build_membership_set(&cs(&[0, 1], &[0.1, 0.2]), &cs(&[2, 3], &[0.9, 1.0])).unwrap();
        assert_eq!(m.points.len(), 4);
        let (roc, tau) = roc_and_threshold(&m).unwrap();
        assert!((tau - 0.55).abs() < 1e-15);
        let k = roc.thresholds.iter().position(|&t| t == tau).unwrap();
        assert_eq!(roc.tpr[k] - roc.fpr[k], 1.0);
        assert_eq!((roc.fpr[0], roc.tpr[0]), (0.0, 0.0));
        assert_eq!((*roc.fpr.last().unwrap(), *roc.tpr.last().unwrap()), (1.0, 1.0));
    }

    #[test]
    fn identical_pools_give_zero_j() {
        let m = build_membership_set(&cs(&[0, 1], &[0.3, 0.7]), &cs(&[2, 3], &[0.3, 0.7])).unwrap();
        let (roc, tau) = roc_and_threshold(&m).unwrap();
        assert_eq!(tau, f64::NEG_INFINITY);
        for i in 0..roc.thresholds.len() {
            assert_eq!(roc.tpr[i], roc.fpr[i]);
        }
    }

    #[test]
    fn pool_errors() {
        assert!(matches!(
            build_membership_set(&cs(&[0, 1], &[0.1, 0.2]), &cs(&[1], &[0.3])),
            Err(AuditError::OverlappingPools(1))
        ));
        assert!(matches!(build_membership_set(&cs(&[], &[]), &cs(&[1], &[0.3])), Err(AuditError::EmptyPool(_))));
        let single = MembershipSet { points: vec![(0.1, true)] };
        assert!(matches!(roc_and_threshold(&single), Err(AuditError::SingleClass)));
    }

    #[test]
    fn grid_handles_adjacent_floats() {
        let a = 1.0f64;
        let b = f64::from_bits(a.to_bits() + 1);
        let t = threshold_grid(&[b, a, a]);
        assert_eq!(t.len(), 3);
        // the cut between a and b must include a and exclude b
        assert!(a < t[1] && !(b < t[1]));
    }

    fn report(verdicts: &[bool]) -> AuditReport {
        AuditReport {
            tau_star: 0.0,
            youden_j: 0.0,
            verdicts: verdicts.iter().enumerate().map(|(i, &v)| (i as u64, 0.0, v)).collect(),
            pool: MemberPool::Full,
            seed: 0,
            roc: RocCurve { thresholds: vec![], fpr: vec![], tpr: vec![] },
        }
    }

    #[test]
    fn agreement_of_identical_reports() {
        let runs: Vec<AuditReport> = (0..4).map(|r| report(&[r % 2 == 0, true, false])).collect();
        let curve = agreement_curve(&runs, &runs).unwrap();
        assert!(curve.ccdf().iter().all(|&(_, p)| p == 100.0));
        assert_eq!(curve.share_at_least(0.8), 100.0);
        assert!(agreement_curve(&runs, &runs[..3]).is_err());
        assert!(agreement_curve(&runs, &[report(&[true]), report(&[true]), report(&[true]), report(&[true])]).is_err());
    }

    #[test]
    fn claims_histogram_counts_unlearned_runs() {
        let runs = vec![report(&[false, true, false]), report(&[false, true, true])];
        assert_eq!(claims_histogram(&runs), vec![1, 1, 1]);
        let csv = claims_csv(&runs, &runs).unwrap();
        assert_eq!(csv, "claims,count_strategyA,count_strategyB\n0,1,1\n1,1,1\n2,1,1\n");
    }
}
