use maxrr::data::{synth_blobs, IdSet, SplitSpec};
use maxrr::nn::{ArchSpec, TrainConfig};
use maxrr::pipeline::{
    check_generalized_exact, classify_request, full_retrain, train_split, train_unlearning_aware, unlearn, Guarantee, Hyper,
    PipelineError, PoolPolicy, UnlearnMode,
};
use maxrr::ranking::build_ranking;
use maxrr::{CoreRanking, LabeledDataset, SplitModel, UnlearnRequest};

struct Fixture {
    train: LabeledDataset,
    test: LabeledDataset,
    hyper: Hyper,
    ranking: CoreRanking,
    k: usize,
}

fn fixture() -> Fixture {
    let all = synth_blobs(3, 50, 4, 2.5, 21).unwrap();
    let (train, test) = all.split(&SplitSpec::Fraction { train: 0.8, seed: 1 }).unwrap();
    let mut hyper = Hyper::new(ArchSpec::mlp_with(4, &[8], 3));
    hyper.train = TrainConfig { epochs: 4, batch: 16, lr: 0.05, momentum: 0.9 };
    let ranking = build_ranking(&train, &hyper, 3, 0).unwrap();
    let k = train.len() / 3;
    Fixture { train, test, hyper, ranking, k }
}

fn aware(f: &Fixture, seed: u64) -> SplitModel {
    train_unlearning_aware(&f.train, &f.ranking, f.k, &f.hyper, seed).unwrap()
}

#[test]
fn forgetting_inactive_samples_is_a_verified_no_op() {
    let f = fixture();
    let model = aware(&f, 5);
    let protected = model.support_ids().union(model.fe_train_ids()).union(model.calib_pool());
    let free = f.train.id_set().difference(&protected);
    assert!(free.len() >= 10, "fixture leaves {} free samples", free.len());
    for trial in 0..20u64 {
        let forget = free.sample(1 + trial as usize % 7, trial).unwrap();
        let req = UnlearnRequest { forget: forget.clone() };
        let out = unlearn(&model, &f.train, &req, PoolPolicy::Full).unwrap();
        assert_eq!(out.mode, UnlearnMode::ExactNoOp);
        assert!(!out.retrained.fe && !out.retrained.svm);
        assert_eq!(out.model.fingerprint(), model.fingerprint());
        assert!(out.model.svm_train_ids().is_disjoint(&forget));
        assert!(out.model.corpus_ids().is_disjoint(&forget));
        let report = check_generalized_exact(&model, &out, &f.train, &f.test, trial).unwrap();
        assert_eq!(report.deviation, 0.0);
        assert!(report.fe_identical && report.fingerprint_equal && report.predictions_equal);
    }
}

#[test]
fn forgetting_support_vectors_outside_the_core_refits_exactly() {
    let f = fixture();
    let model = aware(&f, 6);
    let candidates = model.support_ids().difference(model.fe_train_ids());
    let forget = candidates.sample(candidates.len().min(5), 3).unwrap();
    let out = unlearn(&model, &f.train, &UnlearnRequest { forget: forget.clone() }, PoolPolicy::Full).unwrap();
    assert_eq!(out.mode, UnlearnMode::ExactSvmRetrain);
    assert_eq!(out.guarantee, Guarantee::Exact);
    assert!(out.retrained.svm && !out.retrained.fe);
    assert_eq!(out.model.fe(), model.fe());
    assert!(out.model.svm_train_ids().is_disjoint(&forget));
    let report = check_generalized_exact(&model, &out, &f.train, &f.test, 0).unwrap();
    assert_eq!(report.deviation, 0.0);
    assert!(report.fe_identical);
}

#[test]
fn witness_rejects_a_model_that_is_not_the_retrain() {
    let f = fixture();
    let model = aware(&f, 7);
    let candidates = model.support_ids().difference(model.fe_train_ids());
    let forget = candidates.sample(3.min(candidates.len()), 1).unwrap();
    let mut out = unlearn(&model, &f.train, &UnlearnRequest { forget }, PoolPolicy::Full).unwrap();
    // the pre-unlearning model still depends on the forgotten samples
    out.model = model.clone();
    match check_generalized_exact(&model, &out, &f.train, &f.test, 0) {
        Err(PipelineError::WitnessMismatch { deviation }) => assert!(deviation > 1e-9),
        other => panic!("expected a mismatch, got {other:?}"),
    }
}

#[test]
fn core_requests_are_approximate_and_have_no_witness() {
    let f = fixture();
    let model = aware(&f, 8);
    let forget = f.ranking.top_k(3).unwrap();
    let req = UnlearnRequest { forget };
    assert_eq!(classify_request(&model, &req).unwrap(), UnlearnMode::ApproxSvmRetrain);
    let out = unlearn(&model, &f.train, &req, PoolPolicy::Full).unwrap();
    assert_eq!(out.guarantee, Guarantee::Approximate);
    assert_eq!(out.model.fe(), model.fe());
    assert!(matches!(check_generalized_exact(&model, &out, &f.train, &f.test, 0), Err(PipelineError::NotExact)));
}

#[test]
fn unknown_ids_are_rejected() {
    let f = fixture();
    let model = aware(&f, 9);
    let req = UnlearnRequest { forget: IdSet::from_unsorted(vec![1 << 40]) };
    assert!(matches!(unlearn(&model, &f.train, &req, PoolPolicy::Full), Err(PipelineError::UnknownId(_))));
}

#[test]
fn sequential_requests_compose() {
    let f = fixture();
    let model = aware(&f, 10);
    let outside = f.train.id_set().difference(model.fe_train_ids());
    let sv = model.support_ids().intersection(&outside);
    let a = sv.sample(2.min(sv.len()), 1).unwrap();
    let b = outside.difference(&a).sample(6, 2).unwrap();
    let step1 = unlearn(&model, &f.train, &UnlearnRequest { forget: a.clone() }, PoolPolicy::Full).unwrap();
    let step2 = unlearn(&step1.model, &f.train, &UnlearnRequest { forget: b.clone() }, PoolPolicy::Full).unwrap();
    let once = unlearn(&model, &f.train, &UnlearnRequest { forget: a.union(&b) }, PoolPolicy::Full).unwrap();
    assert_eq!(step2.model.svm_train_ids(), once.model.svm_train_ids());
    let dv = |m: &SplitModel| m.svm().decision_values(m.embed(&f.test).unwrap().matrix().view()).unwrap();
    let dev = (dv(&step2.model) - dv(&once.model)).mapv(f64::abs).fold(0.0, |a: f64, &b| a.max(b));
    assert!(dev <= 1e-6, "deviation {dev}");
    assert_eq!(step2.model.manifest().history.len(), 2);
}

#[test]
fn extractor_is_independent_of_non_core_data() {
    let f = fixture();
    let model = aware(&f, 11);
    let core = model.fe_train_ids().clone();
    // change every non-core sample's features; the extractor must not move
    let mut feats = f.train.features().clone();
    for (r, id) in f.train.ids().iter().enumerate() {
        if !core.contains(*id) {
            feats.row_mut(r).mapv_inplace(|v| -v + 1.0);
        }
    }
    let altered = LabeledDataset::new(feats, f.train.labels().to_vec(), f.train.ids().to_vec(), f.train.num_classes()).unwrap();
    let other = train_unlearning_aware(&altered, &f.ranking, f.k, &f.hyper, 11).unwrap();
    assert_eq!(other.fe(), model.fe());
}

#[test]
fn containers_round_trip() {
    let f = fixture();
    let model = aware(&f, 12);
    let back = SplitModel::from_bytes(&model.to_bytes()).unwrap();
    assert_eq!(back, model);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    model.save(&path).unwrap();
    assert_eq!(SplitModel::load(&path).unwrap().fingerprint(), model.fingerprint());
    let mut bytes = model.to_bytes();
    bytes.push(0);
    assert!(SplitModel::from_bytes(&bytes).is_err());
    assert!(SplitModel::from_bytes(&bytes[..bytes.len() / 2]).is_err());
}

#[test]
fn baselines_train_on_the_stated_sets() {
    let f = fixture();
    let forget = f.ranking.top_k(f.k).unwrap();
    let full = full_retrain(&f.train, &forget, None, &f.hyper, 1).unwrap();
    let rest = f.train.id_set().difference(&forget);
    assert_eq!(full.fe_train_ids(), &rest);
    assert_eq!(full.svm_train_ids(), &rest);
    let plain = train_split(&f.train, &f.train.id_set(), &f.train.id_set(), &f.hyper, 1).unwrap();
    assert!(plain.accuracy(&f.test).unwrap() > 0.5);
    assert!(plain.svm().platt().is_some());
}
