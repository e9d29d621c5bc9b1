mod support;

use maxrr::data::{synth_blobs, IdSet};
use maxrr::nn::{ArchSpec, FeatureExtractor, LayerSpec, NnError, TrainConfig};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::{finite_difference_grad, max_relative_error};

fn small_conv() -> ArchSpec {
    use LayerSpec::*;
    ArchSpec {
        name: "tiny-conv".into(),
        input: (1, 8, 8),
        layers: vec![
            Conv5x5 { filters: 2, padding: 2 },
            Relu,
            AvgPool2x2,
            Linear { units: 3 },
            Softmax,
        ],
    }
}

fn random_batch(rows: usize, dim: usize, classes: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((rows, dim), |_| rng.random_range(-1.0..1.0));
    let y = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    (x, y)
}

#[test]
fn uniform_output_gives_ln_ten() {
    let mut fe = FeatureExtractor::init(ArchSpec::mlp_with(3, &[4], 10), 1).unwrap();
    let pl = fe.prediction_layer_mut();
    pl.w.fill(0.0);
    pl.b.fill(0.0);
    let (x, y) = random_batch(5, 3, 10, 2);
    let (loss, _) = fe.loss_and_grads(x.view(), &y).unwrap();
    assert!((loss - 10f64.ln()).abs() < 1e-12, "{loss}");
}

#[test]
fn saturated_correct_output_has_zero_loss_and_gradient() {
    let mut fe = FeatureExtractor::init(ArchSpec::mlp_with(3, &[4], 4), 1).unwrap();
    let pl = fe.prediction_layer_mut();
    pl.w.fill(0.0);
    pl.b.fill(0.0);
    pl.b[2] = 1000.0;
    let (x, _) = random_batch(6, 3, 4, 3);
    let (loss, grads) = fe.loss_and_grads(x.view(), &[2; 6]).unwrap();
    assert_eq!(loss, 0.0);
    let out = grads.0[grads.0.len() - 2].as_ref().unwrap();
    assert!(out.w.iter().chain(out.b.iter()).all(|&g| g == 0.0));
}

#[test]
fn gradients_match_central_differences() {
    for (i, arch) in [ArchSpec::mlp_with(4, &[5], 3), small_conv()].into_iter().enumerate() {
        assert!(arch.param_count().unwrap() <= 500);
        for draw in 0..5u64 {
            let fe = FeatureExtractor::init(arch.clone(), 100 * i as u64 + draw).unwrap();
            let (x, y) = random_batch(1 + draw as usize, arch.input_dim(), 3, draw + 7);
            let analytic = fe.loss_and_grads(x.view(), &y).unwrap().1.flatten();
            let numeric = finite_difference_grad(&fe, x.view(), &y, 1e-5);
            let err = max_relative_error(&analytic, &numeric);
            assert!(err <= 1e-4, "{} draw {draw}: relative error {err}", arch.name);
        }
    }
}

#[test]
fn training_is_deterministic_in_the_seed() {
    let ds = synth_blobs(3, 20, 4, 4.0, 5).unwrap();
    let arch = ArchSpec::mlp_with(4, &[6], 3);
    let cfg = TrainConfig { epochs: 3, batch: 8, ..TrainConfig::default() };
    let a = FeatureExtractor::init(arch.clone(), 9).unwrap().train(&ds, &cfg, 9).unwrap();
    let b = FeatureExtractor::init(arch.clone(), 9).unwrap().train(&ds, &cfg, 9).unwrap();
    assert_eq!(a, b);
    let c = FeatureExtractor::init(arch, 9).unwrap().train(&ds, &cfg, 10).unwrap();
    assert_ne!(a.parameters(), c.parameters());
}

#[test]
fn zero_epochs_keeps_weights_and_records_ids() {
    let ds = synth_blobs(2, 10, 3, 4.0, 1).unwrap();
    let fe = FeatureExtractor::init(ArchSpec::mlp_with(3, &[4], 2), 3).unwrap();
    let trained = fe.train(&ds, &TrainConfig { epochs: 0, ..TrainConfig::default() }, 3).unwrap();
    assert_eq!(trained.parameters(), fe.parameters());
    assert_eq!(trained.train_ids(), Some(&ds.id_set()));
    assert!(matches!(trained.train(&ds, &TrainConfig::default(), 3), Err(NnError::AlreadyTrained)));
    let empty = ds.subset(&IdSet::new()).unwrap();
    assert!(matches!(fe.train(&empty, &TrainConfig::default(), 3), Err(NnError::EmptyDataset)));
}

#[test]
fn separable_blobs_are_learned() {
    let ds = synth_blobs(2, 100, 2, 8.0, 11).unwrap();
    let cfg = TrainConfig { epochs: 5, batch: 16, ..TrainConfig::default() };
    let fe = FeatureExtractor::init(ArchSpec::mlp_with(2, &[8], 2), 0).unwrap().train(&ds, &cfg, 0).unwrap();
    assert!(fe.accuracy(&ds).unwrap() >= 0.99);
}

#[test]
fn embeddings_ignore_the_prediction_layer() {
    let ds = synth_blobs(3, 10, 4, 3.0, 2).unwrap();
    let mut fe = FeatureExtractor::init(ArchSpec::mlp_with(4, &[6, 5], 3), 4).unwrap();
    let before = fe.embed(&ds).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    fe.prediction_layer_mut().w.mapv_inplace(|_| rng.random_range(-5.0..5.0));
    let after = fe.embed(&ds).unwrap();
    assert_eq!(before.matrix(), after.matrix());
    assert_eq!(after.dim(), 5);
    assert_ne!(before.fingerprint(), after.fingerprint());
}

#[test]
fn embedding_a_subset_reproduces_the_rows_bit_for_bit() {
    let ds = synth_blobs(4, 300, 5, 2.0, 3).unwrap();
    let fe = FeatureExtractor::init(ArchSpec::mlp_with(5, &[7, 6], 4), 8).unwrap();
    let full = fe.embed(&ds).unwrap();
    let keep = ds.id_set().sample(517, 1).unwrap();
    let part = fe.embed(&ds.subset(&keep).unwrap()).unwrap();
    assert_eq!(part, full.subset(&keep).unwrap());
    let none = fe.embed(&ds.subset(&IdSet::new()).unwrap()).unwrap();
    assert!(none.is_empty());
}

#[test]
fn checkpoint_round_trips() {
    for arch in [ArchSpec::mlp_with(4, &[6], 3), small_conv()] {
        let ds = synth_blobs(3, 8, arch.input_dim(), 3.0, 1).unwrap();
        let fe = FeatureExtractor::init(arch, 5).unwrap().train(&ds, &TrainConfig { epochs: 1, ..TrainConfig::default() }, 5).unwrap();
        let back = FeatureExtractor::from_bytes(&fe.to_bytes()).unwrap();
        assert_eq!(back, fe);
        assert_eq!(back.fingerprint(), fe.fingerprint());
        let mut bytes = fe.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(FeatureExtractor::from_bytes(&bytes).is_err());
    }
}

#[test]
fn fingerprint_tracks_weights() {
    let mut fe = FeatureExtractor::init(ArchSpec::mlp_with(3, &[4], 2), 1).unwrap();
    let f0 = fe.fingerprint();
    let mut p = fe.parameters();
    fe.set_parameters(&p).unwrap();
    assert_eq!(fe.fingerprint(), f0);
    p[3] += 1e-12;
    fe.set_parameters(&p).unwrap();
    assert_ne!(fe.fingerprint(), f0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The mean loss and its gradient do not depend on row order.
    #[test]
    fn batch_order_does_not_matter(seed in 0u64..1000, rows in 2usize..9) {
        let fe = FeatureExtractor::init(ArchSpec::mlp_with(4, &[5], 3), seed).unwrap();
        let (x, y) = random_batch(rows, 4, 3, seed + 1);
        let perm: Vec<usize> = (0..rows).rev().collect();
        let xp = x.select(Axis(0), &perm);
        let yp: Vec<usize> = perm.iter().map(|&r| y[r]).collect();
        let (la, ga) = fe.loss_and_grads(x.view(), &y).unwrap();
        let (lb, gb) = fe.loss_and_grads(xp.view(), &yp).unwrap();
        prop_assert!((la - lb).abs() < 1e-12);
        for (a, b) in ga.flatten().iter().zip(gb.flatten()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    /// One full-batch step is the same whichever order the rows are stored in.
    #[test]
    fn full_batch_step_is_order_free(seed in 0u64..1000) {
        let ds = synth_blobs(3, 6, 4, 2.0, seed).unwrap();
        let cfg = TrainConfig { epochs: 1, batch: ds.len(), ..TrainConfig::default() };
        let fe = FeatureExtractor::init(ArchSpec::mlp_with(4, &[5], 3), seed).unwrap();
        let a = fe.train(&ds, &cfg, 1).unwrap();
        let b = fe.train(&ds, &cfg, 2).unwrap();
        for (pa, pb) in a.parameters().iter().zip(b.parameters()) {
            prop_assert!((pa - pb).abs() < 1e-12);
        }
    }
}
