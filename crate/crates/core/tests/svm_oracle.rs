mod support;

use maxrr::data::IdSet;
use maxrr::svm::kernel::{KernelKind, KernelRows};
use maxrr::svm::smo::{self, SolveParams};
use maxrr::svm::{BinarySvm, SvmConfig};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::oracles::{dual_objective, projected_gradient_dual, two_class_instance as instance};

fn tight(c: f64) -> SvmConfig {
    SvmConfig { c, tol: 1e-10, max_passes: 10_000, ..SvmConfig::default() }
}

#[test]
fn smo_matches_projected_gradient_objective() {
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = rng.random_range(2..=12);
        let d = rng.random_range(1..=3);
        let c = [0.5, 1.0, 10.0][seed as usize % 3];
        let (x, y) = instance(m, d, seed);
        let svm = BinarySvm::fit(&IdSet::range(m as u64), x.view(), &y, &tight(c)).unwrap();
        let (_, oracle) = projected_gradient_dual(x.view(), &y, c, 20_000);
        let ours = dual_objective(x.view(), &y, svm.alphas());
        assert!((ours - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "seed {seed}: {ours} vs {oracle}");
        assert!(ours >= oracle - 1e-9, "seed {seed}: SMO below the oracle");
        assert!(svm.kkt_violation(x.view()) <= 1e-8, "seed {seed}");
        assert!(svm.equality_residual().abs() <= 1e-10);
    }
}

#[test]
fn solver_objective_agrees_with_naive_sum() {
    let (x, y) = instance(15, 3, 4);
    let svm = BinarySvm::fit(&IdSet::range(15), x.view(), &y, &tight(1.0)).unwrap();
    let naive = dual_objective(x.view(), &y, svm.alphas());
    assert!((svm.dual_objective(x.view()) - naive).abs() < 1e-10);
}

/// Decision values of `svm` on a seeded grid spanning the data.
fn probe(svm: &BinarySvm, x: &Array2<f64>, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = x.ncols();
    let lo: Vec<f64> = (0..d).map(|j| x.column(j).iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..d).map(|j| x.column(j).iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect();
    (0..100)
        .map(|_| {
            let q: Vec<f64> = (0..d).map(|j| rng.random_range(lo[j]..=hi[j])).collect();
            svm.decision_value(ndarray::ArrayView1::from(&q)).unwrap()
        })
        .collect()
}

#[test]
fn removing_non_support_samples_keeps_the_decision_function() {
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let m = rng.random_range(10..=60);
        let d = rng.random_range(1..=5);
        let c = [0.5, 1.0, 10.0][seed as usize % 3];
        let (x, y) = instance(m, d, seed);
        let ids = IdSet::range(m as u64);
        let full = BinarySvm::fit(&ids, x.view(), &y, &tight(c)).unwrap();
        let non_sv: Vec<u64> = ids.difference(full.support_ids()).into_vec();
        let drop: IdSet = IdSet::from_unsorted(non_sv.into_iter().filter(|_| rng.random_bool(0.6)).collect());
        let keep = ids.difference(&drop);
        let rows: Vec<usize> = keep.iter().map(|id| id as usize).collect();
        let xk = x.select(Axis(0), &rows);
        let yk: Vec<f64> = rows.iter().map(|&r| y[r]).collect();
        if !(yk.contains(&1.0) && yk.contains(&-1.0)) {
            continue;
        }
        let part = BinarySvm::fit(&keep, xk.view(), &yk, &tight(c)).unwrap();
        let dev = probe(&full, &x, seed).iter().zip(probe(&part, &x, seed)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(dev <= 1e-6, "seed {seed}: deviation {dev}");
    }
}

#[test]
fn warm_start_from_an_optimum_needs_no_updates() {
    let (x, y) = instance(30, 2, 8);
    let k = KernelRows::new(x.view(), KernelKind::Linear);
    let params = SolveParams { c: 1.0, tol: 1e-8, max_iter: 100_000, alpha_tol: 1e-8 };
    let cold = smo::solve(&k, &y, params, None).unwrap();
    let warm = smo::solve(&k, &y, params, Some(&cold.alpha)).unwrap();
    assert_eq!(warm.iterations, 0);
    assert_eq!(warm.alpha, cold.alpha);
    assert_eq!(warm.bias, cold.bias);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Solutions satisfy the box, the equality constraint and the KKT
    /// conditions to the requested tolerance.
    #[test]
    fn solutions_are_feasible_and_optimal(seed in 0u64..10_000, m in 2usize..40, d in 1usize..5, ci in 0usize..3) {
        let c = [0.1, 1.0, 10.0][ci];
        let (x, y) = instance(m, d, seed);
        let tol = 1e-6;
        let svm = BinarySvm::fit(&IdSet::range(m as u64), x.view(), &y, &SvmConfig { c, tol, max_passes: 10_000, ..SvmConfig::default() }).unwrap();
        prop_assert!(svm.alphas().iter().all(|&a| (0.0..=c).contains(&a)));
        prop_assert!(svm.equality_residual().abs() <= 1e-9 * c.max(1.0) * m as f64);
        prop_assert!(svm.kkt_violation(x.view()) <= tol, "violation {}", svm.kkt_violation(x.view()));
        for (t, id) in svm.train_ids().iter().enumerate() {
            prop_assert_eq!(svm.support_ids().contains(id), svm.alphas()[t] > 0.0);
        }
    }
}
