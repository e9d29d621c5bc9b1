//! Independent reference implementations used by the property suites.
#![allow(dead_code)]

use maxrr::nn::FeatureExtractor;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Random two-class problem: Gaussian points whose first coordinate is
/// shifted by a random amount towards each label; both labels occur.
pub fn two_class_instance(m: usize, d: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: f64 = rng.random_range(0.0..3.0);
    let mut y: Vec<f64> = (0..m).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    y[0] = 1.0;
    y[1] = -1.0;
    let x = Array2::from_shape_fn((m, d), |(r, j)| {
        let z: f64 = rng.sample(StandardNormal);
        z + if j == 0 { shift * y[r] } else { 0.0 }
    });
    (x, y)
}

/// Dual objective `sum a - 1/2 a'Qa` with `Q_st = y_s y_t <x_s, x_t>`, summed
/// naively.
pub fn dual_objective(x: ArrayView2<'_, f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let m = y.len();
    let mut quad = 0.0;
    for s in 0..m {
        for t in 0..m {
            let k: f64 = x.row(s).iter().zip(x.row(t).iter()).map(|(a, b)| a * b).sum();
            quad += alpha[s] * alpha[t] * y[s] * y[t] * k;
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, y'a = 0}`: `clip(v - lambda y)`
/// with `lambda` found by bisection (the residual is monotone in it).
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let resid = |a: &[f64]| -> f64 { a.iter().zip(y).map(|(a, y)| a * y).sum() };
    let bound = v.iter().fold(0.0f64, |m, x| m.max(x.abs())) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if resid(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximises the SVM dual by accelerated projected gradient ascent. Returns
/// the multipliers and the objective.
pub fn projected_gradient_dual(x: ArrayView2<'_, f64>, y: &[f64], c: f64, iters: usize) -> (Vec<f64>, f64) {
    let m = y.len();
    let q: Vec<Vec<f64>> = (0..m)
        .map(|s| {
            (0..m)
                .map(|t| y[s] * y[t] * x.row(s).iter().zip(x.row(t).iter()).map(|(a, b)| a * b).sum::<f64>())
                .collect()
        })
        .collect();
    // Lipschitz constant bounded by the largest row sum of |Q|
    let lip = q.iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(1e-12, f64::max);
    let step = 1.0 / lip;
    let grad = |a: &[f64]| -> Vec<f64> { (0..m).map(|s| 1.0 - (0..m).map(|t| q[s][t] * a[t]).sum::<f64>()).collect() };
    let mut a = vec![0.0; m];
    let mut z = a.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let g = grad(&z);
        let next = project(&z.iter().zip(&g).map(|(zi, gi)| zi + step * gi).collect::<Vec<_>>(), y, c);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        z = next.iter().zip(&a).map(|(n, o)| n + (t - 1.0) / t_next * (n - o)).collect();
        a = next;
        t = t_next;
    }
    let obj = dual_objective(x, y, &a);
    (a, obj)
}

/// Central finite-difference gradient of the mean loss with step `h`.
pub fn finite_difference_grad(fe: &FeatureExtractor, x: ArrayView2<'_, f64>, labels: &[usize], h: f64) -> Vec<f64> {
    let theta = fe.parameters();
    let mut probe = fe.clone();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let mut p = theta.clone();
        p[i] = theta[i] + h;
        probe.set_parameters(&p).unwrap();
        let up = probe.loss_and_grads(x, labels).unwrap().0;
        p[i] = theta[i] - h;
        probe.set_parameters(&p).unwrap();
        let down = probe.loss_and_grads(x, labels).unwrap().0;
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Worst relative error between analytic and numeric gradients, with the
/// usual floor so entries near zero compare absolutely.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Brute-force ROC: for each threshold, counts members and non-members with
/// confidence strictly below it.
pub fn brute_roc(points: &[(f64, bool)], thresholds: &[f64]) -> Vec<(f64, f64)> {
    let p = points.iter().filter(|x| x.1).count() as f64;
    let n = points.iter().filter(|x| !x.1).count() as f64;
    thresholds
        .iter()
        .map(|&tau| {
            let tp = points.iter().filter(|x| x.1 && x.0 < tau).count() as f64;
            let fp = points.iter().filter(|x| !x.1 && x.0 < tau).count() as f64;
            (fp / n, tp / p)
        })
        .collect()
}

/// Threshold among `thresholds` with the largest `TPR - FPR` by exhaustive
/// recount; ties go to the smallest. Compares exact integer counts.
pub fn brute_best_threshold(points: &[(f64, bool)], thresholds: &[f64]) -> f64 {
    let p = points.iter().filter(|x| x.1).count() as i128;
    let n = points.iter().filter(|x| !x.1).count() as i128;
    let mut best: Option<(i128, f64)> = None;
    for &tau in thresholds {
        let tp = points.iter().filter(|x| x.1 && x.0 < tau).count() as i128;
        let fp = points.iter().filter(|x| !x.1 && x.0 < tau).count() as i128;
        let j = tp * n - fp * p;
        if best.is_none_or(|(bj, bt)| j > bj || (j == bj && tau < bt)) {
            best = Some((j, tau));
        }
    }
    best.unwrap().1
}
