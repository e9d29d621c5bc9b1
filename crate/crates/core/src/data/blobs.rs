use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, LabeledDataset};

/// Class centres whose nearest pair is exactly `separation` apart.
///
/// With `d >= num_classes` the centres are scaled basis vectors; otherwise they
/// sit on a regular polygon in the first two coordinates (or on a line for
/// `d == 1`).
fn centres(num_classes: usize, d: usize, separation: f64) -> Vec<Vec<f64>> {
    (0..num_classes)
        .map(|c| {
            let mut mu = vec![0.0; d];
            if d >= num_classes {
                mu[c] = separation / std::f64::consts::SQRT_2;
            } else if d >= 2 {
                let k = num_classes as f64;
                let radius = separation / (2.0 * (std::f64::consts::PI / k).sin());
                let theta = 2.0 * std::f64::consts::PI * c as f64 / k;
                mu[0] = radius * theta.cos();
                mu[1] = radius * theta.sin();
            } else {
                mu[0] = separation * c as f64;
            }
            mu
        })
        .collect()
}

/// Unit-variance Gaussian clusters, one per class, rows interleaved by class.
pub fn synth_blobs(
    num_classes: usize,
    per_class: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    if num_classes < 2 || per_class < 1 || d < 1 || !(separation > 0.0) {
        return Err(DataError::InvalidParam(format!(
            "synth_blobs needs num_classes >= 2, per_class >= 1, d >= 1, separation > 0 \
             (got {num_classes}, {per_class}, {d}, {separation})"
        )));
    }
    let mus = centres(num_classes, d, separation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = num_classes * per_class;
    let mut features = Array2::zeros((m, d));
    let mut labels = Vec::with_capacity(m);
    for row in 0..m {
        let class = row % num_classes;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[[row, j]] = mus[class][j] + z;
        }
        labels.push(class);
    }
    LabeledDataset::new(features, labels, (0..m as u64).collect(), num_classes)
}
