use std::borrow::Cow;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

/// Kernel function tag. Only the linear kernel ships; the solver only ever
/// touches kernels through [`KernelKind::eval`] and [`KernelRows`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Linear,
}

impl KernelKind {
    pub fn eval(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            KernelKind::Linear => dot(a, b),
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            KernelKind::Linear => 0,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(KernelKind::Linear),
            _ => None,
        }
    }
}

/// Dot product with a fixed summation order, so a given pair of vectors gives
/// the same bits no matter which matrix they were taken from.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Above this many rows the Gram matrix is not materialised and kernel rows
/// are recomputed on demand (a 12k x 12k f64 Gram is ~1.1 GiB).
pub const DENSE_GRAM_LIMIT: usize = 12_000;

/// Row access to the kernel matrix of a fixed sample set.
pub enum KernelRows<'a> {
    Dense { n: usize, gram: Vec<f64> },
    OnDemand { x: ArrayView2<'a, f64>, kernel: KernelKind },
}

impl<'a> KernelRows<'a> {
    pub fn new(x: ArrayView2<'a, f64>, kernel: KernelKind) -> Self {
        let n = x.nrows();
        if n > DENSE_GRAM_LIMIT {
            return KernelRows::OnDemand { x, kernel };
        }
        let rows: Vec<Cow<[f64]>> = x
            .rows()
            .into_iter()
            .map(|r| match r.to_slice() {
                Some(s) => Cow::Borrowed(s),
                None => Cow::Owned(r.to_vec()),
            })
            .collect();
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = kernel.eval(&rows[i], &rows[j]);
                gram[i * n + j] = k;
                gram[j * n + i] = k;
            }
        }
        KernelRows::Dense { n, gram }
    }

    pub fn len(&self) -> usize {
        match self {
            KernelRows::Dense { n, .. } => *n,
            KernelRows::OnDemand { x, .. } => x.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> Cow<'_, [f64]> {
        match self {
            KernelRows::Dense { n, gram } => Cow::Borrowed(&gram[i * n..(i + 1) * n]),
            KernelRows::OnDemand { x, kernel } => {
                let xi = x.row(i).to_vec();
                Cow::Owned(x.rows().into_iter().map(|r| kernel.eval(&xi, &r.to_vec())).collect())
            }
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        match self {
            KernelRows::Dense { n, gram } => gram[i * n + i],
            KernelRows::OnDemand { x, kernel } => {
                let xi = x.row(i).to_vec();
                kernel.eval(&xi, &xi)
            }
        }
    }
}
