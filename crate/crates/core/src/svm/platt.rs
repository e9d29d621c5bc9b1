use serde::{Deserialize, Serialize};

use super::SvmError;

/// Sigmoid `p(f) = 1 / (1 + exp(A f + B))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlattParams {
    pub a: f64,
    pub b: f64,
}

impl PlattParams {
    pub fn prob(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

const MAX_ITER: usize = 100;
const MIN_STEP: f64 = 1e-10;
const SIGMA: f64 = 1e-12;
const EPS: f64 = 1e-5;

/// Fits a sigmoid to decision values by Newton's method with backtracking on
/// the log-loss against regularised targets `(N+ + 1)/(N+ + 2)` and
/// `1/(N- + 2)`.
pub fn fit_sigmoid(dec: &[f64], positive: &[bool]) -> Result<PlattParams, SvmError> {
    if dec.len() != positive.len() {
        return Err(SvmError::ShapeMismatch(format!("{} values for {} labels", dec.len(), positive.len())));
    }
    let prior1 = positive.iter().filter(|&&p| p).count() as f64;
    let prior0 = dec.len() as f64 - prior1;
    if prior1 == 0.0 || prior0 == 0.0 {
        return Err(SvmError::DegenerateLabels);
    }
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        let mut fval = 0.0;
        for (&f, &ti) in dec.iter().zip(&t) {
            let z = f * a + b;
            fval += if z >= 0.0 {
                ti * z + (1.0 + (-z).exp()).ln()
            } else {
                (ti - 1.0) * z + (1.0 + z.exp()).ln()
            };
        }
        fval
    };

    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    for iter in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&f, &ti) in dec.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            return Ok(PlattParams { a, b });
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        loop {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
            if step < MIN_STEP {
                // no further decrease is possible at this precision
                return Ok(PlattParams { a, b });
            }
        }
        if iter + 1 == MAX_ITER {
            break;
        }
    }
    Err(SvmError::NoConvergence { iterations: MAX_ITER, gap: f64::NAN })
}

/// Normalises per-class sigmoid outputs onto the simplex.
pub(crate) fn normalise(probs: &mut [f64]) {
    let sum: f64 = probs.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        for p in probs.iter_mut() {
            *p /= sum;
        }
    } else {
        let u = 1.0 / probs.len() as f64;
        probs.iter_mut().for_each(|p| *p = u);
    }
}
