//! Pairwise coordinate ascent on the dual soft-margin problem
//!
//! ```text
//! max  sum_l a_l - 1/2 sum_l sum_m a_l a_m y_l y_m K(x_l, x_m)
//! s.t. 0 <= a_l <= C,  sum_l a_l y_l = 0
//! ```
//!
//! Working pairs are the maximal KKT violators (ties to the lowest index), so
//! a solve is a deterministic function of its inputs.

use super::kernel::KernelRows;
use super::SvmError;

const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    /// Pair updates performed.
    pub iterations: usize,
    /// Final maximal-violation gap `m(a) - M(a)`.
    pub gap: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SolveParams {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub alpha_tol: f64,
}

struct State<'k, 'x> {
    k: &'k KernelRows<'x>,
    y: &'k [f64],
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    /// Bit 0: index is in `I_up`; bit 1: index is in `I_low`.
    status: Vec<u8>,
}

const UP: u8 = 1;
const LOW: u8 = 2;

/// (i, j, m, M): most violating up/low indices and their scores.
type Selection = (Option<usize>, Option<usize>, f64, f64);

impl State<'_, '_> {
    fn status_of(&self, t: usize) -> u8 {
        let (y, a) = (self.y[t], self.alpha[t]);
        let up = (y > 0.0 && a < self.c) || (y < 0.0 && a > 0.0);
        let low = (y < 0.0 && a < self.c) || (y > 0.0 && a > 0.0);
        u8::from(up) * UP | u8::from(low) * LOW
    }

    /// Gradient of the minimisation form `1/2 a'Qa - e'a`, recomputed from the
    /// nonzero multipliers in index order.
    fn fresh_gradient(&mut self) {
        let n = self.y.len();
        let mut g = vec![-1.0; n];
        for s in 0..n {
            let a = self.alpha[s];
            if a == 0.0 {
                continue;
            }
            let row = self.k.row(s);
            let coef = a * self.y[s];
            for t in 0..n {
                g[t] += coef * self.y[t] * row[t];
            }
        }
        self.grad = g;
        self.status = (0..n).map(|t| self.status_of(t)).collect();
    }

    fn select(&self) -> Selection {
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut i, mut j) = (None, None);
        for t in 0..self.y.len() {
            let v = -self.y[t] * self.grad[t];
            let st = self.status[t];
            if st & UP != 0 && v > gmax {
                gmax = v;
                i = Some(t);
            }
            if st & LOW != 0 && v < gmin {
                gmin = v;
                j = Some(t);
            }
        }
        (i, j, gmax, gmin)
    }

    /// Optimises the pair analytically, updates the gradient, and returns the
    /// next selection computed in the same pass.
    fn update_pair(&mut self, i: usize, j: usize) -> Selection {
        let (c, y) = (self.c, self.y);
        let ki = self.k.row(i);
        let kj = self.k.row(j);
        let qij = y[i] * y[j] * ki[j];
        let (qii, qjj) = (ki[i], kj[j]);
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        let (gi, gj) = (self.grad[i], self.grad[j]);
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-gi - gj) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (gi - gj) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        self.status[i] = self.status_of(i);
        self.status[j] = self.status_of(j);
        let (dai, daj) = ((ai - old_i) * y[i], (aj - old_j) * y[j]);
        let (mut gmax, mut gmin) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut ni, mut nj) = (None, None);
        let grad = &mut self.grad[..];
        let status = &self.status[..];
        let (ki, kj) = (&ki[..y.len()], &kj[..y.len()]);
        for t in 0..y.len() {
            let g = grad[t] + y[t] * (dai * ki[t] + daj * kj[t]);
            grad[t] = g;
            let v = -y[t] * g;
            let st = status[t];
            if st & UP != 0 && v > gmax {
                gmax = v;
                ni = Some(t);
            }
            if st & LOW != 0 && v < gmin {
                gmin = v;
                nj = Some(t);
            }
        }
        (ni, nj, gmax, gmin)
    }

    /// Intercept: mean of `y_t - sum_s a_s y_s K_ts` over free support vectors;
    /// with none free, the mean over all support vectors clamped into the
    /// feasible interval `[min(M, m), max(M, m)]`.
    fn bias(&self, alpha_tol: f64, m_up: f64, m_low: f64) -> f64 {
        let score = |t: usize| -self.y[t] * self.grad[t];
        let free: Vec<usize> = (0..self.y.len())
            .filter(|&t| self.alpha[t] > alpha_tol && self.alpha[t] < self.c)
            .collect();
        if !free.is_empty() {
            return free.iter().map(|&t| score(t)).sum::<f64>() / free.len() as f64;
        }
        let sv: Vec<usize> = (0..self.y.len()).filter(|&t| self.alpha[t] > alpha_tol).collect();
        let (lo, hi) = (m_up.min(m_low), m_up.max(m_low));
        if sv.is_empty() {
            return 0.5 * (lo + hi);
        }
        let mean = sv.iter().map(|&t| score(t)).sum::<f64>() / sv.len() as f64;
        mean.clamp(lo, hi)
    }
}

/// Solves the dual for labels `y` in {-1, +1}, optionally from a feasible
/// starting point. The returned gap is measured on a gradient recomputed from
/// scratch, so re-solving from the returned multipliers performs no updates.
pub fn solve(k: &KernelRows<'_>, y: &[f64], params: SolveParams, warm: Option<&[f64]>) -> Result<DualSolution, SvmError> {
    let n = y.len();
    if n != k.len() {
        return Err(SvmError::ShapeMismatch(format!("{n} labels for {} kernel rows", k.len())));
    }
    if !(params.c > 0.0) {
        return Err(SvmError::InvalidParam(format!("C must be positive, got {}", params.c)));
    }
    if !y.iter().any(|&v| v > 0.0) || !y.iter().any(|&v| v < 0.0) {
        return Err(SvmError::DegenerateLabels);
    }
    let alpha = match warm {
        Some(a) => {
            if a.len() != n || a.iter().any(|&v| !(0.0..=params.c).contains(&v)) {
                return Err(SvmError::InvalidParam("warm start outside the box".into()));
            }
            a.to_vec()
        }
        None => vec![0.0; n],
    };
    let mut st = State {
        k,
        y,
        c: params.c,
        alpha,
        grad: Vec::new(),
        status: Vec::new(),
    };
    st.fresh_gradient();
    let mut iterations = 0;
    let mut sel = st.select();
    loop {
        let (i, j, m_up, m_low) = sel;
        let gap = m_up - m_low;
        let converged = match (i, j) {
            (Some(_), Some(_)) => gap <= params.tol,
            _ => true,
        };
        if converged {
            // confirm on an exact gradient before stopping
            st.fresh_gradient();
            sel = st.select();
            let (i2, j2, m_up, m_low) = sel;
            let gap = m_up - m_low;
            if i2.is_none() || j2.is_none() || gap <= params.tol {
                let bias = st.bias(params.alpha_tol, m_up, m_low);
                return Ok(DualSolution {
                    alpha: st.alpha,
                    bias,
                    iterations,
                    gap: if gap.is_finite() { gap } else { 0.0 },
                });
            }
            continue;
        }
        if iterations >= params.max_iter {
            return Err(SvmError::NoConvergence { iterations, gap });
        }
        sel = st.update_pair(i.expect("checked"), j.expect("checked"));
        iterations += 1;
    }
}

/// Dual objective `sum a - 1/2 a'Qa` (to be maximised).
pub fn dual_objective(k: &KernelRows<'_>, y: &[f64], alpha: &[f64]) -> f64 {
    let mut quad = 0.0;
    for s in 0..y.len() {
        if alpha[s] == 0.0 {
            continue;
        }
        let row = k.row(s);
        for t in 0..y.len() {
            quad += alpha[s] * alpha[t] * y[s] * y[t] * row[t];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}
