use ndarray::{Array1, ArrayView1, ArrayView2};

use super::kernel::{KernelKind, KernelRows};
use super::smo::{self, SolveParams};
use super::{SvmConfig, SvmError};
use crate::data::{IdSet, SampleId};
use crate::nn::EmbeddingSet;

/// One binary soft-margin SVM in dual form.
#[derive(Clone, Debug, PartialEq)]
pub struct BinarySvm {
    /// Training IDs; `alphas` and `signs` are aligned with them.
    pub(crate) train_ids: IdSet,
    pub(crate) alphas: Vec<f64>,
    pub(crate) signs: Vec<i8>,
    pub(crate) support_ids: IdSet,
    pub(crate) bias: f64,
    pub(crate) w: Array1<f64>,
    pub(crate) c: f64,
    pub(crate) kernel: KernelKind,
    pub(crate) iterations: usize,
}

impl BinarySvm {
    /// Solves the dual on `x` (rows aligned with `ids`) with labels in {-1, +1}.
    pub fn fit(ids: &IdSet, x: ArrayView2<'_, f64>, y: &[f64], cfg: &SvmConfig) -> Result<BinarySvm, SvmError> {
        let k = KernelRows::new(x, cfg.kernel);
        Self::fit_with_kernel(ids, x, y, cfg, &k, None)
    }

    pub(crate) fn fit_with_kernel(
        ids: &IdSet,
        x: ArrayView2<'_, f64>,
        y: &[f64],
        cfg: &SvmConfig,
        k: &KernelRows<'_>,
        warm: Option<&[f64]>,
    ) -> Result<BinarySvm, SvmError> {
        if ids.len() != x.nrows() {
            return Err(SvmError::ShapeMismatch(format!("{} ids for {} rows", ids.len(), x.nrows())));
        }
        let params = SolveParams {
            c: cfg.c,
            tol: cfg.tol,
            max_iter: cfg.max_passes.saturating_mul(x.nrows().max(1)),
            alpha_tol: cfg.alpha_tol,
        };
        let sol = smo::solve(k, y, params, warm)?;
        let mut w = Array1::zeros(x.ncols());
        let mut support = Vec::new();
        for (t, &a) in sol.alpha.iter().enumerate() {
            if a > cfg.alpha_tol {
                support.push(ids.as_slice()[t]);
                w.scaled_add(a * y[t], &x.row(t));
            }
        }
        Ok(BinarySvm {
            train_ids: ids.clone(),
            alphas: sol.alpha,
            signs: y.iter().map(|&v| if v > 0.0 { 1 } else { -1 }).collect(),
            support_ids: IdSet::from_sorted(support).expect("ids ascending"),
            bias: sol.bias,
            w,
            c: cfg.c,
            kernel: cfg.kernel,
            iterations: sol.iterations,
        })
    }

    pub fn train_ids(&self) -> &IdSet {
        &self.train_ids
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_of(&self, id: SampleId) -> Option<f64> {
        self.train_ids.position(id).map(|p| self.alphas[p])
    }

    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    pub fn support_ids(&self) -> &IdSet {
        &self.support_ids
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.w
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn kernel(&self) -> KernelKind {
        self.kernel
    }

    /// Solver pair updates spent producing this model.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `<w, x> + b` using the cached linear weights.
    pub fn decision_value(&self, x: ArrayView1<'_, f64>) -> Result<f64, SvmError> {
        if x.len() != self.w.len() {
            return Err(SvmError::ShapeMismatch(format!("query has {} dims, model {}", x.len(), self.w.len())));
        }
        Ok(self.w.dot(&x) + self.bias)
    }

    /// `sum_{s in S} a_s y_s K(x_s, x) + b`, looking support vectors up in `sv`.
    pub fn decision_value_kernel(&self, x: ArrayView1<'_, f64>, sv: &EmbeddingSet) -> Result<f64, SvmError> {
        if x.len() != self.w.len() {
            return Err(SvmError::ShapeMismatch(format!("query has {} dims, model {}", x.len(), self.w.len())));
        }
        let q = x.to_vec();
        let mut sum = 0.0;
        for id in self.support_ids.iter() {
            let pos = self.train_ids.position(id).expect("support ids are training ids");
            let row = sv.row_of(id).ok_or(SvmError::UnknownId(id))?;
            let xs = sv.matrix().row(row).to_vec();
            sum += self.alphas[pos] * f64::from(self.signs[pos]) * self.kernel.eval(&xs, &q);
        }
        Ok(sum + self.bias)
    }

    /// `sum_l a_l y_l`.
    pub fn equality_residual(&self) -> f64 {
        self.alphas.iter().zip(&self.signs).map(|(a, &s)| a * f64::from(s)).sum()
    }

    /// Largest violation of the soft-margin KKT conditions on the training rows
    /// `x` (aligned with `train_ids`).
    pub fn kkt_violation(&self, x: ArrayView2<'_, f64>) -> f64 {
        let mut worst: f64 = 0.0;
        for (t, row) in x.rows().into_iter().enumerate() {
            let a = self.alphas[t];
            let margin = f64::from(self.signs[t]) * (self.w.dot(&row) + self.bias);
            let v = if a <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if a >= self.c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Dual objective value of this solution on its training rows.
    pub fn dual_objective(&self, x: ArrayView2<'_, f64>) -> f64 {
        let k = KernelRows::new(x, self.kernel);
        let y: Vec<f64> = self.signs.iter().map(|&s| f64::from(s)).collect();
        smo::dual_objective(&k, &y, &self.alphas)
    }
}
