use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use super::binary::BinarySvm;
use super::kernel::KernelRows;
use super::platt::{self, fit_sigmoid, PlattParams};
use super::{SvmConfig, SvmError};
use crate::data::IdSet;
use crate::nn::{argmax, EmbeddingSet};

/// One-vs-rest multiclass SVM with optional Platt calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct OvrSvm {
    pub(crate) models: Vec<BinarySvm>,
    pub(crate) platt: Option<Vec<PlattParams>>,
    pub(crate) train_ids: IdSet,
    pub(crate) config: SvmConfig,
}

fn class_signs(labels: &[usize], class: usize) -> Vec<f64> {
    labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect()
}

impl OvrSvm {
    /// Trains one binary model per class `0..num_classes` on a shared kernel
    /// matrix. Every class must occur in `emb`.
    pub fn fit(emb: &EmbeddingSet, num_classes: usize, cfg: &SvmConfig) -> Result<OvrSvm, SvmError> {
        Self::fit_from(emb, num_classes, cfg, None)
    }

    fn fit_from(
        emb: &EmbeddingSet,
        num_classes: usize,
        cfg: &SvmConfig,
        warm: Option<Vec<Option<Vec<f64>>>>,
    ) -> Result<OvrSvm, SvmError> {
        if num_classes < 2 {
            return Err(SvmError::DegenerateLabels);
        }
        let mut seen = vec![false; num_classes];
        for &l in emb.labels() {
            if l >= num_classes {
                return Err(SvmError::InvalidParam(format!("label {l} outside [0, {num_classes})")));
            }
            seen[l] = true;
        }
        if seen.iter().any(|&s| !s) {
            return Err(SvmError::DegenerateLabels);
        }
        let x = emb.matrix().view();
        let k = KernelRows::new(x, cfg.kernel);
        let ids = emb.id_set();
        let warm = warm.unwrap_or_else(|| vec![None; num_classes]);
        let models = (0..num_classes)
            .into_par_iter()
            .map(|c| {
                let y = class_signs(emb.labels(), c);
                BinarySvm::fit_with_kernel(&ids, x, &y, cfg, &k, warm[c].as_deref())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OvrSvm {
            models,
            platt: None,
            train_ids: ids,
            config: *cfg,
        })
    }

    /// Refits on `emb`, whose IDs must be a subset of the previous training
    /// IDs. A class whose removed samples all had zero multipliers is solved
    /// from the previous multipliers restricted to the subset (still feasible);
    /// the others start from zero. Calibration is dropped.
    pub fn retrain_on(&self, emb: &EmbeddingSet, cfg: &SvmConfig) -> Result<OvrSvm, SvmError> {
        let keep = emb.id_set();
        if let Some(id) = keep.difference(&self.train_ids).iter().next() {
            return Err(SvmError::UnknownId(id));
        }
        let removed = self.train_ids.difference(&keep);
        let warm = self
            .models
            .iter()
            .map(|m| {
                let feasible = removed.iter().all(|id| m.alpha_of(id) == Some(0.0));
                (feasible && m.c == cfg.c).then(|| keep.iter().map(|id| m.alpha_of(id).expect("subset")).collect())
            })
            .collect();
        Self::fit_from(emb, self.num_classes(), cfg, Some(warm))
    }

    pub fn num_classes(&self) -> usize {
        self.models.len()
    }

    pub fn models(&self) -> &[BinarySvm] {
        &self.models
    }

    pub fn train_ids(&self) -> &IdSet {
        &self.train_ids
    }

    pub fn config(&self) -> &SvmConfig {
        &self.config
    }

    pub fn platt(&self) -> Option<&[PlattParams]> {
        self.platt.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.models[0].weights().len()
    }

    /// Union of the per-class support sets.
    pub fn support_ids(&self) -> IdSet {
        self.models.iter().fold(IdSet::new(), |acc, m| acc.union(m.support_ids()))
    }

    pub fn decision_row(&self, x: ArrayView1<'_, f64>) -> Result<Vec<f64>, SvmError> {
        self.models.iter().map(|m| m.decision_value(x)).collect()
    }

    /// Decision values, one row per sample and one column per class.
    pub fn decision_values(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, SvmError> {
        if x.ncols() != self.dim() {
            return Err(SvmError::ShapeMismatch(format!("queries have {} dims, model {}", x.ncols(), self.dim())));
        }
        let mut out = Array2::zeros((x.nrows(), self.num_classes()));
        for (r, row) in x.rows().into_iter().enumerate() {
            for (c, m) in self.models.iter().enumerate() {
                out[[r, c]] = m.w.dot(&row) + m.bias;
            }
        }
        Ok(out)
    }

    /// Argmax class; ties go to the lowest class index.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Vec<usize>, SvmError> {
        let dv = self.decision_values(x)?;
        Ok(dv.rows().into_iter().map(|r| argmax(r.iter().copied())).collect())
    }

    pub fn accuracy(&self, emb: &EmbeddingSet) -> Result<f64, SvmError> {
        if emb.is_empty() {
            return Ok(0.0);
        }
        let pred = self.predict(emb.matrix().view())?;
        let hits = pred.iter().zip(emb.labels()).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / emb.len() as f64)
    }

    /// Fits one sigmoid per class on a seeded `holdout_fraction` sample of
    /// `emb`, which must only contain samples the caller may use.
    pub fn fit_platt(&self, emb: &EmbeddingSet, holdout_fraction: f64, seed: u64) -> Result<OvrSvm, SvmError> {
        if !(holdout_fraction > 0.0 && holdout_fraction <= 1.0) {
            return Err(SvmError::InvalidParam(format!("holdout fraction {holdout_fraction} outside (0, 1]")));
        }
        let n = ((holdout_fraction * emb.len() as f64).round() as usize).clamp(1.min(emb.len()), emb.len());
        let picked = emb
            .id_set()
            .sample(n, seed)
            .map_err(|e| SvmError::InvalidParam(e.to_string()))?;
        let cal = emb.subset(&picked).map_err(|e| SvmError::InvalidParam(e.to_string()))?;
        let dv = self.decision_values(cal.matrix().view())?;
        let params = (0..self.num_classes())
            .map(|c| {
                let pos: Vec<bool> = cal.labels().iter().map(|&l| l == c).collect();
                fit_sigmoid(&dv.column(c).to_vec(), &pos)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = self.clone();
        out.platt = Some(params);
        Ok(out)
    }

    /// Calibrated class probabilities, rows on the simplex.
    pub fn probabilities(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>, SvmError> {
        let platt = self.platt.as_ref().ok_or(SvmError::MissingCalibration)?;
        let mut dv = self.decision_values(x)?;
        for mut row in dv.rows_mut() {
            for (v, p) in row.iter_mut().zip(platt) {
                *v = p.prob(*v);
            }
            platt::normalise(row.as_slice_mut().expect("row-major"));
        }
        Ok(dv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use ndarray::Array2;

    fn as_emb(ds: &crate::LabeledDataset) -> EmbeddingSet {
        EmbeddingSet::new(ds.ids().to_vec(), ds.labels().to_vec(), ds.features().clone(), "raw".into()).unwrap()
    }

    #[test]
    fn three_blobs_fit_perfectly() {
        let ds = synth_blobs(3, 30, 3, 10.0, 4).unwrap();
        let emb = as_emb(&ds);
        let m = OvrSvm::fit(&emb, 3, &SvmConfig::default()).unwrap();
        assert_eq!(m.accuracy(&emb).unwrap(), 1.0);
        assert!(m.support_ids().len() < emb.len());
        assert!(m.support_ids().is_subset(m.train_ids()));
    }

    #[test]
    fn two_class_models_mirror_each_other() {
        let ds = synth_blobs(2, 25, 2, 3.0, 9).unwrap();
        let emb = as_emb(&ds);
        let m = OvrSvm::fit(&emb, 2, &SvmConfig { tol: 1e-9, ..SvmConfig::default() }).unwrap();
        let (a, b) = (&m.models()[0], &m.models()[1]);
        for t in 0..emb.len() {
            assert!((a.alphas()[t] - b.alphas()[t]).abs() < 1e-6);
        }
        for r in emb.matrix().rows() {
            let fa = a.decision_value(r).unwrap();
            let fb = b.decision_value(r).unwrap();
            assert!((fa + fb).abs() < 1e-5);
        }
        let single = BinarySvm::fit(
            &emb.id_set(),
            emb.matrix().view(),
            &class_signs(emb.labels(), 1),
            &SvmConfig { tol: 1e-9, ..SvmConfig::default() },
        )
        .unwrap();
        for (r, p) in emb.matrix().rows().into_iter().zip(m.predict(emb.matrix().view()).unwrap()) {
            let f = single.decision_value(r).unwrap();
            if f.abs() > 1e-4 {
                assert_eq!(p, usize::from(f > 0.0));
            }
        }
    }

    #[test]
    fn missing_class_is_degenerate() {
        let ds = synth_blobs(3, 5, 2, 4.0, 1).unwrap();
        let emb = as_emb(&ds);
        assert!(matches!(OvrSvm::fit(&emb, 4, &SvmConfig::default()), Err(SvmError::DegenerateLabels)));
    }

    #[test]
    fn argmax_ignores_common_offset() {
        let ds = synth_blobs(4, 10, 3, 2.0, 2).unwrap();
        let emb = as_emb(&ds);
        let mut m = OvrSvm::fit(&emb, 4, &SvmConfig::default()).unwrap();
        let before = m.predict(emb.matrix().view()).unwrap();
        for model in &mut m.models {
            model.bias += 3.25;
        }
        assert_eq!(m.predict(emb.matrix().view()).unwrap(), before);
    }

    #[test]
    fn retrain_on_full_set_is_idempotent() {
        let ds = synth_blobs(3, 15, 2, 3.0, 6).unwrap();
        let emb = as_emb(&ds);
        let cfg = SvmConfig::default();
        let m = OvrSvm::fit(&emb, 3, &cfg).unwrap();
        let again = m.retrain_on(&emb, &cfg).unwrap();
        for (a, b) in m.models().iter().zip(again.models()) {
            assert_eq!(b.iterations(), 0);
            assert_eq!(a.alphas(), b.alphas());
            assert_eq!(a.bias(), b.bias());
        }
    }

    #[test]
    fn probabilities_lie_on_simplex() {
        let ds = synth_blobs(3, 40, 2, 14.0, 8).unwrap();
        let emb = as_emb(&ds);
        let m = OvrSvm::fit(&emb, 3, &SvmConfig::default()).unwrap();
        assert!(matches!(m.probabilities(emb.matrix().view()), Err(SvmError::MissingCalibration)));
        let m = m.fit_platt(&emb, 1.0, 0).unwrap();
        for p in m.platt().unwrap() {
            assert!(p.a < 0.0 && p.a.is_finite() && p.b.is_finite());
        }
        let probe = Array2::from_shape_fn((50, 2), |(i, j)| (i as f64 - 25.0) * 0.7 + j as f64);
        for q in [emb.matrix().view(), probe.view()] {
            let pr = m.probabilities(q).unwrap();
            for row in pr.rows() {
                assert!(row.iter().all(|&p| p >= 0.0));
                assert!((row.sum() - 1.0).abs() < 1e-12);
            }
        }
        let pr = m.probabilities(emb.matrix().view()).unwrap();
        for (row, &l) in pr.rows().into_iter().zip(emb.labels()) {
            assert!(row[l] >= 0.9);
        }
    }
}
