use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::arch::{ArchSpec, LayerSpec, Shape};
use super::NnError;
use crate::data::{IdSet, LabeledDataset, SampleId};

/// Weights and biases of a layer that has parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// (outputs, inputs); for convolutions inputs = channels * 25.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Per-layer gradients, aligned with the network's layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Option<Dense>>);

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.0
            .iter()
            .flatten()
            .flat_map(|d| d.w.iter().chain(d.b.iter()).copied())
            .collect()
    }
}

/// SGD hyperparameters for [`FeatureExtractor::train`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 0.01,
            batch: 64,
            momentum: 0.9,
        }
    }
}

/// A trainable network whose last Linear+Softmax pair is the temporary
/// prediction layer; everything before it is the feature extractor.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    arch: ArchSpec,
    params: Vec<Option<Dense>>,
    train_ids: Option<IdSet>,
    seed: u64,
}

/// Embeddings of a dataset, rows aligned with its IDs.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<SampleId>,
    labels: Vec<usize>,
    matrix: Array2<f64>,
    fingerprint: String,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<SampleId>, labels: Vec<usize>, matrix: Array2<f64>, fingerprint: String) -> Result<Self, NnError> {
        if ids.len() != matrix.nrows() || labels.len() != ids.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} ids, {} labels, {} embedding rows",
                ids.len(),
                labels.len(),
                matrix.nrows()
            )));
        }
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(NnError::ShapeMismatch("embedding ids must be strictly ascending".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteEmbedding);
        }
        Ok(Self { ids, labels, matrix, fingerprint })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn id_set(&self) -> IdSet {
        IdSet::from_sorted(self.ids.clone()).expect("ascending by construction")
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Hash of the producing feature extractor's weights.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn row_of(&self, id: SampleId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    /// Rows whose IDs are in `keep`.
    pub fn subset(&self, keep: &IdSet) -> Result<EmbeddingSet, NnError> {
        let rows = keep
            .iter()
            .map(|id| self.row_of(id).ok_or(NnError::UnknownId(id)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EmbeddingSet {
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            matrix: self.matrix.select(Axis(0), &rows),
            fingerprint: self.fingerprint.clone(),
        })
    }
}

const EMBED_CHUNK: usize = 512;

impl FeatureExtractor {
    /// Fan-in scaled uniform initialisation, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`
    /// weights and zero biases; deterministic in `seed`.
    pub fn init(arch: ArchSpec, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = arch
            .param_shapes()?
            .into_iter()
            .map(|shape| {
                shape.map(|((rows, cols), nb)| {
                    let bound = (6.0 / cols as f64).sqrt();
                    let w = Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound));
                    Dense { w, b: Array1::zeros(nb) }
                })
            })
            .collect();
        Ok(Self {
            arch,
            params,
            train_ids: None,
            seed,
        })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// IDs of the samples the extractor was trained on (`None` if untrained).
    pub fn train_ids(&self) -> Option<&IdSet> {
        self.train_ids.as_ref()
    }

    pub fn params(&self) -> &[Option<Dense>] {
        &self.params
    }

    pub(crate) fn from_parts(arch: ArchSpec, params: Vec<Option<Dense>>, train_ids: Option<IdSet>, seed: u64) -> Result<Self, NnError> {
        let shapes = arch.param_shapes()?;
        if shapes.len() != params.len() {
            return Err(NnError::ShapeMismatch("layer count differs from architecture".into()));
        }
        for (shape, p) in shapes.iter().zip(&params) {
            let ok = match (shape, p) {
                (None, None) => true,
                (Some(((r, c), nb)), Some(d)) => d.w.dim() == (*r, *c) && d.b.len() == *nb,
                _ => false,
            };
            if !ok {
                return Err(NnError::ShapeMismatch("weight shapes do not match architecture".into()));
            }
        }
        Ok(Self { arch, params, train_ids, seed })
    }

    /// All parameters flattened layer by layer (weights row-major, then biases).
    pub fn parameters(&self) -> Vec<f64> {
        self.params
            .iter()
            .flatten()
            .flat_map(|d| d.w.iter().chain(d.b.iter()).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<(), NnError> {
        let total: usize = self.params.iter().flatten().map(|d| d.w.len() + d.b.len()).sum();
        if flat.len() != total {
            return Err(NnError::ShapeMismatch(format!("{} values for {total} parameters", flat.len())));
        }
        let mut it = flat.iter().copied();
        for d in self.params.iter_mut().flatten() {
            d.w.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
            d.b.iter_mut().for_each(|v| *v = it.next().expect("length checked"));
        }
        Ok(())
    }

    /// Mutable access to the prediction layer (the final Linear).
    pub fn prediction_layer_mut(&mut self) -> &mut Dense {
        let idx = self.arch.layers.len() - 2;
        self.params[idx].as_mut().expect("architecture ends in Linear")
    }

    /// SHA-256 over architecture and weight bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.arch).expect("arch serialises"));
        for d in self.params.iter().flatten() {
            for v in d.w.iter().chain(d.b.iter()) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<(), NnError> {
        if x.ncols() != self.arch.input_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "input has {} features, architecture expects {}",
                x.ncols(),
                self.arch.input_dim()
            )));
        }
        Ok(())
    }

    /// Runs layers `[0, upto)`; returns the output and, if `keep`, each layer's input.
    fn forward(&self, x: ArrayView2<f64>, upto: usize, keep: bool) -> (Array2<f64>, Vec<Array2<f64>>) {
        let shapes = self.arch.shapes().expect("validated at construction");
        let mut cache = Vec::new();
        let mut a = x.to_owned();
        for (i, layer) in self.arch.layers[..upto].iter().enumerate() {
            let next = match *layer {
                LayerSpec::Conv5x5 { padding, .. } => {
                    let d = self.params[i].as_ref().expect("conv has params");
                    conv_forward(&a, d, shapes[i], shapes[i + 1], padding)
                }
                LayerSpec::AvgPool2x2 => pool_forward(&a, shapes[i], shapes[i + 1]),
                LayerSpec::Relu => a.mapv(|v| v.max(0.0)),
                LayerSpec::Linear { .. } => {
                    let d = self.params[i].as_ref().expect("linear has params");
                    let mut out = a.dot(&d.w.t());
                    out += &d.b;
                    out
                }
                LayerSpec::Softmax => softmax_rows(&a),
            };
            if keep {
                cache.push(std::mem::replace(&mut a, next));
            } else {
                a = next;
            }
        }
        (a, cache)
    }

    /// Mean softmax cross-entropy of the full network on a batch, with analytic
    /// gradients for every parameterised layer.
    pub fn loss_and_grads(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Gradients), NnError> {
        self.check_input(&x)?;
        if x.nrows() == 0 || x.nrows() != labels.len() {
            return Err(NnError::ShapeMismatch(format!("{} rows, {} labels", x.nrows(), labels.len())));
        }
        let k = self.arch.num_outputs()?;
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(NnError::ShapeMismatch(format!("label {bad} but network has {k} outputs")));
        }
        let n_layers = self.arch.layers.len();
        // logits: everything except the trailing Softmax, which is folded into the loss
        let (logits, cache) = self.forward(x, n_layers - 1, true);
        let bsz = labels.len() as f64;
        let mut delta = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for (r, (row, &y)) in logits.rows().into_iter().zip(labels).enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            loss += lse - row[y];
            for (c, v) in row.iter().enumerate() {
                delta[[r, c]] = (v - lse).exp() / bsz;
            }
            delta[[r, y]] -= 1.0 / bsz;
        }
        loss /= bsz;

        let shapes = self.arch.shapes()?;
        let mut grads: Vec<Option<Dense>> = vec![None; n_layers];
        for i in (0..n_layers - 1).rev() {
            let input = &cache[i];
            delta = match self.arch.layers[i] {
                LayerSpec::Linear { .. } => {
                    let d = self.params[i].as_ref().expect("linear has params");
                    grads[i] = Some(Dense {
                        w: delta.t().dot(input),
                        b: delta.sum_axis(Axis(0)),
                    });
                    if i == 0 {
                        break;
                    }
                    delta.dot(&d.w)
                }
                LayerSpec::Relu => {
                    let mut g = delta;
                    g.zip_mut_with(input, |g, &z| {
                        if z <= 0.0 {
                            *g = 0.0
                        }
                    });
                    g
                }
                LayerSpec::AvgPool2x2 => pool_backward(&delta, shapes[i], shapes[i + 1]),
                LayerSpec::Conv5x5 { padding, .. } => {
                    let d = self.params[i].as_ref().expect("conv has params");
                    let (dx, dw, db) = conv_backward(&delta, input, d, shapes[i], shapes[i + 1], padding, i > 0);
                    grads[i] = Some(Dense { w: dw, b: db });
                    dx
                }
                LayerSpec::Softmax => unreachable!("softmax only at the end"),
            };
        }
        Ok((loss, Gradients(grads)))
    }

    /// Trains the full network (extractor + prediction layer) with SGD and
    /// momentum on `ds`; the returned extractor records `ds`'s IDs.
    pub fn train(&self, ds: &LabeledDataset, cfg: &TrainConfig, seed: u64) -> Result<FeatureExtractor, NnError> {
        if self.train_ids.is_some() {
            return Err(NnError::AlreadyTrained);
        }
        if ds.is_empty() {
            return Err(NnError::EmptyDataset);
        }
        if cfg.batch == 0 || !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.momentum) {
            return Err(NnError::InvalidConfig(format!("{cfg:?}")));
        }
        self.check_input(&ds.features().view())?;
        let mut fe = self.clone();
        let mut velocity: Vec<Option<Dense>> = fe
            .params
            .iter()
            .map(|p| p.as_ref().map(|d| Dense { w: Array2::zeros(d.w.raw_dim()), b: Array1::zeros(d.b.len()) }))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..ds.len()).collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch) {
                let xb = ds.features().select(Axis(0), chunk);
                let yb: Vec<usize> = chunk.iter().map(|&r| ds.labels()[r]).collect();
                let (loss, grads) = fe.loss_and_grads(xb.view(), &yb)?;
                if !loss.is_finite() {
                    return Err(NnError::DivergedLoss { epoch, loss });
                }
                for ((p, v), g) in fe.params.iter_mut().zip(velocity.iter_mut()).zip(grads.0) {
                    if let (Some(p), Some(v), Some(g)) = (p.as_mut(), v.as_mut(), g) {
                        v.w.zip_mut_with(&g.w, |v, &g| *v = cfg.momentum * *v + g);
                        v.b.zip_mut_with(&g.b, |v, &g| *v = cfg.momentum * *v + g);
                        p.w.scaled_add(-cfg.lr, &v.w);
                        p.b.scaled_add(-cfg.lr, &v.b);
                    }
                }
            }
        }
        fe.train_ids = Some(ds.id_set());
        Ok(fe)
    }

    /// Softmax outputs of the full network (extractor + prediction layer).
    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(&x)?;
        Ok(self.forward(x, self.arch.layers.len(), false).0)
    }

    /// Fraction of `ds` the full network classifies correctly.
    pub fn accuracy(&self, ds: &LabeledDataset) -> Result<f64, NnError> {
        if ds.is_empty() {
            return Ok(0.0);
        }
        let p = self.predict_proba(ds.features().view())?;
        let hits = p
            .rows()
            .into_iter()
            .zip(ds.labels())
            .filter(|(row, &y)| argmax(row.iter().copied()) == y)
            .count();
        Ok(hits as f64 / ds.len() as f64)
    }

    /// Feature embeddings: forward pass without the prediction layer.
    pub fn embed(&self, ds: &LabeledDataset) -> Result<EmbeddingSet, NnError> {
        self.check_input(&ds.features().view())?;
        let upto = self.arch.layers.len() - 2;
        let dim = self.arch.embedding_dim()?;
        let mut matrix = Array2::zeros((ds.len(), dim));
        let mut start = 0;
        while start < ds.len() {
            let end = (start + EMBED_CHUNK).min(ds.len());
            let (out, _) = self.forward(ds.features().slice(s![start..end, ..]), upto, false);
            matrix.slice_mut(s![start..end, ..]).assign(&out);
            start = end;
        }
        EmbeddingSet::new(ds.ids().to_vec(), ds.labels().to_vec(), matrix, self.fingerprint())
    }
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

fn image_dims(s: Shape) -> (usize, usize, usize) {
    match s {
        Shape::Image { channels, height, width } => (channels, height, width),
        Shape::Flat(_) => unreachable!("spatial layer on flat input (rejected by ArchSpec)"),
    }
}

/// Unrolls 5x5 patches: rows index (channel, ky, kx), columns (sample, oy, ox).
fn im2col(x: &Array2<f64>, input: Shape, output: Shape, padding: usize) -> Array2<f64> {
    let (c, h, w) = image_dims(input);
    let (_, oh, ow) = image_dims(output);
    let per = oh * ow;
    let mut col = Array2::zeros((c * 25, x.nrows() * per));
    for (s, img) in x.rows().into_iter().enumerate() {
        for ch in 0..c {
            for ky in 0..5 {
                for kx in 0..5 {
                    let r = ch * 25 + ky * 5 + kx;
                    for oy in 0..oh {
                        let iy = oy + ky;
                        if iy < padding || iy - padding >= h {
                            continue;
                        }
                        let iy = iy - padding;
                        for ox in 0..ow {
                            let ix = ox + kx;
                            if ix < padding || ix - padding >= w {
                                continue;
                            }
                            col[[r, s * per + oy * ow + ox]] = img[ch * h * w + iy * w + ix - padding];
                        }
                    }
                }
            }
        }
    }
    col
}

fn conv_forward(x: &Array2<f64>, d: &Dense, input: Shape, output: Shape, padding: usize) -> Array2<f64> {
    let (f, oh, ow) = image_dims(output);
    let per = oh * ow;
    let col = im2col(x, input, output, padding);
    let y = d.w.dot(&col); // (filters, batch * per)
    let mut out = Array2::zeros((x.nrows(), f * per));
    for s in 0..x.nrows() {
        for k in 0..f {
            for p in 0..per {
                out[[s, k * per + p]] = y[[k, s * per + p]] + d.b[k];
            }
        }
    }
    out
}

#[allow(clippy::type_complexity)]
fn conv_backward(
    delta: &Array2<f64>,
    x: &Array2<f64>,
    d: &Dense,
    input: Shape,
    output: Shape,
    padding: usize,
    need_dx: bool,
) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let (c, h, w) = image_dims(input);
    let (f, oh, ow) = image_dims(output);
    let per = oh * ow;
    let bsz = x.nrows();
    let mut dy = Array2::zeros((f, bsz * per));
    for s in 0..bsz {
        for k in 0..f {
            for p in 0..per {
                dy[[k, s * per + p]] = delta[[s, k * per + p]];
            }
        }
    }
    let col = im2col(x, input, output, padding);
    let dw = dy.dot(&col.t());
    let db = dy.sum_axis(Axis(1));
    let mut dx = Array2::zeros((bsz, c * h * w));
    if need_dx {
        let dcol = d.w.t().dot(&dy);
        for s in 0..bsz {
            for ch in 0..c {
                for ky in 0..5 {
                    for kx in 0..5 {
                        let r = ch * 25 + ky * 5 + kx;
                        for oy in 0..oh {
                            let iy = oy + ky;
                            if iy < padding || iy - padding >= h {
                                continue;
                            }
                            let iy = iy - padding;
                            for ox in 0..ow {
                                let ix = ox + kx;
                                if ix < padding || ix - padding >= w {
                                    continue;
                                }
                                dx[[s, ch * h * w + iy * w + ix - padding]] += dcol[[r, s * per + oy * ow + ox]];
                            }
                        }
                    }
                }
            }
        }
    }
    (dx, dw, db)
}

fn pool_forward(x: &Array2<f64>, input: Shape, output: Shape) -> Array2<f64> {
    let (c, h, w) = image_dims(input);
    let (_, oh, ow) = image_dims(output);
    let mut out = Array2::zeros((x.nrows(), c * oh * ow));
    for (s, img) in x.rows().into_iter().enumerate() {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = ch * h * w + 2 * oy * w + 2 * ox;
                    let sum = img[base] + img[base + 1] + img[base + w] + img[base + w + 1];
                    out[[s, ch * oh * ow + oy * ow + ox]] = 0.25 * sum;
                }
            }
        }
    }
    out
}

/// Each output gradient is spread evenly over its 2x2 window.
fn pool_backward(delta: &Array2<f64>, input: Shape, output: Shape) -> Array2<f64> {
    let (c, h, w) = image_dims(input);
    let (_, oh, ow) = image_dims(output);
    let mut dx = Array2::zeros((delta.nrows(), c * h * w));
    for s in 0..delta.nrows() {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = 0.25 * delta[[s, ch * oh * ow + oy * ow + ox]];
                    let base = ch * h * w + 2 * oy * w + 2 * ox;
                    for off in [0, 1, w, w + 1] {
                        dx[[s, base + off]] += g;
                    }
                }
            }
        }
    }
    dx
}
