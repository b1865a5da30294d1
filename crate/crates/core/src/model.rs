//! Single-layer LSTM over monthly playa features with categorical entity
//! embeddings, per-month logits and full backpropagation through time.
//!
//! Gate blocks in `w_ih`, `w_hh`, `b_ih` and `b_hh` are packed in the order
//! `[input, forget, cell candidate, output]`, each `hidden_size` rows tall.
//! At every month the LSTM input is
//! `concat(numeric features, E_playa[id], E_huc8[huc], E_author[author])`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Split, YearMonth};
use crate::numeric::{bce_with_logits, dot, sigmoid, Matrix};
use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedDims {
    pub playa_id: usize,
    pub huc8: usize,
    pub author: usize,
}

impl Default for EmbedDims {
    fn default() -> Self {
        Self {
            playa_id: 16,
            huc8: 8,
            author: 4,
        }
    }
}

impl EmbedDims {
    pub fn total(&self) -> usize {
        self.playa_id + self.huc8 + self.author
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabSizes {
    pub playa_id: usize,
    pub huc8: usize,
    pub author: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub numeric_feature_count: usize,
    pub embed_dims: EmbedDims,
    pub vocab_sizes: VocabSizes,
}

impl ModelConfig {
    /// Hidden size 128 with embeddings 16/8/4.
    pub fn with_defaults(numeric_feature_count: usize, vocab_sizes: VocabSizes) -> Self {
        Self {
            hidden_size: 128,
            numeric_feature_count,
            embed_dims: EmbedDims::default(),
            vocab_sizes,
        }
    }

    pub fn input_width(&self) -> usize {
        self.numeric_feature_count + self.embed_dims.total()
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("hidden_size", self.hidden_size),
            ("numeric_feature_count", self.numeric_feature_count),
            ("embed_dims.playa_id", self.embed_dims.playa_id),
            ("embed_dims.huc8", self.embed_dims.huc8),
            ("embed_dims.author", self.embed_dims.author),
            ("vocab_sizes.playa_id", self.vocab_sizes.playa_id),
            ("vocab_sizes.huc8", self.vocab_sizes.huc8),
            ("vocab_sizes.author", self.vocab_sizes.author),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }
}

/// Learnable state. Field order is the sorted parameter-name order used for
/// flattening, checkpoints and optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParameters {
    pub b_hh: Matrix,
    pub b_ih: Matrix,
    pub emb_author: Matrix,
    pub emb_huc8: Matrix,
    pub emb_playa: Matrix,
    pub head_b: Matrix,
    pub head_w: Matrix,
    pub w_hh: Matrix,
    pub w_ih: Matrix,
}

pub const PARAMETER_NAMES: [&str; 9] = [
    "b_hh",
    "b_ih",
    "emb_author",
    "emb_huc8",
    "emb_playa",
    "head_b",
    "head_w",
    "w_hh",
    "w_ih",
];

impl ModelParameters {
    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.hidden_size;
        let v = config.vocab_sizes;
        let e = config.embed_dims;
        Self {
            b_hh: Matrix::zeros(1, 4 * h),
            b_ih: Matrix::zeros(1, 4 * h),
            emb_author: Matrix::zeros(v.author, e.author),
            emb_huc8: Matrix::zeros(v.huc8, e.huc8),
            emb_playa: Matrix::zeros(v.playa_id, e.playa_id),
            head_b: Matrix::zeros(1, 1),
            head_w: Matrix::zeros(1, h),
            w_hh: Matrix::zeros(4 * h, h),
            w_ih: Matrix::zeros(4 * h, config.input_width()),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            b_hh: z(&self.b_hh),
            b_ih: z(&self.b_ih),
            emb_author: z(&self.emb_author),
            emb_huc8: z(&self.emb_huc8),
            emb_playa: z(&self.emb_playa),
            head_b: z(&self.head_b),
            head_w: z(&self.head_w),
            w_hh: z(&self.w_hh),
            w_ih: z(&self.w_ih),
        }
    }

    pub fn tensors(&self) -> [(&'static str, &Matrix); 9] {
        [
            ("b_hh", &self.b_hh),
            ("b_ih", &self.b_ih),
            ("emb_author", &self.emb_author),
            ("emb_huc8", &self.emb_huc8),
            ("emb_playa", &self.emb_playa),
            ("head_b", &self.head_b),
            ("head_w", &self.head_w),
            ("w_hh", &self.w_hh),
            ("w_ih", &self.w_ih),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Matrix); 9] {
        [
            ("b_hh", &mut self.b_hh),
            ("b_ih", &mut self.b_ih),
            ("emb_author", &mut self.emb_author),
            ("emb_huc8", &mut self.emb_huc8),
            ("emb_playa", &mut self.emb_playa),
            ("head_b", &mut self.head_b),
            ("head_w", &mut self.head_w),
            ("w_hh", &mut self.w_hh),
            ("w_ih", &mut self.w_ih),
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|(_, m)| m.data().len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (_, m) in self.tensors() {
            out.extend_from_slice(m.data());
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::shape(
                "assign_flat",
                format!("{} parameters", self.len()),
                format!("{} values", flat.len()),
            ));
        }
        let mut offset = 0;
        for (_, m) in self.tensors_mut() {
            let n = m.data().len();
            m.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, m)| m.is_finite())
    }

    pub fn check_shapes(&self, config: &ModelConfig) -> Result<()> {
        let expected = Self::zeros(config);
        for ((name, have), (_, want)) in self.tensors().iter().zip(expected.tensors()) {
            if have.shape() != want.shape() {
                return Err(Error::shape(name, have.shape_str(), want.shape_str()));
            }
        }
        Ok(())
    }

    pub fn sum_squares(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|(_, m)| m.data().iter())
            .map(|v| v * v)
            .sum()
    }
}

/// One playa's full monthly record.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSample {
    pub playa_id: String,
    pub playa_index: usize,
    pub huc8_index: usize,
    pub author_index: usize,
    /// `T × numeric_feature_count`.
    pub features: Matrix,
    pub labels: Vec<u8>,
    pub split_mask: Vec<Split>,
    pub months: Vec<YearMonth>,
}

impl SequenceSample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of leading months up to and including the last train month.
    pub fn train_prefix_len(&self) -> usize {
        self.split_mask
            .iter()
            .rposition(|s| *s == Split::Train)
            .map_or(0, |i| i + 1)
    }

    pub fn count_in(&self, split: Split, window: usize) -> usize {
        self.split_mask[..window.min(self.len())]
            .iter()
            .filter(|s| **s == split)
            .count()
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        let t = self.len();
        if self.features.rows() != t || self.split_mask.len() != t || self.months.len() != t {
            return Err(Error::Data(format!(
                "playa {}: features {} rows, labels {}, split tags {}, months {}",
                self.playa_id,
                self.features.rows(),
                t,
                self.split_mask.len(),
                self.months.len()
            )));
        }
        if self.features.cols() != config.numeric_feature_count {
            return Err(Error::shape(
                "sequence features",
                format!("{} columns", self.features.cols()),
                format!("{} expected by the model", config.numeric_feature_count),
            ));
        }
        check_index("playa_id", self.playa_index, config.vocab_sizes.playa_id)?;
        check_index("huc8", self.huc8_index, config.vocab_sizes.huc8)?;
        check_index("author", self.author_index, config.vocab_sizes.author)?;
        Ok(())
    }
}

fn check_index(variable: &'static str, index: usize, bound: usize) -> Result<()> {
    if index >= bound {
        return Err(Error::IndexOutOfRange {
            variable,
            index,
            bound,
        });
    }
    Ok(())
}

/// Deterministic initialization:
/// recurrent, input and head weights ~ U(−1/√H, 1/√H), embeddings ~ U(−0.1, 0.1),
/// biases zero except the forget block of `b_ih`, which is 1.
///
/// Draws are taken in sorted parameter-name order, row-major within each tensor.
pub fn init_parameters(config: &ModelConfig, seed: u64) -> Result<ModelParameters> {
    config.validate()?;
    let mut params = ModelParameters::zeros(config);
    let mut rng = rng::stream(seed, rng::streams::INIT);
    let k = 1.0 / (config.hidden_size as f64).sqrt();
    let mut fill = |m: &mut Matrix, bound: f64| {
        use rand::Rng;
        for v in m.data_mut() {
            *v = -bound + 2.0 * bound * rng.random::<f64>();
        }
    };
    fill(&mut params.emb_author, 0.1);
    fill(&mut params.emb_huc8, 0.1);
    fill(&mut params.emb_playa, 0.1);
    fill(&mut params.head_w, k);
    fill(&mut params.w_hh, k);
    fill(&mut params.w_ih, k);
    let h = config.hidden_size;
    params.b_ih.data_mut()[h..2 * h].fill(1.0);
    Ok(params)
}

/// Copy of row `index` of an embedding table.
pub fn embed_lookup(table: &Matrix, variable: &'static str, index: usize) -> Result<Vec<f64>> {
    check_index(variable, index, table.rows())?;
    Ok(table.row(index).to_vec())
}

/// Activations of one cell step, kept for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct CellCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: &ModelParameters,
) -> Result<CellCache> {
    let h = params.w_hh.cols();
    if h_prev.len() != h || c_prev.len() != h {
        return Err(Error::shape(
            "lstm_cell_forward",
            format!("hidden size {h}"),
            format!("h_prev[{}], c_prev[{}]", h_prev.len(), c_prev.len()),
        ));
    }
    let mut z: Vec<f64> = params
        .b_ih
        .data()
        .iter()
        .zip(params.b_hh.data())
        .map(|(a, b)| a + b)
        .collect();
    params.w_ih.matvec_acc(x, &mut z)?;
    params.w_hh.matvec_acc(h_prev, &mut z)?;

    let i: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[2 * h..3 * h].iter().map(|v| v.tanh()).collect();
    let o: Vec<f64> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
    let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h_new: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();
    Ok(CellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        i,
        f,
        g,
        o,
        c,
        tanh_c,
        h: h_new,
    })
}

/// Forward activations over a processed window of one sequence.
#[derive(Clone, Debug)]
pub struct SequenceCache {
    pub playa_index: usize,
    pub huc8_index: usize,
    pub author_index: usize,
    pub numeric_width: usize,
    pub steps: Vec<CellCache>,
    pub logits: Vec<f64>,
}

impl SequenceCache {
    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|&l| sigmoid(l)).collect()
    }
}

/// Full-length forward pass with `h₀ = c₀ = 0`.
pub fn sequence_forward(
    sample: &SequenceSample,
    params: &ModelParameters,
    config: &ModelConfig,
) -> Result<SequenceCache> {
    sequence_forward_window(sample, params, config, sample.len())
}

/// Forward pass over the first `window` months only.
pub fn sequence_forward_window(
    sample: &SequenceSample,
    params: &ModelParameters,
    config: &ModelConfig,
    window: usize,
) -> Result<SequenceCache> {
    sample.validate(config)?;
    let window = window.min(sample.len());
    let emb_id = embed_lookup(&params.emb_playa, "playa_id", sample.playa_index)?;
    let emb_huc = embed_lookup(&params.emb_huc8, "huc8", sample.huc8_index)?;
    let emb_author = embed_lookup(&params.emb_author, "author", sample.author_index)?;

    let h = config.hidden_size;
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut steps = Vec::with_capacity(window);
    let mut logits = Vec::with_capacity(window);
    let mut x = Vec::with_capacity(config.input_width());
    for t in 0..window {
        x.clear();
        x.extend_from_slice(sample.features.row(t));
        x.extend_from_slice(&emb_id);
        x.extend_from_slice(&emb_huc);
        x.extend_from_slice(&emb_author);
        let step = lstm_cell_forward(&x, &h_prev, &c_prev, params)?;
        logits.push(dot(params.head_w.data(), &step.h) + params.head_b.data()[0]);
        h_prev.clone_from(&step.h);
        c_prev.clone_from(&step.c);
        steps.push(step);
    }
    Ok(SequenceCache {
        playa_index: sample.playa_index,
        huc8_index: sample.huc8_index,
        author_index: sample.author_index,
        numeric_width: config.numeric_feature_count,
        steps,
        logits,
    })
}

/// Gradients from one sequence. LSTM and head gradients are dense; each
/// embedding table contributes a single row, scatter-added on reduction.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleGradients {
    pub b_hh: Matrix,
    pub b_ih: Matrix,
    pub head_b: Matrix,
    pub head_w: Matrix,
    pub w_hh: Matrix,
    pub w_ih: Matrix,
    pub emb_playa: (usize, Vec<f64>),
    pub emb_huc8: (usize, Vec<f64>),
    pub emb_author: (usize, Vec<f64>),
}

impl SampleGradients {
    /// Add into a dense, parameter-shaped gradient accumulator.
    pub fn accumulate_into(&self, total: &mut ModelParameters) -> Result<()> {
        total.b_hh.add_assign(&self.b_hh)?;
        total.b_ih.add_assign(&self.b_ih)?;
        total.head_b.add_assign(&self.head_b)?;
        total.head_w.add_assign(&self.head_w)?;
        total.w_hh.add_assign(&self.w_hh)?;
        total.w_ih.add_assign(&self.w_ih)?;
        let rows = [
            (&mut total.emb_playa, &self.emb_playa),
            (&mut total.emb_huc8, &self.emb_huc8),
            (&mut total.emb_author, &self.emb_author),
        ];
        for (table, (index, grad)) in rows {
            for (t, g) in table.row_mut(*index).iter_mut().zip(grad) {
                *t += g;
            }
        }
        Ok(())
    }

    pub fn to_dense(&self, like: &ModelParameters) -> Result<ModelParameters> {
        let mut dense = like.zeros_like();
        self.accumulate_into(&mut dense)?;
        Ok(dense)
    }
}

/// Mean BCE over the timesteps of the processed window tagged `loss_split`,
/// with gradients for every parameter.
pub fn sequence_backward(
    cache: &SequenceCache,
    labels: &[u8],
    split_mask: &[Split],
    loss_split: Split,
    params: &ModelParameters,
) -> Result<(f64, SampleGradients)> {
    let count = cache
        .logits
        .iter()
        .zip(split_mask)
        .filter(|(_, s)| **s == loss_split)
        .count();
    if count == 0 {
        return Err(Error::EmptyLossWindow(loss_split.to_string()));
    }
    let scale = 1.0 / count as f64;
    let (sum, grads) = backward_scaled(cache, labels, split_mask, loss_split, params, scale)?;
    Ok((sum * scale, grads))
}

/// BPTT for `scale · Σ BCE` over masked steps; returns the unscaled loss sum.
pub(crate) fn backward_scaled(
    cache: &SequenceCache,
    labels: &[u8],
    split_mask: &[Split],
    loss_split: Split,
    params: &ModelParameters,
    scale: f64,
) -> Result<(f64, SampleGradients)> {
    let window = cache.steps.len();
    if labels.len() < window || split_mask.len() < window {
        return Err(Error::shape(
            "sequence_backward",
            format!("window {window}"),
            format!("{} labels, {} split tags", labels.len(), split_mask.len()),
        ));
    }
    let h = params.w_hh.cols();
    let nw = cache.numeric_width;
    let (d_id, d_huc, d_auth) = (
        params.emb_playa.cols(),
        params.emb_huc8.cols(),
        params.emb_author.cols(),
    );
    let mut grads = SampleGradients {
        b_hh: Matrix::zeros(1, 4 * h),
        b_ih: Matrix::zeros(1, 4 * h),
        head_b: Matrix::zeros(1, 1),
        head_w: Matrix::zeros(1, h),
        w_hh: Matrix::zeros(4 * h, h),
        w_ih: Matrix::zeros(4 * h, params.w_ih.cols()),
        emb_playa: (cache.playa_index, vec![0.0; d_id]),
        emb_huc8: (cache.huc8_index, vec![0.0; d_huc]),
        emb_author: (cache.author_index, vec![0.0; d_auth]),
    };

    let mut loss_sum = 0.0;
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let mut dx = vec![0.0; params.w_ih.cols()];
    let head_w = params.head_w.data();

    for t in (0..window).rev() {
        let step = &cache.steps[t];
        let mut dh = std::mem::take(&mut dh_next);
        if split_mask[t] == loss_split {
            let y = f64::from(labels[t]);
            let logit = cache.logits[t];
            loss_sum += bce_with_logits(logit, y);
            let dlogit = scale * (sigmoid(logit) - y);
            grads.head_b.data_mut()[0] += dlogit;
            for k in 0..h {
                grads.head_w.data_mut()[k] += dlogit * step.h[k];
                dh[k] += dlogit * head_w[k];
            }
        }
        for k in 0..h {
            let dc = dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]) + dc_next[k];
            let d_o = dh[k] * step.tanh_c[k];
            let d_i = dc * step.g[k];
            let d_g = dc * step.i[k];
            let d_f = dc * step.c_prev[k];
            dc_next[k] = dc * step.f[k];
            dz[k] = d_i * step.i[k] * (1.0 - step.i[k]);
            dz[h + k] = d_f * step.f[k] * (1.0 - step.f[k]);
            dz[2 * h + k] = d_g * (1.0 - step.g[k] * step.g[k]);
            dz[3 * h + k] = d_o * step.o[k] * (1.0 - step.o[k]);
        }
        for (b, d) in grads.b_ih.data_mut().iter_mut().zip(&dz) {
            *b += d;
        }
        for (b, d) in grads.b_hh.data_mut().iter_mut().zip(&dz) {
            *b += d;
        }
        grads.w_ih.add_outer(&dz, &step.x)?;
        grads.w_hh.add_outer(&dz, &step.h_prev)?;

        dx.fill(0.0);
        params.w_ih.matvec_t_acc(&dz, &mut dx)?;
        let emb = &dx[nw..];
        for (acc, d) in grads.emb_playa.1.iter_mut().zip(&emb[..d_id]) {
            *acc += d;
        }
        for (acc, d) in grads.emb_huc8.1.iter_mut().zip(&emb[d_id..d_id + d_huc]) {
            *acc += d;
        }
        for (acc, d) in grads.emb_author.1.iter_mut().zip(&emb[d_id + d_huc..]) {
            *acc += d;
        }

        dh_next = vec![0.0; h];
        params.w_hh.matvec_t_acc(&dz, &mut dh_next)?;
    }
    Ok((loss_sum, grads))
}

/// Which months of each sequence are run through the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    /// Every month.
    Full,
    /// Months up to and including the last train-tagged month.
    TrainPrefix,
}

impl Window {
    pub fn length(self, sample: &SequenceSample) -> usize {
        match self {
            Window::Full => sample.len(),
            Window::TrainPrefix => sample.train_prefix_len(),
        }
    }
}

/// Loss and gradient of a mini-batch: the mean BCE over every playa-month in
/// `loss_split` across all samples. Samples are processed in parallel and
/// reduced in input order, so the result does not depend on thread count.
pub fn batch_loss_and_gradients(
    samples: &[&SequenceSample],
    params: &ModelParameters,
    config: &ModelConfig,
    loss_split: Split,
    window: Window,
) -> Result<(f64, ModelParameters)> {
    let total: usize = samples
        .iter()
        .map(|s| s.count_in(loss_split, window.length(s)))
        .sum();
    if total == 0 {
        return Err(Error::EmptyLossWindow(loss_split.to_string()));
    }
    let scale = 1.0 / total as f64;
    let per_sample: Vec<Result<(f64, SampleGradients)>> = samples
        .par_iter()
        .map(|s| {
            let cache = sequence_forward_window(s, params, config, window.length(s))?;
            backward_scaled(&cache, &s.labels, &s.split_mask, loss_split, params, scale)
        })
        .collect();
    let mut grads = params.zeros_like();
    let mut loss_sum = 0.0;
    for r in per_sample {
        let (l, g) = r?;
        loss_sum += l;
        g.accumulate_into(&mut grads)?;
    }
    Ok((loss_sum * scale, grads))
}

/// Mean BCE over all `loss_split` months of the given samples, full-sequence
/// forward only. Returns `(mean loss, number of scored months)`.
pub fn evaluate_loss(
    samples: &[SequenceSample],
    params: &ModelParameters,
    config: &ModelConfig,
    loss_split: Split,
) -> Result<(f64, usize)> {
    let per_sample: Vec<Result<(f64, usize)>> = samples
        .par_iter()
        .map(|s| {
            let cache = sequence_forward(s, params, config)?;
            let mut sum = 0.0;
            let mut n = 0;
            for ((&logit, &y), split) in cache.logits.iter().zip(&s.labels).zip(&s.split_mask) {
                if *split == loss_split {
                    sum += bce_with_logits(logit, f64::from(y));
                    n += 1;
                }
            }
            Ok((sum, n))
        })
        .collect();
    let mut sum = 0.0;
    let mut n = 0;
    for r in per_sample {
        let (s, c) = r?;
        sum += s;
        n += c;
    }
    if n == 0 {
        return Err(Error::EmptyLossWindow(loss_split.to_string()));
    }
    Ok((sum / n as f64, n))
}

/// Full-sequence probabilities for every sample, in input order.
pub fn predict_probabilities(
    samples: &[SequenceSample],
    params: &ModelParameters,
    config: &ModelConfig,
) -> Result<Vec<Vec<f64>>> {
    samples
        .par_iter()
        .map(|s| sequence_forward(s, params, config).map(|c| c.probabilities()))
        .collect()
}
