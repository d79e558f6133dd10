//! Bidirectional LSTM text classifier with optional additive attention
//! pooling, trained with Adam on mean sparse categorical cross-entropy.
//!
//! Shapes (row-major, `D` embedding, `H` hidden units per direction, `A`
//! attention units, `k` classes):
//!
//! * `embedding`: `|V| x D`, row 0 (PAD) zero
//! * per direction: `w_input` `D x 4H`, `w_hidden` `H x 4H`, `bias` `4H`,
//!   gate blocks ordered i, f, g, o
//! * `attention.proj` `2H x A`, `attention.proj_bias` `A`, `attention.context` `A`
//! * `output.w` `2H x k`, `output.bias` `k`
//!
//! Gradients are computed by hand (backpropagation through time) and are
//! checked against central finite differences in the test suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval;
use crate::features::{EmbeddingTable, IdSequence};
use crate::preprocess::PAD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Lstm,
    LstmAttn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub embed: usize,
    pub hidden: usize,
    pub attention: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Dims {
            embed: 100,
            hidden: 100,
            attention: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub w_input: Vec<f64>,
    pub w_hidden: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub proj: Vec<f64>,
    pub proj_bias: Vec<f64>,
    pub context: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralModel {
    pub variant: Variant,
    pub dims: Dims,
    pub vocab_size: usize,
    pub n_classes: usize,
    pub dropout_rate: f64,
    pub embedding: Vec<f64>,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    pub attention: Option<AttentionParams>,
    pub output_w: Vec<f64>,
    pub output_bias: Vec<f64>,
}

fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..fan_in * fan_out).map(|_| rng.random_range(-limit..limit)).collect()
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl LstmParams {
    fn init(seed: u64, stream_base: u64, d: usize, h: usize) -> Self {
        let mut bias = vec![0.0; 4 * h];
        bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        LstmParams {
            w_input: glorot(&mut stream(seed, stream_base), d, 4 * h),
            w_hidden: glorot(&mut stream(seed, stream_base + 1), h, 4 * h),
            bias,
        }
    }

    fn zeros_like(&self) -> Self {
        LstmParams {
            w_input: vec![0.0; self.w_input.len()],
            w_hidden: vec![0.0; self.w_hidden.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }
}

impl NeuralModel {
    /// Glorot-uniform weights, zero biases except the forget gates (1.0).
    /// A pretrained table replaces the embedding initialization and stays
    /// trainable.
    pub fn init(
        vocab_size: usize,
        n_classes: usize,
        seed: u64,
        pretrained: Option<&EmbeddingTable>,
        variant: Variant,
        dims: Dims,
    ) -> Result<Self> {
        if vocab_size < 2 {
            return Err(Error::invalid("vocabulary must hold at least PAD and UNK"));
        }
        if n_classes < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        let (d, h, a) = (dims.embed, dims.hidden, dims.attention);
        let embedding = match pretrained {
            Some(t) => {
                if t.dim != d {
                    return Err(Error::Dimension {
                        expected: d,
                        found: t.dim,
                    });
                }
                if t.rows() != vocab_size {
                    return Err(Error::Dimension {
                        expected: vocab_size,
                        found: t.rows(),
                    });
                }
                t.data.clone()
            }
            None => glorot(&mut stream(seed, 0), vocab_size, d),
        };
        let mut model = NeuralModel {
            variant,
            dims,
            vocab_size,
            n_classes,
            dropout_rate: 0.1,
            embedding,
            lstm_fwd: LstmParams::init(seed, 1, d, h),
            lstm_bwd: LstmParams::init(seed, 3, d, h),
            attention: match variant {
                Variant::Lstm => None,
                Variant::LstmAttn => Some(AttentionParams {
                    proj: glorot(&mut stream(seed, 5), 2 * h, a),
                    proj_bias: vec![0.0; a],
                    context: glorot(&mut stream(seed, 6), a, 1),
                }),
            },
            output_w: glorot(&mut stream(seed, 7), 2 * h, n_classes),
            output_bias: vec![0.0; n_classes],
        };
        model.embedding[..d].iter_mut().for_each(|v| *v = 0.0);
        Ok(model)
    }

    pub fn zeros_like(&self) -> Self {
        NeuralModel {
            embedding: vec![0.0; self.embedding.len()],
            lstm_fwd: self.lstm_fwd.zeros_like(),
            lstm_bwd: self.lstm_bwd.zeros_like(),
            attention: self.attention.as_ref().map(|a| AttentionParams {
                proj: vec![0.0; a.proj.len()],
                proj_bias: vec![0.0; a.proj_bias.len()],
                context: vec![0.0; a.context.len()],
            }),
            output_w: vec![0.0; self.output_w.len()],
            output_bias: vec![0.0; self.output_bias.len()],
            ..self.clone()
        }
    }

    /// Named parameter tensors with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        let (d, h, a, k) = (self.dims.embed, self.dims.hidden, self.dims.attention, self.n_classes);
        let mut out: Vec<(&'static str, Vec<usize>, &[f64])> = vec![
            ("embedding", vec![self.vocab_size, d], &self.embedding),
            ("lstm_fwd.w_input", vec![d, 4 * h], &self.lstm_fwd.w_input),
            ("lstm_fwd.w_hidden", vec![h, 4 * h], &self.lstm_fwd.w_hidden),
            ("lstm_fwd.bias", vec![4 * h], &self.lstm_fwd.bias),
            ("lstm_bwd.w_input", vec![d, 4 * h], &self.lstm_bwd.w_input),
            ("lstm_bwd.w_hidden", vec![h, 4 * h], &self.lstm_bwd.w_hidden),
            ("lstm_bwd.bias", vec![4 * h], &self.lstm_bwd.bias),
        ];
        if let Some(att) = &self.attention {
            out.push(("attention.proj", vec![2 * h, a], &att.proj));
            out.push(("attention.proj_bias", vec![a], &att.proj_bias));
            out.push(("attention.context", vec![a], &att.context));
        }
        out.push(("output.w", vec![2 * h, k], &self.output_w));
        out.push(("output.bias", vec![k], &self.output_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<f64>)> {
        let mut out: Vec<(&'static str, &mut Vec<f64>)> = vec![
            ("embedding", &mut self.embedding),
            ("lstm_fwd.w_input", &mut self.lstm_fwd.w_input),
            ("lstm_fwd.w_hidden", &mut self.lstm_fwd.w_hidden),
            ("lstm_fwd.bias", &mut self.lstm_fwd.bias),
            ("lstm_bwd.w_input", &mut self.lstm_bwd.w_input),
            ("lstm_bwd.w_hidden", &mut self.lstm_bwd.w_hidden),
            ("lstm_bwd.bias", &mut self.lstm_bwd.bias),
        ];
        if let Some(att) = &mut self.attention {
            out.push(("attention.proj", &mut att.proj));
            out.push(("attention.proj_bias", &mut att.proj_bias));
            out.push(("attention.context", &mut att.context));
        }
        out.push(("output.w", &mut self.output_w));
        out.push(("output.bias", &mut self.output_bias));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, _, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, t)| t.iter().all(|v| v.is_finite()))
    }

    fn add_assign(&mut self, other: &NeuralModel) {
        for ((_, dst), (_, _, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Eight independent partial sums, so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// States of one direction, indexed by sequence position.
#[derive(Debug, Clone)]
struct DirCache {
    /// Post-activation gates i, f, g, o per position (`L x 4H`).
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ExampleCache {
    len: usize,
    max_len: usize,
    fwd: DirCache,
    bwd: DirCache,
    /// Concatenated `[h_fwd ; h_bwd]` per position (`L x 2H`).
    hcat: Vec<f64>,
    /// tanh projections (`L x A`) and attention weights (`L`).
    u: Vec<f64>,
    alpha: Vec<f64>,
    mask: Option<Vec<f64>>,
    pooled_drop: Vec<f64>,
    probs: Vec<f64>,
}

/// Forward pass state kept for `backward`.
#[derive(Debug, Clone)]
pub struct BatchCache {
    examples: Vec<ExampleCache>,
}

impl BatchCache {
    /// Attention weights per example over all `max_len` positions, with
    /// padding positions at exactly zero. `None` for the plain LSTM variant.
    pub fn attention_weights(&self) -> Option<Vec<Vec<f64>>> {
        if self.examples.first().is_some_and(|e| e.alpha.is_empty()) {
            return None;
        }
        Some(
            self.examples
                .iter()
                .map(|e| {
                    let mut w = e.alpha.clone();
                    w.resize(e.max_len, 0.0);
                    w
                })
                .collect(),
        )
    }
}

impl NeuralModel {
    fn run_direction(&self, params: &LstmParams, ids: &[u32], reverse: bool) -> DirCache {
        let (d, h) = (self.dims.embed, self.dims.hidden);
        let len = ids.len();
        let mut cache = DirCache {
            gates: vec![0.0; len * 4 * h],
            c: vec![0.0; len * h],
            tanh_c: vec![0.0; len * h],
            h: vec![0.0; len * h],
        };
        let mut z = vec![0.0; 4 * h];
        let zeros = vec![0.0; h];
        for step in 0..len {
            let t = if reverse { len - 1 - step } else { step };
            let prev = if step == 0 {
                None
            } else if reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            z.copy_from_slice(&params.bias);
            let x = &self.embedding[ids[t] as usize * d..(ids[t] as usize + 1) * d];
            for (j, &xj) in x.iter().enumerate() {
                axpy(xj, &params.w_input[j * 4 * h..(j + 1) * 4 * h], &mut z);
            }
            let (h_prev, c_prev) = match prev {
                Some(p) => (&cache.h[p * h..(p + 1) * h], &cache.c[p * h..(p + 1) * h]),
                None => (&zeros[..], &zeros[..]),
            };
            for (j, &hj) in h_prev.iter().enumerate() {
                axpy(hj, &params.w_hidden[j * 4 * h..(j + 1) * 4 * h], &mut z);
            }
            let mut c_new = vec![0.0; h];
            let gates = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for u in 0..h {
                let i = sigmoid(z[u]);
                let f = sigmoid(z[h + u]);
                let g = z[2 * h + u].tanh();
                let o = sigmoid(z[3 * h + u]);
                gates[u] = i;
                gates[h + u] = f;
                gates[2 * h + u] = g;
                gates[3 * h + u] = o;
                c_new[u] = f * c_prev[u] + i * g;
            }
            for u in 0..h {
                let tc = c_new[u].tanh();
                cache.tanh_c[t * h + u] = tc;
                cache.h[t * h + u] = gates[3 * h + u] * tc;
            }
            cache.c[t * h..(t + 1) * h].copy_from_slice(&c_new);
        }
        cache
    }

    fn forward_one(&self, seq: &IdSequence, mask: Option<Vec<f64>>) -> ExampleCache {
        let (h, a, k) = (self.dims.hidden, self.dims.attention, self.n_classes);
        let len = seq.true_length;
        let ids = &seq.ids[..len];
        let fwd = self.run_direction(&self.lstm_fwd, ids, false);
        let bwd = self.run_direction(&self.lstm_bwd, ids, true);

        let mut hcat = vec![0.0; len * 2 * h];
        for t in 0..len {
            hcat[t * 2 * h..t * 2 * h + h].copy_from_slice(&fwd.h[t * h..(t + 1) * h]);
            hcat[t * 2 * h + h..(t + 1) * 2 * h].copy_from_slice(&bwd.h[t * h..(t + 1) * h]);
        }

        let mut pooled = vec![0.0; 2 * h];
        let mut u = Vec::new();
        let mut alpha = Vec::new();
        match &self.attention {
            Some(att) => {
                u = vec![0.0; len * a];
                let mut scores = vec![0.0; len];
                for t in 0..len {
                    let ut = &mut u[t * a..(t + 1) * a];
                    ut.copy_from_slice(&att.proj_bias);
                    for (j, &hj) in hcat[t * 2 * h..(t + 1) * 2 * h].iter().enumerate() {
                        axpy(hj, &att.proj[j * a..(j + 1) * a], ut);
                    }
                    ut.iter_mut().for_each(|v| *v = v.tanh());
                    scores[t] = dot(ut, &att.context);
                }
                crate::linear::softmax_in_place(&mut scores);
                alpha = scores;
                for t in 0..len {
                    axpy(alpha[t], &hcat[t * 2 * h..(t + 1) * 2 * h], &mut pooled);
                }
            }
            None => {
                pooled[..h].copy_from_slice(&fwd.h[(len - 1) * h..len * h]);
                pooled[h..].copy_from_slice(&bwd.h[..h]);
            }
        }

        let pooled_drop = match &mask {
            Some(m) => pooled.iter().zip(m).map(|(p, m)| p * m).collect(),
            None => pooled,
        };
        let mut probs = self.output_bias.clone();
        for (j, &pj) in pooled_drop.iter().enumerate() {
            axpy(pj, &self.output_w[j * k..(j + 1) * k], &mut probs);
        }
        crate::linear::softmax_in_place(&mut probs);

        ExampleCache {
            len,
            max_len: seq.ids.len(),
            fwd,
            bwd,
            hcat,
            u,
            alpha,
            mask,
            pooled_drop,
            probs,
        }
    }

    fn dropout_mask(&self, dropout_seed: u64, index: usize) -> Vec<f64> {
        let mut rng = stream(dropout_seed, index as u64);
        let keep = 1.0 - self.dropout_rate;
        (0..2 * self.dims.hidden)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect()
    }

    fn validate_batch(&self, batch: &[IdSequence]) -> Result<()> {
        let Some(first) = batch.first() else {
            return Err(Error::invalid("empty batch"));
        };
        let max_len = first.ids.len();
        for (i, s) in batch.iter().enumerate() {
            if s.ids.len() != max_len {
                return Err(Error::invalid(format!(
                    "sequence {i} has length {}, batch uses {max_len}",
                    s.ids.len()
                )));
            }
            if s.true_length == 0 {
                return Err(Error::invalid(format!("sequence {i} is all padding")));
            }
            if s.true_length > s.ids.len() {
                return Err(Error::invalid(format!("sequence {i} has an invalid true length")));
            }
            if let Some(&bad) = s.ids[..s.true_length]
                .iter()
                .find(|&&t| t == PAD || t as usize >= self.vocab_size)
            {
                return Err(Error::invalid(format!(
                    "sequence {i} holds token id {bad} inside its true length"
                )));
            }
        }
        Ok(())
    }

    /// Class probabilities (`n x k`) and the cache needed by `backward`.
    /// Dropout on the pooled vector is active only when `train_mode` is set;
    /// masks are derived from `dropout_seed` and the position in the batch.
    pub fn forward(
        &self,
        batch: &[IdSequence],
        train_mode: bool,
        dropout_seed: u64,
    ) -> Result<(Vec<Vec<f64>>, BatchCache)> {
        self.validate_batch(batch)?;
        let examples: Vec<ExampleCache> = batch
            .par_iter()
            .enumerate()
            .map(|(i, seq)| {
                let mask = (train_mode && self.dropout_rate > 0.0).then(|| self.dropout_mask(dropout_seed, i));
                self.forward_one(seq, mask)
            })
            .collect();
        let probs = examples.iter().map(|e| e.probs.clone()).collect();
        Ok((probs, BatchCache { examples }))
    }

    pub fn predict_proba(&self, batch: &[IdSequence]) -> Result<Vec<Vec<f64>>> {
        self.forward(batch, false, 0).map(|(p, _)| p)
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_direction(
        &self,
        params: &LstmParams,
        grads: &mut LstmParams,
        emb_grad: &mut [f64],
        ids: &[u32],
        cache: &DirCache,
        dh_ext: &[f64],
        reverse: bool,
    ) {
        let (d, h) = (self.dims.embed, self.dims.hidden);
        let len = ids.len();
        let mut dh_rec = vec![0.0; h];
        let mut dc_rec = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        let zeros = vec![0.0; h];
        // reverse of the processing order
        for step in (0..len).rev() {
            let t = if reverse { len - 1 - step } else { step };
            let prev = if step == 0 {
                None
            } else if reverse {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            let (h_prev, c_prev) = match prev {
                Some(p) => (&cache.h[p * h..(p + 1) * h], &cache.c[p * h..(p + 1) * h]),
                None => (&zeros[..], &zeros[..]),
            };
            let gates = &cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for u in 0..h {
                let (i, f, g, o) = (gates[u], gates[h + u], gates[2 * h + u], gates[3 * h + u]);
                let tc = cache.tanh_c[t * h + u];
                let dh = dh_ext[t * h + u] + dh_rec[u];
                let dc = dc_rec[u] + dh * o * (1.0 - tc * tc);
                dz[u] = dc * g * i * (1.0 - i);
                dz[h + u] = dc * c_prev[u] * f * (1.0 - f);
                dz[2 * h + u] = dc * i * (1.0 - g * g);
                dz[3 * h + u] = dh * tc * o * (1.0 - o);
                dc_rec[u] = dc * f;
            }
            axpy(1.0, &dz, &mut grads.bias);
            let tok = ids[t] as usize;
            let x = &self.embedding[tok * d..(tok + 1) * d];
            let dx = &mut emb_grad[tok * d..(tok + 1) * d];
            for j in 0..d {
                axpy(x[j], &dz, &mut grads.w_input[j * 4 * h..(j + 1) * 4 * h]);
                dx[j] += dot(&params.w_input[j * 4 * h..(j + 1) * 4 * h], &dz);
            }
            for j in 0..h {
                axpy(h_prev[j], &dz, &mut grads.w_hidden[j * 4 * h..(j + 1) * 4 * h]);
                dh_rec[j] = dot(&params.w_hidden[j * 4 * h..(j + 1) * 4 * h], &dz);
            }
        }
    }

    /// Accumulates into `grads` the gradient of `scale * CE(example)`;
    /// returns the unscaled cross-entropy.
    fn backward_one(
        &self,
        seq: &IdSequence,
        label: usize,
        ex: &ExampleCache,
        scale: f64,
        grads: &mut NeuralModel,
    ) -> f64 {
        let (h, a, k) = (self.dims.hidden, self.dims.attention, self.n_classes);
        let len = ex.len;
        let loss = -ex.probs[label].max(f64::MIN_POSITIVE).ln();

        let dlogits: Vec<f64> = (0..k)
            .map(|c| scale * (ex.probs[c] - f64::from(u8::from(c == label))))
            .collect();
        axpy(1.0, &dlogits, &mut grads.output_bias);
        let mut dpooled = vec![0.0; 2 * h];
        for j in 0..2 * h {
            axpy(ex.pooled_drop[j], &dlogits, &mut grads.output_w[j * k..(j + 1) * k]);
            dpooled[j] = dot(&self.output_w[j * k..(j + 1) * k], &dlogits);
        }
        if let Some(m) = &ex.mask {
            dpooled.iter_mut().zip(m).for_each(|(g, m)| *g *= m);
        }

        let mut dh_fwd = vec![0.0; len * h];
        let mut dh_bwd = vec![0.0; len * h];
        match (&self.attention, &mut grads.attention) {
            (Some(att), Some(gatt)) => {
                let dalpha: Vec<f64> = (0..len)
                    .map(|t| dot(&ex.hcat[t * 2 * h..(t + 1) * 2 * h], &dpooled))
                    .collect();
                let mean: f64 = ex.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
                let mut dhcat = vec![0.0; 2 * h];
                let mut dzu = vec![0.0; a];
                for t in 0..len {
                    let de = ex.alpha[t] * (dalpha[t] - mean);
                    let ut = &ex.u[t * a..(t + 1) * a];
                    axpy(de, ut, &mut gatt.context);
                    for q in 0..a {
                        dzu[q] = de * att.context[q] * (1.0 - ut[q] * ut[q]);
                    }
                    axpy(1.0, &dzu, &mut gatt.proj_bias);
                    let ht = &ex.hcat[t * 2 * h..(t + 1) * 2 * h];
                    for j in 0..2 * h {
                        axpy(ht[j], &dzu, &mut gatt.proj[j * a..(j + 1) * a]);
                        dhcat[j] = ex.alpha[t] * dpooled[j] + dot(&att.proj[j * a..(j + 1) * a], &dzu);
                    }
                    dh_fwd[t * h..(t + 1) * h].copy_from_slice(&dhcat[..h]);
                    dh_bwd[t * h..(t + 1) * h].copy_from_slice(&dhcat[h..]);
                }
            }
            _ => {
                dh_fwd[(len - 1) * h..len * h].copy_from_slice(&dpooled[..h]);
                dh_bwd[..h].copy_from_slice(&dpooled[h..]);
            }
        }

        let ids = &seq.ids[..len];
        self.backward_direction(
            &self.lstm_fwd,
            &mut grads.lstm_fwd,
            &mut grads.embedding,
            ids,
            &ex.fwd,
            &dh_fwd,
            false,
        );
        self.backward_direction(
            &self.lstm_bwd,
            &mut grads.lstm_bwd,
            &mut grads.embedding,
            ids,
            &ex.bwd,
            &dh_bwd,
            true,
        );
        loss
    }

    /// Exact gradients of the mean cross-entropy over the batch, and that
    /// mean loss.
    pub fn backward(&self, batch: &[IdSequence], labels: &[usize], cache: &BatchCache) -> Result<(NeuralModel, f64)> {
        if batch.len() != labels.len() || batch.len() != cache.examples.len() {
            return Err(Error::invalid("batch, labels and cache sizes differ"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(Error::invalid(format!(
                "label index {bad} out of range for {} classes",
                self.n_classes
            )));
        }
        let scale = 1.0 / batch.len() as f64;
        // fixed chunking keeps the summation order independent of threads
        const CHUNK: usize = 8;
        let partials: Vec<(NeuralModel, f64)> = (0..batch.len())
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|idx| {
                let mut g = self.zeros_like();
                let mut loss = 0.0;
                for &i in idx {
                    loss += self.backward_one(&batch[i], labels[i], &cache.examples[i], scale, &mut g);
                }
                (g, loss)
            })
            .collect();
        let mut iter = partials.into_iter();
        let (mut grads, mut loss) = iter.next().expect("non-empty batch");
        for (g, l) in iter {
            grads.add_assign(&g);
            loss += l;
        }
        Ok((grads, loss * scale))
    }

    /// Mean loss of the batch in inference mode.
    pub fn loss(&self, batch: &[IdSequence], labels: &[usize]) -> Result<f64> {
        let (probs, _) = self.forward(batch, false, 0)?;
        let total: f64 = probs
            .iter()
            .zip(labels)
            .map(|(p, &l)| -p[l].max(f64::MIN_POSITIVE).ln())
            .sum();
        Ok(total / batch.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_weighted_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRun {
    pub config: RunConfig,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainRun {
    pub fn best_valid_f1(&self) -> f64 {
        self.history[self.best_epoch - 1].valid_weighted_f1
    }

    /// Line-delimited `{epoch, train_loss, valid_weighted_f1}` records.
    pub fn curve_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.history {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

struct Adam {
    m: NeuralModel,
    v: NeuralModel,
    step: i32,
}

impl Adam {
    fn new(model: &NeuralModel) -> Self {
        Adam {
            m: model.zeros_like(),
            v: model.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, model: &mut NeuralModel, grads: &NeuralModel, cfg: &RunConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.step);
        let bc2 = 1.0 - cfg.beta2.powi(self.step);
        let params = model.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        let gs = grads.tensors();
        for (((_, p), (_, m)), ((_, v), (_, _, g))) in params.into_iter().zip(ms).zip(vs.into_iter().zip(gs)) {
            for i in 0..p.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
    }
}

/// Predicted label indices, batched.
pub fn predict_labels(model: &NeuralModel, seqs: &[IdSequence], batch_size: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(seqs.len());
    for chunk in seqs.chunks(batch_size.max(1)) {
        for p in model.predict_proba(chunk)? {
            out.push(crate::linear::argmax(&p));
        }
    }
    Ok(out)
}

pub fn weighted_f1(model: &NeuralModel, seqs: &[IdSequence], labels: &[usize], batch_size: usize) -> Result<f64> {
    let pred = predict_labels(model, seqs, batch_size)?;
    let names: Vec<String> = (0..model.n_classes).map(|c| c.to_string()).collect();
    Ok(eval::metrics(&eval::confusion(labels, &pred, &names)?)?.weighted.f1)
}

/// Adam with seeded per-epoch shuffling; after every epoch the validation
/// weighted F1 is computed and the best parameters so far are kept (the
/// earliest epoch wins ties).
pub fn train(
    model: NeuralModel,
    train_x: &[IdSequence],
    train_y: &[usize],
    valid_x: &[IdSequence],
    valid_y: &[usize],
    cfg: &RunConfig,
) -> Result<(NeuralModel, TrainRun)> {
    if train_x.len() != train_y.len() || valid_x.len() != valid_y.len() {
        return Err(Error::invalid("inputs and labels differ in length"));
    }
    if train_x.is_empty() || valid_x.is_empty() {
        return Err(Error::invalid("training and validation sets must be non-empty"));
    }
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("epochs and batch size must be positive"));
    }
    let mut model = model;
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..train_x.len()).collect();
    let mut shuffle_rng = stream(cfg.seed, 100);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, NeuralModel)> = None;

    for epoch in 1..=cfg.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let bx: Vec<IdSequence> = idx.iter().map(|&i| train_x[i].clone()).collect();
            let by: Vec<usize> = idx.iter().map(|&i| train_y[i]).collect();
            let dropout_seed = cfg
                .seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((epoch as u64) << 32 | b as u64);
            let (_, cache) = model.forward(&bx, true, dropout_seed)?;
            let (grads, loss) = model.backward(&bx, &by, &cache)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("loss at epoch {epoch}, batch {}", b + 1)));
            }
            loss_sum += loss * idx.len() as f64;
            adam.update(&mut model, &grads, cfg);
        }
        if !model.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let f1 = weighted_f1(&model, valid_x, valid_y, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_x.len() as f64,
            valid_weighted_f1: f1,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, valid weighted F1 {:.4}",
            record.train_loss,
            f1
        );
        history.push(record);
        if best.as_ref().is_none_or(|(_, f, _)| f1 > *f) {
            best = Some((epoch, f1, model.clone()));
        }
    }
    let (best_epoch, _, best_model) = best.expect("at least one epoch");
    Ok((
        best_model,
        TrainRun {
            config: *cfg,
            best_epoch,
            history,
        },
    ))
}
