use ndarray::{s, Array1, Array2, Array4, ArrayView1, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{AttentionTensor, EncoderLayer, LayerNorm, ModelParams, Prediction};
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, p: &LayerNorm) -> (Array2<f64>, NormCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *inv = 1.0 / (var + LN_EPS).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let y = &xhat * &p.gain + &p.bias;
    (y, NormCache { xhat, inv_std })
}

/// Accumulates gain/bias gradients into `g` and returns the input gradient.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &NormCache,
    p: &LayerNorm,
    g: &mut LayerNorm,
) -> Array2<f64> {
    g.gain += &(dy * &cache.xhat).sum_axis(Axis(0));
    g.bias += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * &p.gain;
    for ((mut row, xhat), &inv) in dx
        .rows_mut()
        .into_iter()
        .zip(cache.xhat.rows())
        .zip(cache.inv_std.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xhat.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        Zip::from(&mut row).and(&xhat).for_each(|r, &xh| {
            *r = inv * (*r - mean_d - xh * mean_dx);
        });
    }
    dx
}

fn linear(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    x.dot(w) + b
}

/// Accumulates `dW`, `db`; returns `dX`.
fn linear_backward(
    dy: &Array2<f64>,
    x: &Array2<f64>,
    w: &Array2<f64>,
    gw: &mut Array2<f64>,
    gb: &mut Array1<f64>,
) -> Array2<f64> {
    *gw += &x.t().dot(dy);
    *gb += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    fn inactive() -> Self {
        Dropout {
            rate: 0.0,
            rng: None,
        }
    }

    /// Returns the scaled keep-mask that was applied, if dropout is active.
    fn apply(&mut self, x: &mut Array2<f64>) -> Option<Array2<f64>> {
        let rng = self.rng.as_mut()?;
        if self.rate == 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.rate);
        let rate = self.rate;
        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        });
        *x *= &mask;
        Some(mask)
    }
}

struct LayerCache {
    norm1: NormCache,
    h1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// One `n x n` map per head.
    attn: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    attn_drop: Option<Array2<f64>>,
    norm2: NormCache,
    h2: Array2<f64>,
    pre_act: Array2<f64>,
    act: Array2<f64>,
    ffn_drop: Option<Array2<f64>>,
}

struct ForwardCache {
    ids: Vec<u32>,
    emb_drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    final_norm: NormCache,
    cls_hidden: Array1<f64>,
    probs: Array1<f64>,
}

/// Padded id rows with a per-position validity mask (`true` = real token).
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    pub ids: Vec<Vec<u32>>,
    pub mask: Vec<Vec<bool>>,
}

impl PaddedBatch {
    /// Right-pad `sequences` with `<pad>` to the longest length.
    pub fn from_sequences(sequences: &[&[u32]]) -> Self {
        let width = sequences.iter().map(|s| s.len()).max().unwrap_or(0);
        let mut ids = Vec::with_capacity(sequences.len());
        let mut mask = Vec::with_capacity(sequences.len());
        for s in sequences {
            let mut row = s.to_vec();
            row.resize(width, crate::tokenizer::PAD_ID);
            let mut m = vec![true; s.len()];
            m.resize(width, false);
            ids.push(row);
            mask.push(m);
        }
        PaddedBatch { ids, mask }
    }
}

fn attention_head(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    key_mask: Option<&[bool]>,
    scale: f64,
) -> Array2<f64> {
    let mut scores = q.dot(&k.t());
    scores *= scale;
    for mut row in scores.rows_mut() {
        let row = row.as_slice_mut().expect("row-major scores");
        match key_mask {
            None => softmax_in_place(row),
            Some(mask) => {
                let max = row
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| v)
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (v, &m) in row.iter_mut().zip(mask) {
                    *v = if m { (*v - max).exp() } else { 0.0 };
                    sum += *v;
                }
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
    }
    scores
}

impl ModelParams {
    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::InvalidArgument("empty input sequence".into()));
        }
        if ids.len() > self.config.max_positions {
            return Err(Error::InvalidArgument(format!(
                "sequence of {} tokens exceeds max_positions {}",
                ids.len(),
                self.config.max_positions
            )));
        }
        if let Some(&bad) = ids
            .iter()
            .find(|&&id| id as usize >= self.config.vocab_size)
        {
            return Err(Error::InvalidArgument(format!(
                "token id {bad} out of range for vocab size {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn encoder_layer_forward(
        &self,
        layer: &EncoderLayer,
        x: Array2<f64>,
        key_mask: Option<&[bool]>,
        dropout: &mut Dropout,
    ) -> (Array2<f64>, LayerCache) {
        let heads = self.config.n_heads;
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let (h1, norm1) = layer_norm(&x, &layer.attn_norm);
        let q = linear(&h1, &layer.wq, &layer.bq);
        let k = linear(&h1, &layer.wk, &layer.bk);
        let v = linear(&h1, &layer.wv, &layer.bv);
        let mut ctx = Array2::zeros(x.raw_dim());
        let mut attn = Vec::with_capacity(heads);
        for h in 0..heads {
            let cols = s![.., h * dh..(h + 1) * dh];
            let a = attention_head(q.slice(cols), k.slice(cols), key_mask, scale);
            ctx.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            attn.push(a);
        }
        let mut attn_out = linear(&ctx, &layer.wo, &layer.bo);
        let attn_drop = dropout.apply(&mut attn_out);
        let x_mid = &x + &attn_out;

        let (h2, norm2) = layer_norm(&x_mid, &layer.ffn_norm);
        let pre_act = linear(&h2, &layer.w1, &layer.b1);
        let act = pre_act.mapv(gelu);
        let mut ffn_out = linear(&act, &layer.w2, &layer.b2);
        let ffn_drop = dropout.apply(&mut ffn_out);
        let x_out = &x_mid + &ffn_out;

        let cache = LayerCache {
            norm1,
            h1,
            q,
            k,
            v,
            attn,
            ctx,
            attn_drop,
            norm2,
            h2,
            pre_act,
            act,
            ffn_drop,
        };
        (x_out, cache)
    }

    fn forward_cached(
        &self,
        ids: &[u32],
        key_mask: Option<&[bool]>,
        mut dropout: Dropout,
    ) -> ForwardCache {
        let n = ids.len();
        let mut x = Array2::zeros((n, self.config.d_model));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += &self.token_embedding.row(id as usize);
            row += &self.position_embedding.row(i);
        }
        let emb_drop = dropout.apply(&mut x);
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (out, cache) = self.encoder_layer_forward(layer, x, key_mask, &mut dropout);
            layers.push(cache);
            x = out;
        }
        let (hf, final_norm) = layer_norm(&x, &self.final_norm);
        let cls_hidden = hf.row(0).to_owned();
        let mut logits = cls_hidden.dot(&self.classifier_w) + &self.classifier_b;
        softmax_in_place(logits.as_slice_mut().expect("contiguous"));
        ForwardCache {
            ids: ids.to_vec(),
            emb_drop,
            layers,
            final_norm,
            cls_hidden,
            probs: logits,
        }
    }

    fn attention_from(&self, cache: &ForwardCache) -> AttentionTensor {
        let n = cache.ids.len();
        let mut weights = Array4::zeros((self.layers.len(), self.config.n_heads, n, n));
        for (l, lc) in cache.layers.iter().enumerate() {
            for (h, a) in lc.attn.iter().enumerate() {
                weights.slice_mut(s![l, h, .., ..]).assign(a);
            }
        }
        AttentionTensor { weights }
    }

    /// Inference on one unpadded sequence (dropout off). Position 0 is the
    /// classification token.
    pub fn forward(
        &self,
        ids: &[u32],
        collect_attention: bool,
    ) -> Result<(Prediction, Option<AttentionTensor>)> {
        self.check_ids(ids)?;
        let cache = self.forward_cached(ids, None, Dropout::inactive());
        let attention = collect_attention.then(|| self.attention_from(&cache));
        Ok((
            Prediction {
                probabilities: cache.probs.to_vec(),
            },
            attention,
        ))
    }

    /// Inference on padded rows. Masked keys receive zero attention, so each
    /// row matches an unpadded [`forward`](Self::forward) of its real tokens.
    /// A row with no real token yields the uniform distribution.
    pub fn forward_batch(&self, batch: &PaddedBatch) -> Result<Vec<Prediction>> {
        if batch.ids.len() != batch.mask.len() {
            return Err(Error::InvalidArgument(format!(
                "{} id rows but {} mask rows",
                batch.ids.len(),
                batch.mask.len()
            )));
        }
        for (r, (ids, mask)) in batch.ids.iter().zip(&batch.mask).enumerate() {
            if ids.len() != mask.len() {
                return Err(Error::InvalidArgument(format!(
                    "row {r}: {} ids but {} mask entries",
                    ids.len(),
                    mask.len()
                )));
            }
        }
        batch
            .ids
            .par_iter()
            .zip(batch.mask.par_iter())
            .map(|(ids, mask)| {
                if !mask.iter().any(|&m| m) {
                    let c = self.config.n_classes;
                    return Ok(Prediction {
                        probabilities: vec![1.0 / c as f64; c],
                    });
                }
                self.check_ids(ids)?;
                let cache = self.forward_cached(ids, Some(mask), Dropout::inactive());
                Ok(Prediction {
                    probabilities: cache.probs.to_vec(),
                })
            })
            .collect()
    }

    /// Mean cross-entropy of `inputs` against `labels` (no regularization,
    /// dropout off).
    pub fn cross_entropy(&self, inputs: &[&[u32]], labels: &[usize]) -> Result<f64> {
        self.check_batch(inputs, labels)?;
        let losses: Vec<f64> = inputs
            .par_iter()
            .zip(labels.par_iter())
            .map(|(ids, &y)| {
                let cache = self.forward_cached(ids, None, Dropout::inactive());
                -cache.probs[y].ln()
            })
            .collect();
        Ok(losses.iter().sum::<f64>() / inputs.len() as f64)
    }

    fn check_batch(&self, inputs: &[&[u32]], labels: &[usize]) -> Result<()> {
        if inputs.is_empty() || inputs.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "batch has {} inputs and {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.config.n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {} classes",
                self.config.n_classes
            )));
        }
        for ids in inputs {
            self.check_ids(ids)?;
        }
        Ok(())
    }

    /// Loss and gradient of
    /// `-(1/N) sum_i log p(y_i | x_i) + (l2_rate / 2) * ||w||^2`
    /// where `w` ranges over the decay tensors (embeddings and weight
    /// matrices). Pass `l2_rate = 0` for pure cross-entropy.
    ///
    /// With `dropout_seed` set, dropout is active and the masks for example
    /// `i` are drawn from a stream keyed by `(seed, i)`. Per-example gradients
    /// are summed in input order, so the result does not depend on how many
    /// worker threads ran.
    pub fn loss_and_grad(
        &self,
        inputs: &[&[u32]],
        labels: &[usize],
        l2_rate: f64,
        dropout_seed: Option<u64>,
    ) -> Result<(f64, ModelParams)> {
        self.check_batch(inputs, labels)?;
        let n = inputs.len() as f64;
        let per_example: Vec<(f64, ModelParams)> = inputs
            .par_iter()
            .zip(labels.par_iter())
            .enumerate()
            .map(|(i, (ids, &y))| {
                let dropout = match dropout_seed {
                    Some(seed) if self.config.dropout > 0.0 => Dropout {
                        rate: self.config.dropout,
                        rng: Some(ChaCha8Rng::seed_from_u64(
                            seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                        )),
                    },
                    _ => Dropout::inactive(),
                };
                let cache = self.forward_cached(ids, None, dropout);
                let loss = -cache.probs[y].ln();
                let mut dlogits = cache.probs.clone();
                dlogits[y] -= 1.0;
                dlogits /= n;
                let mut grads = self.zeros_like();
                self.backward(&cache, &dlogits, &mut grads);
                (loss, grads)
            })
            .collect();

        let mut total = self.zeros_like();
        let mut loss = 0.0;
        for (l, g) in &per_example {
            loss += l;
            total.add_assign(g);
        }
        loss /= n;
        if l2_rate != 0.0 {
            loss += 0.5 * l2_rate * self.decay_norm_sq();
            for (g, w) in total.tensors_mut().into_iter().zip(self.tensors()) {
                if w.decay {
                    for (gx, wx) in g.data.iter_mut().zip(w.data) {
                        *gx += l2_rate * wx;
                    }
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss {loss} on a batch of {} (parameter norm {:.3e})",
                inputs.len(),
                self.global_norm()
            )));
        }
        Ok((loss, total))
    }

    fn backward(&self, cache: &ForwardCache, dlogits: &Array1<f64>, grads: &mut ModelParams) {
        let n = cache.ids.len();
        let d = self.config.d_model;

        // classifier on the first position only
        Zip::from(&mut grads.classifier_w)
            .and_broadcast(&cache.cls_hidden.view().insert_axis(Axis(1)))
            .and_broadcast(&dlogits.view().insert_axis(Axis(0)))
            .for_each(|g, &h, &dz| *g += h * dz);
        grads.classifier_b += dlogits;
        let mut dhf = Array2::zeros((n, d));
        dhf.row_mut(0).assign(&self.classifier_w.dot(dlogits));
        let mut dx = layer_norm_backward(
            &dhf,
            &cache.final_norm,
            &self.final_norm,
            &mut grads.final_norm,
        );

        for ((layer, lc), g) in self
            .layers
            .iter()
            .zip(&cache.layers)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            dx = self.encoder_layer_backward(layer, lc, g, dx);
        }

        if let Some(mask) = &cache.emb_drop {
            dx *= mask;
        }
        for (i, &id) in cache.ids.iter().enumerate() {
            let row = dx.row(i);
            let mut te = grads.token_embedding.row_mut(id as usize);
            te += &row;
            let mut pe = grads.position_embedding.row_mut(i);
            pe += &row;
        }
    }

    fn encoder_layer_backward(
        &self,
        layer: &EncoderLayer,
        lc: &LayerCache,
        g: &mut EncoderLayer,
        dx_out: Array2<f64>,
    ) -> Array2<f64> {
        let dh = self.config.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        // feed-forward branch
        let mut dffn = dx_out.clone();
        if let Some(mask) = &lc.ffn_drop {
            dffn *= mask;
        }
        let dact = linear_backward(&dffn, &lc.act, &layer.w2, &mut g.w2, &mut g.b2);
        let dpre = &dact * &lc.pre_act.mapv(gelu_grad);
        let dh2 = linear_backward(&dpre, &lc.h2, &layer.w1, &mut g.w1, &mut g.b1);
        let dx_mid =
            dx_out + layer_norm_backward(&dh2, &lc.norm2, &layer.ffn_norm, &mut g.ffn_norm);

        // attention branch
        let mut dattn = dx_mid.clone();
        if let Some(mask) = &lc.attn_drop {
            dattn *= mask;
        }
        let dctx = linear_backward(&dattn, &lc.ctx, &layer.wo, &mut g.wo, &mut g.bo);
        let mut dq = Array2::zeros(lc.q.raw_dim());
        let mut dk = Array2::zeros(lc.k.raw_dim());
        let mut dv = Array2::zeros(lc.v.raw_dim());
        for (h, a) in lc.attn.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            let dctx_h = dctx.slice(cols);
            let da = dctx_h.dot(&lc.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&dctx_h));
            let mut ds = da;
            for (mut drow, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                let dot = softmax_dot(drow.view(), arow);
                Zip::from(&mut drow)
                    .and(&arow)
                    .for_each(|dv, &av| *dv = av * (*dv - dot));
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
        }
        let mut dh1 = linear_backward(&dq, &lc.h1, &layer.wq, &mut g.wq, &mut g.bq);
        dh1 += &linear_backward(&dk, &lc.h1, &layer.wk, &mut g.wk, &mut g.bk);
        dh1 += &linear_backward(&dv, &lc.h1, &layer.wv, &mut g.wv, &mut g.bv);
        dx_mid + layer_norm_backward(&dh1, &lc.norm1, &layer.attn_norm, &mut g.attn_norm)
    }
}

fn softmax_dot(d: ArrayView1<f64>, a: ArrayView1<f64>) -> f64 {
    d.iter().zip(a.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny(dropout: f64) -> ModelParams {
        let cfg = ModelConfig {
            vocab_size: 20,
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            d_ff: 16,
            max_positions: 16,
            n_classes: 3,
            dropout,
        };
        let mut p = ModelParams::init(cfg, 11).unwrap();
        // larger weights than the 0.02 init make the gradient check informative
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for t in p.tensors_mut() {
            for x in t.data.iter_mut() {
                *x += rng.random_range(-0.3..0.3);
            }
        }
        p
    }

    #[test]
    fn gelu_grad_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn outputs_are_distributions() {
        let p = tiny(0.0);
        let (pred, attn) = p.forward(&[0, 5, 7, 2], true).unwrap();
        assert!((pred.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let attn = attn.unwrap();
        assert_eq!(attn.weights.shape(), &[2, 2, 4, 4]);
        for l in 0..2 {
            for h in 0..2 {
                for q in 0..4 {
                    assert!((attn.row(l, h, q).sum() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = tiny(0.0);
        assert!(p.forward(&[], false).is_err());
        assert!(p.forward(&[25], false).is_err());
        assert!(p.forward(&[1; 17], false).is_err());
        assert!(p.loss_and_grad(&[&[0, 1]], &[3], 0.0, None).is_err());
    }

    #[test]
    fn permutation_changes_output() {
        let p = tiny(0.0);
        let (a, _) = p.forward(&[0, 4, 9, 13], false).unwrap();
        let (b, _) = p.forward(&[0, 13, 4, 9], false).unwrap();
        let diff: f64 = a
            .probabilities
            .iter()
            .zip(&b.probabilities)
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(diff > 1e-9);
    }

    #[test]
    fn batch_matches_unbatched() {
        let p = tiny(0.0);
        let a: &[u32] = &[0, 3, 4, 5, 2];
        let b: &[u32] = &[0, 9, 2];
        let batch = PaddedBatch::from_sequences(&[a, b]);
        let out = p.forward_batch(&batch).unwrap();
        for (seq, pred) in [a, b].iter().zip(&out) {
            let (single, _) = p.forward(seq, false).unwrap();
            for (x, y) in single.probabilities.iter().zip(&pred.probabilities) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let padded = PaddedBatch {
            ids: vec![vec![1, 1]],
            mask: vec![vec![false, false]],
        };
        let out = p.forward_batch(&padded).unwrap();
        assert!((out[0].probabilities[0] - 1.0 / 3.0).abs() < 1e-15);
        let mismatched = PaddedBatch {
            ids: vec![vec![1, 1]],
            mask: vec![vec![true]],
        };
        assert!(p.forward_batch(&mismatched).is_err());
    }

    #[test]
    fn loss_is_log_c_for_uniform_predictions() {
        let mut p = tiny(0.0);
        p.classifier_w.fill(0.0);
        p.classifier_b.fill(0.0);
        let (loss, _) = p
            .loss_and_grad(&[&[0, 1, 2], &[0, 4]], &[0, 2], 0.0, None)
            .unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_seeded() {
        let p = tiny(0.3);
        let x: &[u32] = &[0, 3, 4, 5];
        let (a, ga) = p.loss_and_grad(&[x], &[1], 0.0, Some(9)).unwrap();
        let (b, gb) = p.loss_and_grad(&[x], &[1], 0.0, Some(9)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(ga, gb);
        let (c, _) = p.loss_and_grad(&[x], &[1], 0.0, Some(10)).unwrap();
        assert_ne!(a, c);
    }

    fn max_relative_error(p: &ModelParams, l2: f64) -> f64 {
        let inputs: Vec<&[u32]> = vec![&[0, 5, 7, 2, 2, 9, 2], &[0, 3, 3, 12, 2]];
        let labels = [2, 0];
        let (_, grads) = p.loss_and_grad(&inputs, &labels, l2, None).unwrap();
        let loss = |q: &ModelParams| q.loss_and_grad(&inputs, &labels, l2, None).unwrap().0;
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let names: Vec<String> = p.tensors().into_iter().map(|t| t.name).collect();
        for (ti, g) in grads.tensors().into_iter().enumerate() {
            for j in 0..g.data.len() {
                let mut plus = p.clone();
                plus.tensors_mut()[ti].data[j] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[ti].data[j] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let analytic = g.data[j];
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                if rel > 1e-4 {
                    eprintln!(
                        "{} [{j}]: analytic {analytic:e} numeric {numeric:e}",
                        names[ti]
                    );
                }
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = tiny(0.0);
        assert!(p.num_parameters() <= 5000);
        for l2 in [0.0, 0.01] {
            let err = max_relative_error(&p, l2);
            assert!(err < 1e-4, "max relative error {err:e} at l2 {l2}");
        }
    }
}
