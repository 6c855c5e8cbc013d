//! From-scratch transformer encoder with a linear classification head on the
//! final `<s>` state.
//!
//! Pre-norm blocks (`x + Attn(LN(x))`, `x + FFN(LN(x))`), learned absolute
//! positions, tanh-approximated GELU, and a final layer norm. Forward and
//! backward passes are hand-written in `f64`; see [`ModelParams::loss_and_grad`].

mod checkpoint;
mod encoder;

use ndarray::{Array1, Array2, Array4, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use encoder::PaddedBatch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub n_classes: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: crate::tokenizer::DEFAULT_VOCAB_SIZE,
            d_model: 128,
            n_heads: 4,
            n_layers: 4,
            d_ff: 512,
            max_positions: 512,
            n_classes: 7,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("model dimensions must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 {
            return bad("need at least one layer".into());
        }
        if self.max_positions == 0 {
            return bad("max_positions must be positive".into());
        }
        if self.n_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.n_classes));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} must be in [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        let (d, f) = (self.d_model, self.d_ff);
        let layer = 2 * 2 * d + 4 * (d * d + d) + (d * f + f) + (f * d + d);
        self.vocab_size * d
            + self.max_positions * d
            + self.n_layers * layer
            + 2 * d
            + d * self.n_classes
            + self.n_classes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Array1<f64>,
    pub bias: Array1<f64>,
}

impl LayerNorm {
    fn new(d: usize) -> Self {
        LayerNorm {
            gain: Array1::ones(d),
            bias: Array1::zeros(d),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub attn_norm: LayerNorm,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ffn_norm: LayerNorm,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All trainable weights. The same type doubles as a gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub token_embedding: Array2<f64>,
    pub position_embedding: Array2<f64>,
    pub layers: Vec<EncoderLayer>,
    pub final_norm: LayerNorm,
    /// `d_model x n_classes`.
    pub classifier_w: Array2<f64>,
    pub classifier_b: Array1<f64>,
}

/// A named view of one parameter tensor. `decay` marks weights that take L2
/// regularization; biases and layer-norm parameters do not.
pub struct TensorRef<'a> {
    pub name: String,
    pub data: &'a [f64],
    pub decay: bool,
}

pub struct TensorMut<'a> {
    pub name: String,
    pub data: &'a mut [f64],
    pub decay: bool,
}

const INIT_STD: f64 = 0.02;

fn truncated_normal(rng: &mut ChaCha8Rng, shape: (usize, usize)) -> Array2<f64> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    Array2::from_shape_simple_fn(shape, || loop {
        let x: f64 = normal.sample(rng);
        if x.abs() <= 2.0 * INIT_STD {
            break x;
        }
    })
}

/// Expands to a `Vec` of tensor views in a fixed canonical order.
macro_rules! collect_tensors {
    ($params:expr, $view:ident, $slice:ident, $iter:ident) => {{
        let params = $params;
        let mut v = Vec::with_capacity(6 + 16 * params.layers.len());
        macro_rules! push {
            ($name:expr, $t:expr, $decay:expr) => {
                v.push($view {
                    name: $name,
                    data: $t.$slice().expect("parameters are contiguous"),
                    decay: $decay,
                })
            };
        }
        push!("token_embedding".to_string(), params.token_embedding, true);
        push!(
            "position_embedding".to_string(),
            params.position_embedding,
            true
        );
        for (i, l) in params.layers.$iter().enumerate() {
            push!(
                format!("layers.{i}.attn_norm.gain"),
                l.attn_norm.gain,
                false
            );
            push!(
                format!("layers.{i}.attn_norm.bias"),
                l.attn_norm.bias,
                false
            );
            push!(format!("layers.{i}.wq"), l.wq, true);
            push!(format!("layers.{i}.bq"), l.bq, false);
            push!(format!("layers.{i}.wk"), l.wk, true);
            push!(format!("layers.{i}.bk"), l.bk, false);
            push!(format!("layers.{i}.wv"), l.wv, true);
            push!(format!("layers.{i}.bv"), l.bv, false);
            push!(format!("layers.{i}.wo"), l.wo, true);
            push!(format!("layers.{i}.bo"), l.bo, false);
            push!(format!("layers.{i}.ffn_norm.gain"), l.ffn_norm.gain, false);
            push!(format!("layers.{i}.ffn_norm.bias"), l.ffn_norm.bias, false);
            push!(format!("layers.{i}.w1"), l.w1, true);
            push!(format!("layers.{i}.b1"), l.b1, false);
            push!(format!("layers.{i}.w2"), l.w2, true);
            push!(format!("layers.{i}.b2"), l.b2, false);
        }
        push!("final_norm.gain".to_string(), params.final_norm.gain, false);
        push!("final_norm.bias".to_string(), params.final_norm.bias, false);
        push!("classifier_w".to_string(), params.classifier_w, true);
        push!("classifier_b".to_string(), params.classifier_b, false);
        v
    }};
}

impl ModelParams {
    /// Seeded initialization: truncated normal (std 0.02, cut at 2 std) for
    /// weight matrices and embeddings, zero biases, unit norm gains.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, f) = (config.d_model, config.d_ff);
        let token_embedding = truncated_normal(&mut rng, (config.vocab_size, d));
        let position_embedding = truncated_normal(&mut rng, (config.max_positions, d));
        let layers = (0..config.n_layers)
            .map(|_| EncoderLayer {
                attn_norm: LayerNorm::new(d),
                wq: truncated_normal(&mut rng, (d, d)),
                bq: Array1::zeros(d),
                wk: truncated_normal(&mut rng, (d, d)),
                bk: Array1::zeros(d),
                wv: truncated_normal(&mut rng, (d, d)),
                bv: Array1::zeros(d),
                wo: truncated_normal(&mut rng, (d, d)),
                bo: Array1::zeros(d),
                ffn_norm: LayerNorm::new(d),
                w1: truncated_normal(&mut rng, (d, f)),
                b1: Array1::zeros(f),
                w2: truncated_normal(&mut rng, (f, d)),
                b2: Array1::zeros(d),
            })
            .collect();
        Ok(ModelParams {
            config,
            token_embedding,
            position_embedding,
            layers,
            final_norm: LayerNorm::new(d),
            classifier_w: truncated_normal(&mut rng, (d, config.n_classes)),
            classifier_b: Array1::zeros(config.n_classes),
        })
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.data.fill(0.0);
        }
        out
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        collect_tensors!(self, TensorRef, as_slice, iter)
    }

    pub fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        collect_tensors!(self, TensorMut, as_slice_mut, iter_mut)
    }

    /// `||w||^2` over the regularized (decay) tensors only.
    pub fn decay_norm_sq(&self) -> f64 {
        self.tensors()
            .iter()
            .filter(|t| t.decay)
            .map(|t| t.data.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// `self += other`, tensor by tensor in canonical order.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.data.iter_mut().zip(b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.data.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }
}

/// Class distribution for one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
}

impl Prediction {
    /// Arg-max class; ties go to the lower index.
    pub fn predicted(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probabilities.iter().enumerate() {
            if p > self.probabilities[best] {
                best = i;
            }
        }
        best
    }
}

/// Attention weights indexed `(layer, head, query, key)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    pub weights: Array4<f64>,
}

impl AttentionTensor {
    pub fn n_layers(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn n_heads(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn seq_len(&self) -> usize {
        self.weights.shape()[2]
    }

    pub fn row(&self, layer: usize, head: usize, query: usize) -> ArrayView1<'_, f64> {
        self.weights.slice(ndarray::s![layer, head, query, ..])
    }
}
