//! Windowed character model with a latent bottleneck.
//!
//! ```text
//! window tokens ─embed─▶ concat (window·embed) ─affine,tanh─▶ hidden ─affine─▶ z (latent)
//! z ─affine,tanh─▶ hidden ─affine─▶ logits (|vocab|)
//! ```
//!
//! Weights, in initialization order, with `V = |vocab|`, `w = window`,
//! `e/h/d = embed/hidden/latent`:
//!
//! | name     | shape    | fan-in |
//! |----------|----------|--------|
//! | `embed`  | V × e    | 1      |
//! | `enc_w1` | h × w·e  | w·e    |
//! | `enc_b1` | h × 1    | w·e    |
//! | `enc_w2` | d × h    | h      |
//! | `enc_b2` | d × 1    | h      |
//! | `dec_w1` | h × d    | d      |
//! | `dec_b1` | h × 1    | d      |
//! | `dec_w2` | V × h    | h      |
//! | `dec_b2` | V × 1    | h      |
//!
//! Every entry is drawn row-major from the init stream as
//! `uniform(-s, s)`, `s = 1/sqrt(fan-in)`.
//!
//! The forward pass is written once against [`Backend`], so the plain `f64`
//! evaluator and the differentiable graph evaluator execute the same
//! arithmetic in the same order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId};
use crate::corpus::{Example, TokenId, Vocab};
use crate::error::{Error, Result};
use crate::format::to_json_sig17;
use crate::regularizer::LatentVector;
use crate::rng::{SeededRng, Stream};
use crate::train::TrainConfig;

pub const WEIGHT_NAMES: [&str; 9] = [
    "embed", "enc_w1", "enc_b1", "enc_w2", "enc_b2", "dec_w1", "dec_b1", "dec_w2", "dec_b2",
];

const EMBED: usize = 0;
const ENC_W1: usize = 1;
const ENC_B1: usize = 2;
const ENC_W2: usize = 3;
const ENC_B2: usize = 4;
const DEC_W1: usize = 5;
const DEC_B1: usize = 6;
const DEC_W2: usize = 7;
const DEC_B2: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub embed: usize,
    pub hidden: usize,
    pub latent: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `(rows, cols, fan_in)` of every weight in [`WEIGHT_NAMES`] order.
pub fn weight_shapes(vocab: usize, window: usize, dims: Dims) -> [(usize, usize, usize); 9] {
    let Dims {
        embed: e,
        hidden: h,
        latent: d,
    } = dims;
    let we = window * e;
    [
        (vocab, e, 1),
        (h, we, we),
        (h, 1, we),
        (d, h, h),
        (d, 1, h),
        (h, d, d),
        (h, 1, d),
        (vocab, h, h),
        (vocab, 1, h),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub vocab: Vocab,
    pub window: usize,
    pub dims: Dims,
    /// In [`WEIGHT_NAMES`] order.
    pub weights: Vec<Matrix>,
    /// Configuration the weights were trained with.
    pub config: TrainConfig,
}

/// Arithmetic used by the forward pass.
pub trait Backend {
    type V: Copy;
    /// `Σ w_i x_i + b`, accumulated left to right with the bias last.
    fn affine(&mut self, w: &[Self::V], x: &[Self::V], b: Self::V) -> Self::V;
    fn tanh(&mut self, x: Self::V) -> Self::V;
    fn add_const(&mut self, x: Self::V, c: f64) -> Self::V;
    fn exp(&mut self, x: Self::V) -> Self::V;
    fn ln(&mut self, x: Self::V) -> Self::V;
    fn sum(&mut self, xs: &[Self::V]) -> Self::V;
    fn sub(&mut self, a: Self::V, b: Self::V) -> Self::V;
    fn value(&self, x: Self::V) -> f64;
}

/// Plain `f64` evaluation.
pub struct Plain;

impl Backend for Plain {
    type V = f64;

    fn affine(&mut self, w: &[f64], x: &[f64], b: f64) -> f64 {
        let mut acc = 0.0;
        for (wi, xi) in w.iter().zip(x) {
            acc += wi * xi;
        }
        acc += b * 1.0;
        acc
    }

    fn tanh(&mut self, x: f64) -> f64 {
        x.tanh()
    }

    fn add_const(&mut self, x: f64, c: f64) -> f64 {
        x + c
    }

    fn exp(&mut self, x: f64) -> f64 {
        x.exp()
    }

    fn ln(&mut self, x: f64) -> f64 {
        x.ln()
    }

    fn sum(&mut self, xs: &[f64]) -> f64 {
        xs.iter().sum()
    }

    fn sub(&mut self, a: f64, b: f64) -> f64 {
        a + -b
    }

    fn value(&self, x: f64) -> f64 {
        x
    }
}

impl Backend for Graph {
    type V = NodeId;

    fn affine(&mut self, w: &[NodeId], x: &[NodeId], b: NodeId) -> NodeId {
        Graph::affine(self, w, x, b)
    }

    fn tanh(&mut self, x: NodeId) -> NodeId {
        Graph::tanh(self, x)
    }

    fn add_const(&mut self, x: NodeId, c: f64) -> NodeId {
        let k = self.constant(c);
        self.add(x, k)
    }

    fn exp(&mut self, x: NodeId) -> NodeId {
        Graph::exp(self, x)
    }

    fn ln(&mut self, x: NodeId) -> NodeId {
        Graph::ln(self, x)
    }

    fn sum(&mut self, xs: &[NodeId]) -> NodeId {
        Graph::sum(self, xs)
    }

    fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        Graph::sub(self, a, b)
    }

    fn value(&self, x: NodeId) -> f64 {
        Graph::value(self, x)
    }
}

/// Shape information plus the weights as backend values.
pub struct Forward<'a, V> {
    pub weights: Vec<&'a [V]>,
    pub vocab: usize,
    pub window: usize,
    pub dims: Dims,
}

impl<V: Copy> Forward<'_, V> {
    fn layer<B: Backend<V = V>>(&self, b: &mut B, w: usize, bias: usize, x: &[V], rows: usize) -> Vec<V> {
        let cols = x.len();
        (0..rows)
            .map(|r| b.affine(&self.weights[w][r * cols..(r + 1) * cols], x, self.weights[bias][r]))
            .collect()
    }

    pub fn embed(&self, tokens: &[TokenId]) -> Vec<V> {
        let e = self.dims.embed;
        let mut out = Vec::with_capacity(tokens.len() * e);
        for &t in tokens {
            let t = t as usize;
            out.extend_from_slice(&self.weights[EMBED][t * e..(t + 1) * e]);
        }
        out
    }

    pub fn encode_embedded<B: Backend<V = V>>(&self, b: &mut B, x: &[V]) -> Vec<V> {
        let pre = self.layer(b, ENC_W1, ENC_B1, x, self.dims.hidden);
        let hidden: Vec<V> = pre.into_iter().map(|v| b.tanh(v)).collect();
        self.layer(b, ENC_W2, ENC_B2, &hidden, self.dims.latent)
    }

    pub fn decode<B: Backend<V = V>>(&self, b: &mut B, z: &[V]) -> Vec<V> {
        let pre = self.layer(b, DEC_W1, DEC_B1, z, self.dims.hidden);
        let hidden: Vec<V> = pre.into_iter().map(|v| b.tanh(v)).collect();
        self.layer(b, DEC_W2, DEC_B2, &hidden, self.vocab)
    }
}

/// `logsumexp(logits) - logits[target]`, shifted by the (constant) max logit.
pub fn cross_entropy<B: Backend>(b: &mut B, logits: &[B::V], target: usize) -> B::V {
    let m = logits.iter().map(|&l| b.value(l)).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<B::V> = logits
        .iter()
        .map(|&l| {
            let s = b.add_const(l, -m);
            b.exp(s)
        })
        .collect();
    let total = b.sum(&exps);
    let lse = b.ln(total);
    let lse = b.add_const(lse, m);
    b.sub(lse, logits[target])
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Differentiable losses of a batch.
pub struct BatchLoss {
    /// Mean cross-entropy.
    pub mean: NodeId,
    pub per_example: Vec<NodeId>,
    /// Latent nodes of each example.
    pub latents: Vec<Vec<NodeId>>,
}

impl ModelParams {
    /// Uniform fan-in initialization from the init stream of `seed`.
    pub fn init(vocab: Vocab, window: usize, dims: Dims, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed, Stream::Init, 0);
        let weights = weight_shapes(vocab.len(), window, dims)
            .iter()
            .map(|&(r, c, fan_in)| {
                let s = 1.0 / (fan_in as f64).sqrt();
                Matrix {
                    rows: r,
                    cols: c,
                    data: (0..r * c).map(|_| rng.uniform_in(-s, s)).collect(),
                }
            })
            .collect();
        Self {
            vocab,
            window,
            dims,
            weights,
            config: TrainConfig::default(),
        }
    }

    pub fn zeros(vocab: Vocab, window: usize, dims: Dims) -> Self {
        let weights = weight_shapes(vocab.len(), window, dims)
            .iter()
            .map(|&(r, c, _)| Matrix::zeros(r, c))
            .collect();
        Self {
            vocab,
            window,
            dims,
            weights,
            config: TrainConfig::default(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum()
    }

    pub fn weight(&self, name: &str) -> Option<&Matrix> {
        WEIGHT_NAMES.iter().position(|n| *n == name).map(|i| &self.weights[i])
    }

    pub fn embedding(&self, token: TokenId) -> &[f64] {
        self.weights[EMBED].row(token as usize)
    }

    fn forward<'a, V>(&self, weights: Vec<&'a [V]>) -> Forward<'a, V> {
        Forward {
            weights,
            vocab: self.vocab.len(),
            window: self.window,
            dims: self.dims,
        }
    }

    fn forward_plain(&self) -> Forward<'_, f64> {
        self.forward(self.weights.iter().map(|m| m.data.as_slice()).collect())
    }

    fn check_window(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.len() != self.window {
            return Err(Error::Shape {
                expected: self.window,
                got: tokens.len(),
            });
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= self.vocab.len()) {
            return Err(Error::UnknownToken {
                id,
                vocab: self.vocab.len(),
            });
        }
        Ok(())
    }

    /// Concatenated embeddings of a window.
    pub fn embed(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        self.evaluator().embed(tokens)
    }

    /// Encoder applied to an already-embedded (possibly perturbed) window.
    pub fn encode_embedded(&self, x: &[f64]) -> Result<Vec<f64>> {
        let expected = self.window * self.dims.embed;
        if x.len() != expected {
            return Err(Error::Shape { expected, got: x.len() });
        }
        Ok(self.evaluator().encode_embedded(x))
    }

    pub fn encode(&self, tokens: &[TokenId]) -> Result<LatentVector> {
        let x = self.embed(tokens)?;
        LatentVector::new(self.encode_embedded(&x)?)
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dims.latent {
            return Err(Error::Shape {
                expected: self.dims.latent,
                got: z.len(),
            });
        }
        let logits = self.evaluator().decode(z);
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::NumericalOverflow("decoder logits"));
        }
        Ok(logits)
    }

    pub fn logits(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        let z = self.encode(tokens)?;
        self.decode(z.as_slice())
    }

    /// Plain evaluator bound to this model, reusing one weight copy across calls.
    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator {
            params: self,
            fwd: self.forward_plain(),
        }
    }

    /// Creates one leaf per weight entry, in [`WEIGHT_NAMES`] order.
    pub fn leaves(&self, g: &mut Graph) -> Vec<Vec<NodeId>> {
        self.weights
            .iter()
            .map(|w| w.data.iter().map(|&v| g.variable(v)).collect())
            .collect()
    }

    /// Mean cross-entropy of `batch` as a node, with per-example losses and latents.
    pub fn nll_loss(&self, g: &mut Graph, leaves: &[Vec<NodeId>], batch: &[Example]) -> Result<BatchLoss> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let fwd = self.forward(leaves.iter().map(Vec::as_slice).collect());
        let mut per_example = Vec::with_capacity(batch.len());
        let mut latents = Vec::with_capacity(batch.len());
        for ex in batch {
            self.check_window(&ex.window)?;
            if ex.target as usize >= self.vocab.len() {
                return Err(Error::UnknownToken {
                    id: ex.target,
                    vocab: self.vocab.len(),
                });
            }
            let x = fwd.embed(&ex.window);
            let z = fwd.encode_embedded(g, &x);
            let logits = fwd.decode(g, &z);
            per_example.push(cross_entropy(g, &logits, ex.target as usize));
            latents.push(z);
        }
        let mean = g.mean(&per_example);
        Ok(BatchLoss {
            mean,
            per_example,
            latents,
        })
    }

    /// Cross-entropy of `target` given latent nodes `z`, with the decoder weights as constants.
    pub fn latent_loss_node(&self, g: &mut Graph, z: &[NodeId], target: TokenId) -> NodeId {
        let consts: Vec<Vec<NodeId>> = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                if i >= DEC_W1 {
                    w.data.iter().map(|&v| g.constant(v)).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        let fwd = self.forward(consts.iter().map(Vec::as_slice).collect());
        let logits = fwd.decode(g, z);
        cross_entropy(g, &logits, target as usize)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_json_bytes();
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_bytes(&bytes)
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let file = ModelFile {
            vocab: self.vocab.symbols().iter().map(|c| c.to_string()).collect(),
            window: self.window,
            dims: self.dims,
            weights: WEIGHT_NAMES
                .iter()
                .zip(&self.weights)
                .map(|(n, w)| {
                    (
                        n.to_string(),
                        WeightEntry {
                            shape: [w.rows, w.cols],
                            data: w.data.clone(),
                        },
                    )
                })
                .collect(),
            config: self.config.clone(),
        };
        to_json_sig17(&file).expect("model serialization cannot fail")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .map(str::to_owned)
                .unwrap_or_else(|| "<document>".to_owned());
            Error::ModelParse { field, message: msg }
        })?;
        let mut symbols = Vec::with_capacity(file.vocab.len());
        for (i, s) in file.vocab.iter().enumerate() {
            let mut chars = s.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => symbols.push(c),
                _ => {
                    return Err(Error::ModelParse {
                        field: format!("vocab[{i}]"),
                        message: format!("expected a single character, got {s:?}"),
                    })
                }
            }
        }
        let vocab = Vocab::from_symbols(symbols)?;
        if file.window == 0 || file.dims.embed == 0 || file.dims.hidden == 0 || file.dims.latent == 0 {
            return Err(Error::ModelParse {
                field: "dims".into(),
                message: "window and all dimensions must be ≥ 1".into(),
            });
        }
        if let Some(extra) = file.weights.keys().find(|k| !WEIGHT_NAMES.contains(&k.as_str())) {
            return Err(Error::ModelParse {
                field: format!("weights.{extra}"),
                message: "unknown weight".into(),
            });
        }
        let shapes = weight_shapes(vocab.len(), file.window, file.dims);
        let mut weights = Vec::with_capacity(WEIGHT_NAMES.len());
        let mut entries = file.weights;
        for (name, &(r, c, _)) in WEIGHT_NAMES.iter().zip(&shapes) {
            let entry = entries.remove(*name).ok_or_else(|| Error::ModelParse {
                field: format!("weights.{name}"),
                message: "missing weight".into(),
            })?;
            if entry.shape != [r, c] || entry.data.len() != r * c {
                return Err(Error::ShapeMismatch((*name).to_owned()));
            }
            weights.push(Matrix {
                rows: r,
                cols: c,
                data: entry.data,
            });
        }
        Ok(Self {
            vocab,
            window: file.window,
            dims: file.dims,
            weights,
            config: file.config,
        })
    }

    /// Autoregressive sampling of up to `max_len` tokens.
    ///
    /// The context is the last `window` tokens, left-padded. `temperature = 0`
    /// is greedy (ties go to the lowest id). Generation stops early when the
    /// pad symbol is produced; pad is not part of the output.
    pub fn generate(&self, prompt: &[TokenId], max_len: usize, temperature: f64, seed: u64) -> Result<Vec<TokenId>> {
        if max_len == 0 {
            return Err(Error::InvalidConfig("max_len must be ≥ 1".into()));
        }
        if let Some(&id) = prompt.iter().find(|&&t| t as usize >= self.vocab.len()) {
            return Err(Error::UnknownToken {
                id,
                vocab: self.vocab.len(),
            });
        }
        let eval = self.evaluator();
        let mut rng = SeededRng::new(seed, Stream::Sampling, 0);
        let pad = self.vocab.pad_id();
        let mut context: Vec<TokenId> = vec![pad; self.window];
        context.extend_from_slice(prompt);
        let mut out = Vec::with_capacity(max_len);
        for _ in 0..max_len {
            let window = &context[context.len() - self.window..];
            let logits = eval.logits(window)?;
            let next = if temperature <= 0.0 {
                argmax(&logits)
            } else {
                let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
                sample(&softmax(&scaled), rng.uniform())
            } as TokenId;
            if next == pad {
                break;
            }
            out.push(next);
            context.push(next);
        }
        Ok(out)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn sample(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Plain forward evaluation with the weights laid out once.
pub struct Evaluator<'a> {
    params: &'a ModelParams,
    fwd: Forward<'a, f64>,
}

impl Evaluator<'_> {
    pub fn params(&self) -> &ModelParams {
        self.params
    }

    pub fn embed(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        self.params.check_window(tokens)?;
        Ok(self.fwd.embed(tokens))
    }

    pub fn encode_embedded(&self, x: &[f64]) -> Vec<f64> {
        self.fwd.encode_embedded(&mut Plain, x)
    }

    pub fn decode(&self, z: &[f64]) -> Vec<f64> {
        self.fwd.decode(&mut Plain, z)
    }

    pub fn encode(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        let x = self.embed(tokens)?;
        Ok(self.encode_embedded(&x))
    }

    pub fn logits(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        let z = self.encode(tokens)?;
        Ok(self.decode(&z))
    }

    /// Cross-entropy of one example.
    pub fn nll(&self, ex: &Example) -> Result<f64> {
        let logits = self.logits(&ex.window)?;
        if ex.target as usize >= logits.len() {
            return Err(Error::UnknownToken {
                id: ex.target,
                vocab: logits.len(),
            });
        }
        Ok(cross_entropy(&mut Plain, &logits, ex.target as usize))
    }

    /// Mean cross-entropy over a batch.
    pub fn mean_nll(&self, batch: &[Example]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut total = 0.0;
        for ex in batch {
            total += self.nll(ex)?;
        }
        Ok(total / batch.len() as f64)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightEntry {
    shape: [usize; 2],
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    vocab: Vec<String>,
    window: usize,
    dims: Dims,
    weights: BTreeMap<String, WeightEntry>,
    config: TrainConfig,
}
