//! Transformer-encoder sequence classifier.
//!
//! Token and learned position embeddings feed a stack of post-norm encoder
//! blocks (multi-head self-attention, GELU feed-forward, residuals, layer
//! norms). The final hidden state at position 0 (`[CLS]`) goes through a
//! linear head to produce one logit per class.
//!
//! Attention only ever sees the window `0..=last unmasked position`; any
//! masked key inside that window gets an additive `-1e9` bias. Positions past
//! the window never enter the computation, so padding content cannot change
//! the logits.

use std::fs;
use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cvss::Metric;
use crate::digest::{sha256_hex, tensors_digest, write_atomic};
use crate::numerics::{softmax, NumericsError, Tape, Tensor, Var, LAYER_NORM_EPS};
use crate::textprep::TokenSequence;

const MASKED_SCORE: f64 = -1e9;
const INIT_STD: f64 = 0.02;
const CHECKPOINT_MAGIC: &str = "CVSSLENS-CHECKPOINT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("sequence length {found} does not match model length {expected}")]
    SeqLenMismatch { expected: usize, found: usize },
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// 2 layers, hidden 64, 4 heads, FFN 128.
    Desk,
    /// 4 layers, hidden 512, 8 heads, FFN 2048.
    PaperSmall,
}

impl std::str::FromStr for Preset {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper-small" => Ok(Preset::PaperSmall),
            other => Err(ModelError::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn preset(preset: Preset, vocab_size: usize, num_classes: usize, seed: u64) -> ModelConfig {
        let (hidden_dim, num_layers, num_heads, ffn_dim) = match preset {
            Preset::Desk => (64, 2, 4, 128),
            Preset::PaperSmall => (512, 4, 8, 2048),
        };
        ModelConfig {
            vocab_size,
            seq_len: crate::textprep::DEFAULT_SEQ_LEN,
            hidden_dim,
            num_layers,
            num_heads,
            ffn_dim,
            num_classes,
            dropout_rate: 0.1,
            seed,
        }
    }

    pub fn for_metric(preset: Preset, vocab_size: usize, metric: Metric, seed: u64) -> ModelConfig {
        ModelConfig::preset(preset, vocab_size, metric.num_classes(), seed)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.num_heads == 0 || !self.hidden_dim.is_multiple_of(self.num_heads) {
            return bad("hidden_dim must be divisible by num_heads");
        }
        if self.vocab_size == 0 || self.seq_len < 2 || self.ffn_dim == 0 || self.num_layers == 0 {
            return bad("dimensions must be positive and seq_len >= 2");
        }
        if !(2..=4).contains(&self.num_classes) {
            return bad("num_classes must be 2, 3 or 4");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.hidden_dim / self.num_heads
    }
}

/// Which parameters receive gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trainable {
    Nothing,
    HeadOnly,
    All,
}

const PER_LAYER: usize = 16;
const EMB_TOKEN: usize = 0;
const EMB_POSITION: usize = 1;
const EMB_LN: usize = 2;
const FIRST_LAYER: usize = 4;

// Offsets inside one encoder block.
const Q_W: usize = 0;
const K_W: usize = 2;
const V_W: usize = 4;
const O_W: usize = 6;
const LN1: usize = 8;
const FF1_W: usize = 10;
const FF2_W: usize = 12;
const LN2: usize = 14;

fn param_layout(c: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let (h, f) = (c.hidden_dim, c.ffn_dim);
    let mut out = vec![
        ("embeddings.token".to_string(), vec![c.vocab_size, h]),
        ("embeddings.position".to_string(), vec![c.seq_len, h]),
        ("embeddings.norm.gain".to_string(), vec![h]),
        ("embeddings.norm.bias".to_string(), vec![h]),
    ];
    for l in 0..c.num_layers {
        let p = |s: &str| format!("layer{l}.{s}");
        out.extend([
            (p("attention.query.weight"), vec![h, h]),
            (p("attention.query.bias"), vec![h]),
            (p("attention.key.weight"), vec![h, h]),
            (p("attention.key.bias"), vec![h]),
            (p("attention.value.weight"), vec![h, h]),
            (p("attention.value.bias"), vec![h]),
            (p("attention.output.weight"), vec![h, h]),
            (p("attention.output.bias"), vec![h]),
            (p("attention.norm.gain"), vec![h]),
            (p("attention.norm.bias"), vec![h]),
            (p("ffn.input.weight"), vec![h, f]),
            (p("ffn.input.bias"), vec![f]),
            (p("ffn.output.weight"), vec![f, h]),
            (p("ffn.output.bias"), vec![h]),
            (p("ffn.norm.gain"), vec![h]),
            (p("ffn.norm.bias"), vec![h]),
        ]);
    }
    out.push(("head.weight".to_string(), vec![h, c.num_classes]));
    out.push(("head.bias".to_string(), vec![c.num_classes]));
    out
}

/// Deterministic 64-bit seed from a list of parts (splitmix64 mixing).
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut state = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        state ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15);
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        state = z ^ (z >> 31);
    }
    state
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderClassifier {
    config: ModelConfig,
    names: Vec<String>,
    params: Vec<Tensor>,
}

/// Logits plus per-layer, per-head attention probabilities over the window.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Vec<f64>,
    pub attention: Vec<Vec<Tensor>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub confidence: f64,
}

/// Gradients of one sample's loss.
pub struct SampleGradients {
    pub loss: f64,
    pub logits: Vec<f64>,
    /// Indexed like [`EncoderClassifier::params`]; embedding tables are `None`
    /// here and reported sparsely below.
    pub dense: Vec<Option<Vec<f64>>>,
    pub token_rows: Vec<(usize, Vec<f64>)>,
    pub position_rows: Option<Vec<f64>>,
}

struct Dropout {
    rate: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    fn apply<'a>(&mut self, tape: &mut Tape<'a>, x: Var) -> Result<Var, NumericsError> {
        let keep = 1.0 - self.rate;
        let n = tape.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        tape.mul_const(x, mask)
    }
}

/// Vars recorded on a tape for one forward pass.
pub struct Bound {
    vars: Vec<Option<Var>>,
}

/// Tape outputs of the encoder.
pub struct Encoded {
    pub logits: Var,
    pub attention: Vec<Vec<Var>>,
}

/// Argmax with ties going to the lowest index; confidence is the softmax
/// probability of that class.
pub fn predict_from_logits(logits: &[f64]) -> Prediction {
    let probs = softmax(logits);
    let mut class = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[class] {
            class = i;
        }
    }
    Prediction {
        class,
        confidence: probs[class],
    }
}

/// `-log softmax(logits)[target]`.
pub fn cross_entropy_loss(logits: &[f64], target: usize) -> Result<f64, ModelError> {
    if target >= logits.len() {
        return Err(ModelError::TargetOutOfRange {
            target,
            classes: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    Ok(lse - logits[target])
}

impl EncoderClassifier {
    /// Seeded truncated-normal weights (σ = 0.02, cut at 2σ), zero biases,
    /// unit layer-norm gains.
    pub fn new(config: ModelConfig) -> Result<EncoderClassifier, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let layout = param_layout(&config);
        let mut names = Vec::with_capacity(layout.len());
        let mut params = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let n: usize = shape.iter().product();
            let data: Vec<f64> = if name.ends_with(".gain") {
                vec![1.0; n]
            } else if name.ends_with(".bias") {
                vec![0.0; n]
            } else {
                (0..n)
                    .map(|_| loop {
                        let v: f64 = normal.sample(&mut rng);
                        if v.abs() <= 2.0 * INIT_STD {
                            break v;
                        }
                    })
                    .collect()
            };
            names.push(name);
            params.push(Tensor::new(shape, data)?);
        }
        Ok(EncoderClassifier {
            config,
            names,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn head_index(&self) -> usize {
        FIRST_LAYER + PER_LAYER * self.config.num_layers
    }

    /// `true` for every tensor outside the classification head.
    pub fn encoder_mask(&self) -> Vec<bool> {
        (0..self.params.len()).map(|i| i < self.head_index()).collect()
    }

    /// Digest of every encoder tensor (head excluded).
    pub fn encoder_digest(&self) -> String {
        tensors_digest(&self.params[..self.head_index()])
    }

    pub fn params_digest(&self) -> String {
        tensors_digest(&self.params)
    }

    fn check_seq(&self, seq: &TokenSequence) -> Result<usize, ModelError> {
        if seq.ids.len() != self.config.seq_len || seq.mask.len() != self.config.seq_len {
            return Err(ModelError::SeqLenMismatch {
                expected: self.config.seq_len,
                found: seq.ids.len(),
            });
        }
        if let Some(&bad) = seq.ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(ModelError::VocabMismatch(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let window = seq.mask.iter().rposition(|&m| m == 1).map_or(1, |p| p + 1);
        Ok(window)
    }

    /// Token plus position embeddings of the window, `[window, hidden]`.
    pub fn input_embeddings(&self, seq: &TokenSequence) -> Result<Tensor, ModelError> {
        let n = self.check_seq(seq)?;
        let h = self.config.hidden_dim;
        let (tok, pos) = (&self.params[EMB_TOKEN], &self.params[EMB_POSITION]);
        let mut data = Vec::with_capacity(n * h);
        for (p, &id) in seq.ids[..n].iter().enumerate() {
            data.extend(tok.row(id as usize).iter().zip(pos.row(p)).map(|(a, b)| a + b));
        }
        Ok(Tensor::new(vec![n, h], data)?)
    }

    fn key_mask(seq: &TokenSequence, n: usize) -> Option<Tensor> {
        if seq.mask[..n].iter().all(|&m| m == 1) {
            return None;
        }
        let mut t = Tensor::zeros(vec![n, n]);
        for r in 0..n {
            for (c, &m) in seq.mask[..n].iter().enumerate() {
                if m == 0 {
                    t.data_mut()[r * n + c] = MASKED_SCORE;
                }
            }
        }
        Some(t)
    }

    /// Records every non-embedding parameter on `tape`.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>, trainable: Trainable) -> Bound {
        let head = self.head_index();
        let vars = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i == EMB_TOKEN || i == EMB_POSITION {
                    return None;
                }
                let grad = match trainable {
                    Trainable::Nothing => false,
                    Trainable::HeadOnly => i >= head,
                    Trainable::All => true,
                };
                Some(tape.param(p, grad))
            })
            .collect();
        Bound { vars }
    }

    /// Runs the encoder stack and head on summed input embeddings `x`.
    pub fn encode<'a>(
        &'a self,
        tape: &mut Tape<'a>,
        bound: &Bound,
        x: Var,
        seq: &TokenSequence,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Encoded, ModelError> {
        let cfg = &self.config;
        let n = tape.value(x).rows();
        let v = |i: usize| bound.vars[i].expect("bound parameter");
        let key_mask = Self::key_mask(seq, n);
        let mut drop = dropout.map(|rng| Dropout {
            rate: cfg.dropout_rate,
            rng: ChaCha8Rng::seed_from_u64(rng.random()),
        });
        let scale = 1.0 / (cfg.head_dim() as f64).sqrt();

        let mut h = tape.layer_norm(x, v(EMB_LN), v(EMB_LN + 1), LAYER_NORM_EPS)?;
        let mut attention = Vec::with_capacity(cfg.num_layers);
        for l in 0..cfg.num_layers {
            let b = FIRST_LAYER + PER_LAYER * l;
            let proj = |tape: &mut Tape<'a>, w: usize, input: Var| -> Result<Var, NumericsError> {
                let y = tape.matmul(input, v(b + w))?;
                tape.add_row(y, v(b + w + 1))
            };
            let q = proj(tape, Q_W, h)?;
            let k = proj(tape, K_W, h)?;
            let val = proj(tape, V_W, h)?;
            let d = cfg.head_dim();
            let mut heads = Vec::with_capacity(cfg.num_heads);
            let mut maps = Vec::with_capacity(cfg.num_heads);
            for hd in 0..cfg.num_heads {
                let qh = tape.slice_cols(q, hd * d, (hd + 1) * d)?;
                let kh = tape.slice_cols(k, hd * d, (hd + 1) * d)?;
                let vh = tape.slice_cols(val, hd * d, (hd + 1) * d)?;
                let raw = tape.matmul_t(qh, kh)?;
                let mut scores = tape.scale(raw, scale);
                if let Some(m) = &key_mask {
                    scores = tape.add_const(scores, m)?;
                }
                let probs = tape.softmax(scores);
                maps.push(probs);
                heads.push(tape.matmul(probs, vh)?);
            }
            attention.push(maps);
            let ctx = tape.concat_cols(&heads)?;
            let mut attn_out = proj(tape, O_W, ctx)?;
            if let Some(dr) = drop.as_mut() {
                attn_out = dr.apply(tape, attn_out)?;
            }
            let res = tape.add(h, attn_out)?;
            h = tape.layer_norm(res, v(b + LN1), v(b + LN1 + 1), LAYER_NORM_EPS)?;

            let inner = proj(tape, FF1_W, h)?;
            let act = tape.gelu(inner);
            let mut ffn_out = proj(tape, FF2_W, act)?;
            if let Some(dr) = drop.as_mut() {
                ffn_out = dr.apply(tape, ffn_out)?;
            }
            let res = tape.add(h, ffn_out)?;
            h = tape.layer_norm(res, v(b + LN2), v(b + LN2 + 1), LAYER_NORM_EPS)?;
        }
        let cls = tape.slice_rows(h, 0, 1)?;
        let head = self.head_index();
        let y = tape.matmul(cls, v(head))?;
        let logits = tape.add_row(y, v(head + 1))?;
        Ok(Encoded { logits, attention })
    }

    /// Inference forward pass (no dropout).
    pub fn forward(&self, seq: &TokenSequence) -> Result<ForwardOutput, ModelError> {
        let x_val = self.input_embeddings(seq)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Trainable::Nothing);
        let x = tape.leaf(x_val, false);
        let enc = self.encode(&mut tape, &bound, x, seq, None)?;
        Ok(ForwardOutput {
            logits: tape.value(enc.logits).data().to_vec(),
            attention: enc
                .attention
                .iter()
                .map(|layer| layer.iter().map(|v| tape.value(*v).clone()).collect())
                .collect(),
        })
    }

    pub fn logits(&self, seq: &TokenSequence) -> Result<Vec<f64>, ModelError> {
        let x_val = self.input_embeddings(seq)?;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, Trainable::Nothing);
        let x = tape.leaf(x_val, false);
        let enc = self.encode(&mut tape, &bound, x, seq, None)?;
        Ok(tape.value(enc.logits).data().to_vec())
    }

    pub fn predict(&self, seq: &TokenSequence) -> Result<Prediction, ModelError> {
        Ok(predict_from_logits(&self.logits(seq)?))
    }

    /// Loss and gradients for one labelled sample. `dropout_seed` enables
    /// training-mode dropout.
    pub fn sample_gradients(
        &self,
        seq: &TokenSequence,
        target: usize,
        trainable: Trainable,
        dropout_seed: Option<u64>,
    ) -> Result<SampleGradients, ModelError> {
        if target >= self.config.num_classes {
            return Err(ModelError::TargetOutOfRange {
                target,
                classes: self.config.num_classes,
            });
        }
        let n = self.check_seq(seq)?;
        let h = self.config.hidden_dim;
        let embed_grad = trainable == Trainable::All;
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, trainable);

        let ids: Vec<usize> = seq.ids[..n].iter().map(|&i| i as usize).collect();
        let mut tok = Vec::with_capacity(n * h);
        for &id in &ids {
            tok.extend_from_slice(self.params[EMB_TOKEN].row(id));
        }
        let pos = self.params[EMB_POSITION].data()[..n * h].to_vec();
        let tok_var = tape.leaf(Tensor::new(vec![n, h], tok)?, embed_grad);
        let pos_var = tape.leaf(Tensor::new(vec![n, h], pos)?, embed_grad);
        let x = tape.add(tok_var, pos_var)?;

        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let enc = self.encode(&mut tape, &bound, x, seq, rng.as_mut())?;
        let loss_var = tape.cross_entropy(enc.logits, target)?;
        let loss = tape.value(loss_var).data()[0];
        let logits = tape.value(enc.logits).data().to_vec();
        let mut grads = tape.backward(loss_var)?;

        let dense = bound
            .vars
            .iter()
            .map(|v| v.and_then(|v| grads.take(v)))
            .collect();
        let mut token_rows = Vec::new();
        let mut position_rows = None;
        if embed_grad {
            if let Some(g) = grads.take(tok_var) {
                token_rows = ids
                    .iter()
                    .zip(g.chunks(h))
                    .map(|(&id, row)| (id, row.to_vec()))
                    .collect();
            }
            position_rows = grads.take(pos_var);
        }
        Ok(SampleGradients {
            loss,
            logits,
            dense,
            token_rows,
            position_rows,
        })
    }
}

/// Sums per-sample gradients into dense per-tensor buffers, in call order.
pub struct GradAccumulator {
    sums: Vec<Option<Vec<f64>>>,
    shapes: Vec<usize>,
    hidden: usize,
    count: usize,
}

impl GradAccumulator {
    pub fn new(model: &EncoderClassifier) -> GradAccumulator {
        GradAccumulator {
            sums: vec![None; model.params.len()],
            shapes: model.params.iter().map(Tensor::len).collect(),
            hidden: model.config.hidden_dim,
            count: 0,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add(&mut self, g: &SampleGradients) {
        self.count += 1;
        for (i, d) in g.dense.iter().enumerate() {
            if let Some(d) = d {
                let slot = self.sums[i].get_or_insert_with(|| vec![0.0; self.shapes[i]]);
                for (s, x) in slot.iter_mut().zip(d) {
                    *s += x;
                }
            }
        }
        let h = self.hidden;
        if !g.token_rows.is_empty() {
            let slot = self.sums[EMB_TOKEN].get_or_insert_with(|| vec![0.0; self.shapes[EMB_TOKEN]]);
            for (id, row) in &g.token_rows {
                for (s, x) in slot[id * h..(id + 1) * h].iter_mut().zip(row) {
                    *s += x;
                }
            }
        }
        if let Some(p) = &g.position_rows {
            let slot =
                self.sums[EMB_POSITION].get_or_insert_with(|| vec![0.0; self.shapes[EMB_POSITION]]);
            for (s, x) in slot.iter_mut().zip(p) {
                *s += x;
            }
        }
    }

    /// Mean gradients; tensors that never received a gradient stay `None`.
    pub fn mean(self) -> Vec<Option<Vec<f64>>> {
        let n = self.count.max(1) as f64;
        self.sums
            .into_iter()
            .map(|s| {
                s.map(|mut v| {
                    v.iter_mut().for_each(|x| *x /= n);
                    v
                })
            })
            .collect()
    }
}

/// Provenance stored alongside trained weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub epochs_frozen: usize,
    pub epochs_joint: usize,
    pub seed: u64,
    pub batch_size: usize,
    pub optimizer: String,
    pub learning_rate: f64,
    pub manifest_digest: String,
}

/// A trained per-metric classifier with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub metric: Metric,
    pub model: EncoderClassifier,
    pub vocab_digest: String,
    pub training: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format_version: u32,
    metric: Metric,
    config: ModelConfig,
    vocab_digest: String,
    training: TrainingMeta,
    tensors: Vec<TensorEntry>,
    data_digest: String,
}

impl ModelCheckpoint {
    /// Magic line, header length line, JSON header line, then every tensor
    /// as little-endian `f64` in manifest order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut data = Vec::with_capacity(self.model.num_parameters() * 8);
        for t in &self.model.params {
            for v in t.data() {
                data.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = CheckpointHeader {
            format_version: CHECKPOINT_VERSION,
            metric: self.metric,
            config: self.model.config.clone(),
            vocab_digest: self.vocab_digest.clone(),
            training: self.training.clone(),
            tensors: self
                .model
                .names
                .iter()
                .zip(&self.model.params)
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
            data_digest: sha256_hex(&data),
        };
        let json = serde_json::to_string(&header).expect("header serializes");
        let mut out = format!("{CHECKPOINT_MAGIC}\n{}\n{json}\n", json.len()).into_bytes();
        out.extend_from_slice(&data);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelCheckpoint, ModelError> {
        let corrupt = |m: &str| ModelError::CorruptCheckpoint(m.to_string());
        let mut rest = bytes
            .strip_prefix(format!("{CHECKPOINT_MAGIC}\n").as_bytes())
            .ok_or_else(|| corrupt("bad magic"))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("missing header length"))?;
        let header_len: usize = std::str::from_utf8(&rest[..nl])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("bad header length"))?;
        rest = &rest[nl + 1..];
        if rest.len() < header_len + 1 || rest[header_len] != b'\n' {
            return Err(corrupt("truncated header"));
        }
        let value: serde_json::Value = serde_json::from_slice(&rest[..header_len])
            .map_err(|e| corrupt(&format!("header: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| corrupt("missing format_version"))? as u32;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header: CheckpointHeader =
            serde_json::from_value(value).map_err(|e| corrupt(&format!("header: {e}")))?;
        let data = &rest[header_len + 1..];
        if sha256_hex(data) != header.data_digest {
            return Err(corrupt("tensor data digest mismatch or truncated data"));
        }
        header.config.validate()?;
        let layout = param_layout(&header.config);
        if layout.len() != header.tensors.len()
            || layout
                .iter()
                .zip(&header.tensors)
                .any(|((n, s), e)| *n != e.name || *s != e.shape)
        {
            return Err(corrupt("tensor manifest does not match config"));
        }
        let total: usize = layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if data.len() != total * 8 {
            return Err(corrupt("tensor data length mismatch"));
        }
        let mut floats = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut names = Vec::with_capacity(layout.len());
        let mut params = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let n = shape.iter().product();
            params.push(Tensor::new(shape, floats.by_ref().take(n).collect())?);
            names.push(name);
        }
        Ok(ModelCheckpoint {
            metric: header.metric,
            model: EncoderClassifier {
                config: header.config,
                names,
                params,
            },
            vocab_digest: header.vocab_digest,
            training: header.training,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ModelCheckpoint, ModelError> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        ModelCheckpoint::from_bytes(&bytes)
    }

    /// Fails unless this checkpoint was trained against `vocab_digest`.
    pub fn check_vocab(&self, vocab_digest: &str) -> Result<(), ModelError> {
        if self.vocab_digest != vocab_digest {
            return Err(ModelError::VocabMismatch(format!(
                "{} checkpoint expects vocabulary {}, got {}",
                self.metric, self.vocab_digest, vocab_digest
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{tokenize_to, Vocabulary};

    fn tiny(seed: u64) -> EncoderClassifier {
        EncoderClassifier::new(ModelConfig {
            vocab_size: 12,
            seq_len: 10,
            hidden_dim: 8,
            num_layers: 2,
            num_heads: 2,
            ffn_dim: 16,
            num_classes: 3,
            dropout_rate: 0.1,
            seed,
        })
        .unwrap()
    }

    fn seq(ids: &[u32], len: usize) -> TokenSequence {
        let mut full = vec![2];
        full.extend_from_slice(ids);
        full.push(3);
        let real = full.len();
        full.resize(len, 0);
        let mut mask = vec![1; real];
        mask.resize(len, 0);
        TokenSequence {
            surfaces: full.iter().map(|i| i.to_string()).collect(),
            char_spans: vec![None; len],
            ids: full,
            mask,
            truncated: false,
        }
    }

    #[test]
    fn presets() {
        let d = ModelConfig::preset(Preset::Desk, 300, 4, 1);
        assert_eq!((d.num_layers, d.hidden_dim, d.num_heads, d.ffn_dim), (2, 64, 4, 128));
        let p = ModelConfig::preset(Preset::PaperSmall, 300, 2, 1);
        assert_eq!((p.num_layers, p.hidden_dim, p.num_heads, p.ffn_dim), (4, 512, 8, 2048));
        assert_eq!(p.seq_len, 128);
        assert!(d.validate().is_ok() && p.validate().is_ok());
        let mut bad = d.clone();
        bad.num_heads = 3;
        assert!(bad.validate().is_err());
        bad = d;
        bad.num_classes = 5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn init_is_seeded_and_truncated() {
        let a = tiny(5);
        assert_eq!(a, tiny(5));
        assert_ne!(a.params_digest(), tiny(6).params_digest());
        for (n, t) in a.param_names().iter().zip(a.params()) {
            if n.ends_with(".gain") {
                assert!(t.data().iter().all(|&x| x == 1.0));
            } else if n.ends_with(".bias") {
                assert!(t.data().iter().all(|&x| x == 0.0));
            } else {
                assert!(t.data().iter().all(|x| x.abs() <= 0.04));
            }
        }
    }

    #[test]
    fn logits_shape_and_attention_rows() {
        let m = tiny(1);
        let out = m.forward(&seq(&[5, 6, 7], 10)).unwrap();
        assert_eq!(out.logits.len(), 3);
        let p: f64 = softmax(&out.logits).iter().sum();
        assert!((p - 1.0).abs() < 1e-12);
        assert_eq!(out.attention.len(), 2);
        for layer in &out.attention {
            assert_eq!(layer.len(), 2);
            for map in layer {
                assert_eq!(map.shape(), &[5, 5]);
                for r in 0..5 {
                    assert!((map.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn interior_mask_gets_zero_weight() {
        let m = tiny(2);
        let mut s = seq(&[5, 6, 7], 10);
        s.mask[2] = 0;
        let out = m.forward(&s).unwrap();
        for layer in &out.attention {
            for map in layer {
                for r in 0..5 {
                    assert_eq!(map.get(r, 2), 0.0);
                    assert!((map.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn padding_tail_is_ignored() {
        let m = tiny(3);
        let a = seq(&[5, 6], 10);
        let mut b = a.clone();
        for i in 4..10 {
            b.ids[i] = 11;
        }
        assert_eq!(m.logits(&a).unwrap(), m.logits(&b).unwrap());
    }

    #[test]
    fn errors() {
        let m = tiny(3);
        assert!(matches!(
            m.forward(&seq(&[5], 9)),
            Err(ModelError::SeqLenMismatch { .. })
        ));
        assert!(matches!(
            m.forward(&seq(&[50], 10)),
            Err(ModelError::VocabMismatch(_))
        ));
        assert!(matches!(
            m.sample_gradients(&seq(&[5], 10), 3, Trainable::All, None),
            Err(ModelError::TargetOutOfRange { .. })
        ));
        assert!(matches!(
            cross_entropy_loss(&[0.0, 0.0], 2),
            Err(ModelError::TargetOutOfRange { .. })
        ));
    }

    #[test]
    fn prediction_rules() {
        let p = predict_from_logits(&[2.0, 1.0, 0.0]);
        let e = std::f64::consts::E;
        assert_eq!(p.class, 0);
        assert!((p.confidence - e * e / (e * e + e + 1.0)).abs() < 1e-15);
        assert_eq!(predict_from_logits(&[1.0, 1.0]).class, 0);
        assert_eq!(predict_from_logits(&[0.0, 3.0, 3.0]).class, 1);
    }

    #[test]
    fn loss_values() {
        assert!((cross_entropy_loss(&[0.0, 0.0], 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for margin in [1.0, 5.0, 20.0, 40.0] {
            let l = cross_entropy_loss(&[margin, 0.0], 0).unwrap();
            assert!(l < prev && l >= 0.0);
            prev = l;
        }
        assert!(prev < 1e-15);
        let logits = [0.3, -1.2, 2.5];
        let hand = -(2.5f64.exp() / (0.3f64.exp() + (-1.2f64).exp() + 2.5f64.exp())).ln();
        assert!((cross_entropy_loss(&logits, 2).unwrap() - hand).abs() < 1e-12);
    }

    #[test]
    fn head_only_leaves_encoder_without_grads() {
        let m = tiny(4);
        let g = m
            .sample_gradients(&seq(&[5, 6], 10), 1, Trainable::HeadOnly, None)
            .unwrap();
        let mask = m.encoder_mask();
        for (i, d) in g.dense.iter().enumerate() {
            assert_eq!(d.is_some(), !mask[i], "{}", m.param_names()[i]);
        }
        assert!(g.token_rows.is_empty() && g.position_rows.is_none());
    }

    #[test]
    fn dropout_changes_training_logits_only_when_enabled() {
        let m = tiny(4);
        let s = seq(&[5, 6, 7, 8], 10);
        let clean = m.logits(&s).unwrap();
        let g0 = m.sample_gradients(&s, 0, Trainable::All, None).unwrap();
        assert_eq!(g0.logits, clean);
        let g1 = m.sample_gradients(&s, 0, Trainable::All, Some(9)).unwrap();
        let g2 = m.sample_gradients(&s, 0, Trainable::All, Some(9)).unwrap();
        assert_ne!(g1.logits, clean);
        assert_eq!(g1.logits, g2.logits);
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let ckpt = ModelCheckpoint {
            metric: Metric::AttackVector,
            model: EncoderClassifier::new(ModelConfig {
                num_classes: 4,
                ..tiny(8).config().clone()
            })
            .unwrap(),
            vocab_digest: "abc".into(),
            training: TrainingMeta {
                epochs_frozen: 3,
                epochs_joint: 3,
                seed: 7,
                ..Default::default()
            },
        };
        let bytes = ckpt.to_bytes();
        let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.model.params_digest(), ckpt.model.params_digest());

        for cut in [0, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                ModelCheckpoint::from_bytes(&bytes[..cut]),
                Err(ModelError::CorruptCheckpoint(_))
            ));
        }
        let text = String::from_utf8_lossy(&bytes).replace("\"format_version\":1", "\"format_version\":9");
        let bumped: Vec<u8> = {
            let header_end = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(2).unwrap().0;
            let mut v = text.as_bytes()[..header_end + 1].to_vec();
            v.extend_from_slice(&bytes[header_end + 1..]);
            v
        };
        assert!(matches!(
            ModelCheckpoint::from_bytes(&bumped),
            Err(ModelError::VersionMismatch { found: 9, .. })
        ));
        assert!(ckpt.check_vocab("abc").is_ok());
        assert!(matches!(ckpt.check_vocab("abd"), Err(ModelError::VocabMismatch(_))));
    }

    #[test]
    fn works_with_real_tokenizer() {
        let vocab = Vocabulary::build(["remote attackers execute code"], 300).unwrap();
        let cfg = ModelConfig {
            seq_len: 16,
            ..ModelConfig::preset(Preset::Desk, vocab.len(), 2, 3)
        };
        let m = EncoderClassifier::new(cfg).unwrap();
        let s = tokenize_to("Remote attackers", &vocab, 16).unwrap();
        let p = m.predict(&s).unwrap();
        assert!(p.class < 2 && p.confidence >= 0.5);
    }
}
