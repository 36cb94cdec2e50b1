//! Decoder-only transformer over per-step feature matrices.
//!
//! Every (step, user) row is one token. Rows are embedded with an affine
//! map, offset by a learnable positional row, flattened in step-major order,
//! and passed through pre-norm decoder blocks whose attention lets a token
//! read every token from its own or an earlier step. A final affine map
//! projects back to feature width; the output at step `t` predicts the
//! features at step `t + 1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    decode_prediction, encode_snapshot, slice_prediction, FeatureLayout, FeatureSequence,
    PredictionBlocks,
};
use crate::numerics::{sigmoid, Tape, Tensor, Var};
use crate::SeededRng;

/// Link threshold used when a predicted step is fed back as input.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PositionalMode {
    /// One row per (step, user) pair.
    #[default]
    PerTimeUser,
    /// One row per step, shared by all users.
    PerTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgptConfig {
    pub layout: FeatureLayout,
    pub d_h: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Longest input sequence the positional table covers.
    pub max_steps: usize,
    #[serde(default)]
    pub positional: PositionalMode,
}

impl EgptConfig {
    pub fn new(layout: FeatureLayout, d_h: usize, layers: usize) -> Self {
        EgptConfig {
            layout,
            d_h,
            layers,
            heads: 4,
            dropout: 0.1,
            max_steps: 16,
            positional: PositionalMode::PerTimeUser,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.layout.validate()?;
        if self.d_h == 0 {
            return Err(Error::Config("d_h must be positive".into()));
        }
        if self.heads == 0 || self.d_h % self.heads != 0 {
            return Err(Error::Config(format!("d_h ({}) must be divisible by heads ({})", self.d_h, self.heads)));
        }
        if self.layers == 0 {
            return Err(Error::Config("need at least one decoder layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.max_steps < 2 {
            return Err(Error::Config("max_steps must be at least 2".into()));
        }
        Ok(())
    }

    fn positional_rows(&self) -> usize {
        match self.positional {
            PositionalMode::PerTimeUser => self.max_steps * self.layout.users,
            PositionalMode::PerTime => self.max_steps,
        }
    }

    fn head_width(&self) -> usize {
        self.d_h / self.heads
    }
}

/// One decoder block. Attention projections carry no bias; the attention
/// output and both feed-forward maps do.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub attn_norm_gain: T,
    pub attn_norm_bias: T,
    pub query: T,
    pub key: T,
    pub value: T,
    pub attn_out_weight: T,
    pub attn_out_bias: T,
    pub ffn_norm_gain: T,
    pub ffn_norm_bias: T,
    pub ffn_in_weight: T,
    pub ffn_in_bias: T,
    pub ffn_out_weight: T,
    pub ffn_out_bias: T,
}

const LAYER_FIELDS: [&str; 13] = [
    "attn_norm.gain",
    "attn_norm.bias",
    "attn.query",
    "attn.key",
    "attn.value",
    "attn.out.weight",
    "attn.out.bias",
    "ffn_norm.gain",
    "ffn_norm.bias",
    "ffn.in.weight",
    "ffn.in.bias",
    "ffn.out.weight",
    "ffn.out.bias",
];

impl<T> LayerParams<T> {
    fn refs(&self) -> [&T; 13] {
        [
            &self.attn_norm_gain,
            &self.attn_norm_bias,
            &self.query,
            &self.key,
            &self.value,
            &self.attn_out_weight,
            &self.attn_out_bias,
            &self.ffn_norm_gain,
            &self.ffn_norm_bias,
            &self.ffn_in_weight,
            &self.ffn_in_bias,
            &self.ffn_out_weight,
            &self.ffn_out_bias,
        ]
    }

    fn from_iter(it: &mut impl Iterator<Item = T>) -> Option<Self> {
        Some(LayerParams {
            attn_norm_gain: it.next()?,
            attn_norm_bias: it.next()?,
            query: it.next()?,
            key: it.next()?,
            value: it.next()?,
            attn_out_weight: it.next()?,
            attn_out_bias: it.next()?,
            ffn_norm_gain: it.next()?,
            ffn_norm_bias: it.next()?,
            ffn_in_weight: it.next()?,
            ffn_in_bias: it.next()?,
            ffn_out_weight: it.next()?,
            ffn_out_bias: it.next()?,
        })
    }
}

/// All model parameters. `T` is [`Tensor`] for stored weights and [`Var`]
/// once bound to a tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub embed_weight: T,
    pub embed_bias: T,
    pub positional: T,
    pub layers: Vec<LayerParams<T>>,
    pub final_norm_gain: T,
    pub final_norm_bias: T,
    pub out_weight: T,
    pub out_bias: T,
}

impl<T> Params<T> {
    /// Every parameter with its checkpoint name, in a fixed order.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut out = Vec::new();
        out.push(("embed.weight".into(), &self.embed_weight));
        out.push(("embed.bias".into(), &self.embed_bias));
        out.push(("positional".into(), &self.positional));
        for (l, layer) in self.layers.iter().enumerate() {
            for (field, value) in LAYER_FIELDS.iter().zip(layer.refs()) {
                out.push((format!("layers.{l}.{field}"), value));
            }
        }
        out.push(("final_norm.gain".into(), &self.final_norm_gain));
        out.push(("final_norm.bias".into(), &self.final_norm_bias));
        out.push(("out.weight".into(), &self.out_weight));
        out.push(("out.bias".into(), &self.out_bias));
        out
    }

    pub fn values(&self) -> Vec<&T> {
        self.named().into_iter().map(|(_, v)| v).collect()
    }

    pub fn count(&self) -> usize {
        7 + LAYER_FIELDS.len() * self.layers.len()
    }

    /// Rebuilds the structure from values in [`Params::named`] order.
    pub fn from_values<U>(layers: usize, values: Vec<U>) -> Result<Params<U>> {
        let expected = 7 + LAYER_FIELDS.len() * layers;
        if values.len() != expected {
            return Err(Error::Layout(format!("expected {expected} parameter tensors, got {}", values.len())));
        }
        let mut it = values.into_iter();
        let mut next = || it.next().expect("length checked");
        let embed_weight = next();
        let embed_bias = next();
        let positional = next();
        let mut rest: Vec<U> = (0..LAYER_FIELDS.len() * layers).map(|_| next()).collect();
        let tail: Vec<U> = (0..4).map(|_| next()).collect();
        let mut layer_iter = rest.drain(..);
        let layers = (0..layers)
            .map(|_| LayerParams::from_iter(&mut layer_iter).expect("length checked"))
            .collect();
        let mut tail = tail.into_iter();
        Ok(Params {
            embed_weight,
            embed_bias,
            positional,
            layers,
            final_norm_gain: tail.next().expect("length checked"),
            final_norm_bias: tail.next().expect("length checked"),
            out_weight: tail.next().expect("length checked"),
            out_bias: tail.next().expect("length checked"),
        })
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Params<U> {
        let mapped: Vec<U> = self.values().into_iter().map(f).collect();
        Self::from_values(self.layers.len(), mapped).expect("same structure")
    }
}

impl Params<Tensor> {
    /// Registers every tensor as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Params<Var> {
        self.map(|t| tape.param(t.clone()))
    }
}

/// Dropout switch for a forward pass.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut SeededRng),
}

/// Which tokens each token may attend to. Tokens are step-major, so the
/// permitted set of a token at step `t` is the prefix of the first
/// `(t + 1)·users` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CausalMask {
    pub steps: usize,
    pub users: usize,
}

impl CausalMask {
    pub fn new(steps: usize, users: usize) -> Self {
        CausalMask { steps, users }
    }

    pub fn tokens(&self) -> usize {
        self.steps * self.users
    }

    pub fn allows(&self, query: usize, key: usize) -> bool {
        key / self.users <= query / self.users
    }

    /// Number of permitted keys for each query row.
    pub fn limits(&self) -> Vec<usize> {
        (0..self.tokens()).map(|r| (r / self.users + 1) * self.users).collect()
    }

    pub fn to_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.tokens();
        (0..n).map(|q| (0..n).map(|k| self.allows(q, k)).collect()).collect()
    }
}

/// Rows of a flattened `(T·B)×d` matrix: row `t·B + i` is user `i` at step
/// `t`.
pub fn flatten_sequence(steps: &[Tensor]) -> Result<Tensor> {
    let parts: Vec<&Tensor> = steps.iter().collect();
    Tensor::concat_rows(&parts)
}

pub fn unflatten_sequence(flat: &Tensor, steps: usize) -> Result<Vec<Tensor>> {
    let rows = flat.rows();
    if steps == 0 || rows % steps != 0 {
        return Err(Error::Layout(format!("{rows} rows do not split into {steps} steps")));
    }
    let per = rows / steps;
    (0..steps).map(|t| flat.slice_rows(t * per, (t + 1) * per)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgptModel {
    config: EgptConfig,
    params: Params<Tensor>,
}

fn normal(rng: &mut SeededRng, rows: usize, cols: usize) -> Tensor {
    let dist = Normal::new(0.0, INIT_STD).expect("valid std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).expect("shape")
}

fn row(len: usize, value: f64) -> Tensor {
    Tensor::filled(&[len], value)
}

impl EgptModel {
    /// Weights `N(0, 0.02²)`, biases zero, normalization gains one.
    pub fn new(config: EgptConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::seeded_rng(seed);
        let w = config.layout.width();
        let d = config.d_h;
        let ff = 4 * d;
        let embed_weight = normal(&mut rng, w, d);
        let positional = normal(&mut rng, config.positional_rows(), d);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                attn_norm_gain: row(d, 1.0),
                attn_norm_bias: row(d, 0.0),
                query: normal(&mut rng, d, d),
                key: normal(&mut rng, d, d),
                value: normal(&mut rng, d, d),
                attn_out_weight: normal(&mut rng, d, d),
                attn_out_bias: row(d, 0.0),
                ffn_norm_gain: row(d, 1.0),
                ffn_norm_bias: row(d, 0.0),
                ffn_in_weight: normal(&mut rng, d, ff),
                ffn_in_bias: row(ff, 0.0),
                ffn_out_weight: normal(&mut rng, ff, d),
                ffn_out_bias: row(d, 0.0),
            })
            .collect();
        let params = Params {
            embed_weight,
            embed_bias: row(d, 0.0),
            positional,
            layers,
            final_norm_gain: row(d, 1.0),
            final_norm_bias: row(d, 0.0),
            out_weight: normal(&mut rng, d, w),
            out_bias: row(w, 0.0),
        };
        Ok(EgptModel { config, params })
    }

    /// Builds a model from explicit parameters, checking every shape.
    pub fn from_params(config: EgptConfig, params: Params<Tensor>) -> Result<Self> {
        config.validate()?;
        let reference = Self::new(config.clone(), 0)?;
        if params.layers.len() != config.layers {
            return Err(Error::Layout(format!("{} layers in parameters, {} in config", params.layers.len(), config.layers)));
        }
        for ((name, expected), actual) in reference.params.named().into_iter().zip(params.values()) {
            if expected.shape() != actual.shape() {
                return Err(Error::Layout(format!("{name}: shape {:?}, expected {:?}", actual.shape(), expected.shape())));
            }
            if !actual.is_finite() {
                return Err(Error::NonFinite { op: "load parameters" });
            }
        }
        Ok(EgptModel { config, params })
    }

    pub fn config(&self) -> &EgptConfig {
        &self.config
    }

    pub fn params(&self) -> &Params<Tensor> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params<Tensor> {
        &mut self.params
    }

    /// `F·E + b` for one step.
    pub fn embed(&self, features: &Tensor) -> Result<Tensor> {
        let (rows, cols) = features.expect_matrix("embed")?;
        if cols != self.config.layout.width() {
            return Err(Error::Config(format!("input width {cols}, model expects {}", self.config.layout.width())));
        }
        let mut tape = Tape::new();
        let x = tape.constant(features.clone());
        let e = tape.constant(self.params.embed_weight.clone());
        let b = tape.constant(self.params.embed_bias.clone());
        let h = tape.matmul(x, e)?;
        let h = tape.add_row_bias(h, b)?;
        debug_assert_eq!(tape.value(h).rows(), rows);
        Ok(tape.value(h).clone())
    }

    /// Adds the positional rows for steps `0..hidden.len()` of the given
    /// users.
    pub fn add_positional(&self, hidden: &[Tensor], users: &[usize]) -> Result<Vec<Tensor>> {
        let indices = self.positional_indices(hidden.len(), users)?;
        let b = users.len();
        hidden
            .iter()
            .enumerate()
            .map(|(t, h)| {
                if h.rows() != b || h.cols() != self.config.d_h {
                    return Err(Error::dim("add_positional", h.shape(), &[b, self.config.d_h]));
                }
                let mut out = h.clone();
                for (i, &p) in indices[t * b..(t + 1) * b].iter().enumerate() {
                    for (o, v) in out.row_mut(i).iter_mut().zip(self.params.positional.row(p)) {
                        *o += v;
                    }
                }
                Ok(out)
            })
            .collect()
    }

    fn positional_indices(&self, steps: usize, users: &[usize]) -> Result<Vec<usize>> {
        if steps > self.config.max_steps {
            return Err(Error::Capacity { requested: steps, capacity: self.config.max_steps });
        }
        let n = self.config.layout.users;
        if let Some(&u) = users.iter().find(|&&u| u >= n) {
            return Err(Error::param("users", format!("user {u} outside 0..{n}")));
        }
        let mut out = Vec::with_capacity(steps * users.len());
        for t in 0..steps {
            for &u in users {
                out.push(match self.config.positional {
                    PositionalMode::PerTimeUser => t * n + u,
                    PositionalMode::PerTime => t,
                });
            }
        }
        Ok(out)
    }

    /// Records the forward pass for the given users over `inputs` (one
    /// `B×width` matrix per step) and returns the flattened `(T·B)×width`
    /// output. The adjacency block is left as logits.
    pub fn forward_tokens(
        &self,
        tape: &mut Tape,
        params: &Params<Var>,
        inputs: &[Tensor],
        users: &[usize],
        mode: Mode<'_>,
    ) -> Result<Var> {
        self.forward_traced(tape, params, inputs, users, mode, None)
    }

    fn forward_traced(
        &self,
        tape: &mut Tape,
        params: &Params<Var>,
        inputs: &[Tensor],
        users: &[usize],
        mut mode: Mode<'_>,
        mut attention: Option<&mut Vec<Var>>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let steps = inputs.len();
        if steps == 0 {
            return Err(Error::InsufficientHistory { needed: 1, got: 0 });
        }
        let b = users.len();
        for x in inputs {
            let (rows, cols) = x.expect_matrix("forward")?;
            if cols != cfg.layout.width() {
                return Err(Error::Config(format!("input width {cols}, model expects {}", cfg.layout.width())));
            }
            if rows != b {
                return Err(Error::dim("forward", x.shape(), &[b, cols]));
            }
        }
        let indices = self.positional_indices(steps, users)?;
        let mask = CausalMask::new(steps, b);

        let x = tape.constant(flatten_sequence(inputs)?);
        let h = tape.matmul(x, params.embed_weight)?;
        let h = tape.add_row_bias(h, params.embed_bias)?;
        let pos = tape.gather_rows(params.positional, &indices)?;
        let mut h = tape.add(h, pos)?;
        h = dropout(tape, h, cfg.dropout, &mut mode)?;

        let dk = cfg.head_width();
        let scale = 1.0 / libm::sqrt(dk as f64);
        for layer in &params.layers {
            let n1 = tape.layer_norm(h, layer.attn_norm_gain, layer.attn_norm_bias)?;
            let q = tape.matmul(n1, layer.query)?;
            let k = tape.matmul(n1, layer.key)?;
            let v = tape.matmul(n1, layer.value)?;
            let mut heads = Vec::with_capacity(cfg.heads);
            for head in 0..cfg.heads {
                let (lo, hi) = (head * dk, (head + 1) * dk);
                let qh = tape.slice_cols(q, lo, hi)?;
                let kh = tape.slice_cols(k, lo, hi)?;
                let vh = tape.slice_cols(v, lo, hi)?;
                let scores = tape.matmul_nt(qh, kh)?;
                let scores = tape.scale(scores, scale)?;
                let weights = tape.masked_softmax(scores, mask.limits())?;
                if let Some(trace) = attention.as_deref_mut() {
                    trace.push(weights);
                }
                heads.push(tape.matmul(weights, vh)?);
            }
            let ctx = tape.concat_cols(&heads)?;
            let o = tape.matmul(ctx, layer.attn_out_weight)?;
            let o = tape.add_row_bias(o, layer.attn_out_bias)?;
            let o = dropout(tape, o, cfg.dropout, &mut mode)?;
            let a = tape.add(h, o)?;

            let n2 = tape.layer_norm(a, layer.ffn_norm_gain, layer.ffn_norm_bias)?;
            let f = tape.matmul(n2, layer.ffn_in_weight)?;
            let f = tape.add_row_bias(f, layer.ffn_in_bias)?;
            let f = tape.gelu(f)?;
            let f = tape.matmul(f, layer.ffn_out_weight)?;
            let f = tape.add_row_bias(f, layer.ffn_out_bias)?;
            let f = dropout(tape, f, cfg.dropout, &mut mode)?;
            h = tape.add(a, f)?;
        }
        let h = tape.layer_norm(h, params.final_norm_gain, params.final_norm_bias)?;
        let out = tape.matmul(h, params.out_weight)?;
        tape.add_row_bias(out, params.out_bias)
    }

    fn check_sequence(&self, seq: &FeatureSequence) -> Result<()> {
        if seq.layout() != self.config.layout {
            return Err(Error::Config(format!(
                "sequence layout {:?} does not match model layout {:?}",
                seq.layout(),
                self.config.layout
            )));
        }
        if seq.is_empty() {
            return Err(Error::InsufficientHistory { needed: 1, got: 0 });
        }
        if seq.len() > self.config.max_steps {
            return Err(Error::Capacity { requested: seq.len(), capacity: self.config.max_steps });
        }
        Ok(())
    }

    fn all_users(&self) -> Vec<usize> {
        (0..self.config.layout.users).collect()
    }

    /// Raw per-step outputs for every user; entry `t` predicts step `t + 1`.
    pub fn forward(&self, seq: &FeatureSequence, mode: Mode<'_>) -> Result<Vec<Tensor>> {
        self.check_sequence(seq)?;
        let inputs: Vec<Tensor> = seq.matrices().iter().map(|m| m.values.clone()).collect();
        let mut tape = Tape::new();
        let params = self.params.map(|t| tape.constant(t.clone()));
        let out = self.forward_tokens(&mut tape, &params, &inputs, &self.all_users(), mode)?;
        unflatten_sequence(tape.value(out), seq.len())
    }

    /// Attention weights of every head in every layer (eval mode), layer
    /// major.
    pub fn attention_weights(&self, seq: &FeatureSequence) -> Result<Vec<Tensor>> {
        self.check_sequence(seq)?;
        let inputs: Vec<Tensor> = seq.matrices().iter().map(|m| m.values.clone()).collect();
        let mut tape = Tape::new();
        let params = self.params.map(|t| tape.constant(t.clone()));
        let mut trace = Vec::new();
        self.forward_traced(&mut tape, &params, &inputs, &self.all_users(), Mode::Eval, Some(&mut trace))?;
        Ok(trace.into_iter().map(|v| tape.value(v).clone()).collect())
    }

    /// Blocks for the step after the last one in `seq`, with adjacency
    /// scores mapped to probabilities.
    pub fn predict_next(&self, seq: &FeatureSequence) -> Result<PredictionBlocks> {
        let outputs = self.forward(seq, Mode::Eval)?;
        let last = outputs.last().expect("non-empty sequence");
        let mut blocks = slice_prediction(last, &self.config.layout)?;
        for v in blocks.adjacency_scores.data_mut() {
            *v = sigmoid(*v);
        }
        Ok(blocks)
    }

    /// Predicts `k` further steps, feeding each decoded prediction back as
    /// input.
    pub fn rollout(&self, seq: &FeatureSequence, k: usize) -> Result<Vec<PredictionBlocks>> {
        if k == 0 {
            return Err(Error::param("steps", "need at least one rollout step"));
        }
        self.check_sequence(seq)?;
        if seq.len() + k > self.config.max_steps {
            return Err(Error::Capacity { requested: seq.len() + k, capacity: self.config.max_steps });
        }
        let mut current = seq.clone();
        let mut out = Vec::with_capacity(k);
        for _ in 0..k {
            let blocks = self.predict_next(&current)?;
            let next_step = current.matrices().last().expect("non-empty").step + 1;
            if out.len() + 1 < k {
                let snapshot = decode_prediction(&blocks, next_step, DEFAULT_THRESHOLD)?;
                current.push(encode_snapshot(&snapshot, &self.config.layout)?)?;
            }
            out.push(blocks);
        }
        Ok(out)
    }
}

fn dropout(tape: &mut Tape, x: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
    let rng = match mode {
        Mode::Train(rng) if rate > 0.0 => rng,
        _ => return Ok(x),
    };
    let shape = tape.value(x).shape().to_vec();
    let len = tape.value(x).len();
    let keep = 1.0 / (1.0 - rate);
    let data = (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect();
    tape.mul_const(x, Tensor::new(shape, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_sequence, concatenate};
    use crate::numerics::{grad_check, GradCheck};
    use crate::synthgen::{generate_dataset, GeneratorConfig};
    use alloc::vec;

    fn toy_sequence(users: usize, steps: usize, seed: u64) -> FeatureSequence {
        let config = GeneratorConfig {
            users,
            steps,
            initial_degree: 1,
            final_degree: Some(users - 1),
            ..GeneratorConfig::default()
        };
        build_sequence(&generate_dataset(&config, seed).unwrap()).unwrap()
    }

    fn toy_model(users: usize, d_h: usize, layers: usize, dropout: f64) -> EgptModel {
        let mut config = EgptConfig::new(FeatureLayout::new(users), d_h, layers);
        config.heads = 2;
        config.dropout = dropout;
        config.max_steps = 6;
        EgptModel::new(config, 11).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = EgptConfig::new(FeatureLayout::new(3), 8, 1);
        c.heads = 3;
        assert!(c.validate().is_err());
        c.heads = 2;
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        c.dropout = 0.0;
        c.layers = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn params_flatten_in_named_order() {
        let m = toy_model(3, 8, 2, 0.0);
        let names: Vec<String> = m.params().named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), m.params().count());
        assert_eq!(names[3], "layers.0.attn_norm.gain");
        let rebuilt = Params::<Tensor>::from_values(2, m.params().values().into_iter().cloned().collect()).unwrap();
        assert_eq!(&rebuilt, m.params());
    }

    #[test]
    fn embed_matches_row_loop() {
        let m = toy_model(3, 8, 1, 0.0);
        let seq = toy_sequence(3, 2, 1);
        let f = &seq.matrices()[0].values;
        let h = m.embed(f).unwrap();
        assert_eq!(h.shape(), &[3, 8]);
        let e = &m.params().embed_weight;
        for i in 0..3 {
            for j in 0..8 {
                let mut acc = m.params().embed_bias.data()[j];
                for k in 0..f.cols() {
                    acc += f.get(i, k) * e.get(k, j);
                }
                assert!((h.get(i, j) - acc).abs() < 1e-12);
            }
        }
        let mut zero = m.clone();
        for v in zero.params_mut().embed_weight.data_mut() {
            *v = 0.0;
        }
        assert!(zero.embed(f).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(matches!(m.embed(&Tensor::zeros(&[3, 5])), Err(Error::Config(_))));
    }

    #[test]
    fn positional_rows_distinguish_steps() {
        let m = toy_model(3, 8, 1, 0.0);
        let h = Tensor::filled(&[3, 8], 0.25);
        let out = m.add_positional(&[h.clone(), h.clone()], &[0, 1, 2]).unwrap();
        assert_ne!(out[0].row(1), out[1].row(1));
        let mut zero = m.clone();
        for v in zero.params_mut().positional.data_mut() {
            *v = 0.0;
        }
        let same = zero.add_positional(&[h.clone()], &[0, 1, 2]).unwrap();
        assert_eq!(same[0], h);
        assert!(matches!(
            m.add_positional(&vec![h; 7], &[0, 1, 2]),
            Err(Error::Capacity { requested: 7, capacity: 6 })
        ));
    }

    #[test]
    fn flatten_order_and_inverse() {
        let steps: Vec<Tensor> = (0..2)
            .map(|t| Tensor::from_rows(&[[t as f64, 0.0], [t as f64, 1.0], [t as f64, 2.0]]).unwrap())
            .collect();
        let flat = flatten_sequence(&steps).unwrap();
        assert_eq!(flat.rows(), 6);
        let order: Vec<(f64, f64)> = (0..6).map(|r| (flat.get(r, 0), flat.get(r, 1))).collect();
        assert_eq!(order, vec![(0.0, 0.0), (0.0, 1.0), (0.0, 2.0), (1.0, 0.0), (1.0, 1.0), (1.0, 2.0)]);
        assert_eq!(unflatten_sequence(&flat, 2).unwrap(), steps);
    }

    #[test]
    fn mask_is_step_causal() {
        let mask = CausalMask::new(3, 2);
        let m = mask.to_matrix();
        for q in 0..6 {
            for k in 0..6 {
                assert_eq!(m[q][k], k / 2 <= q / 2);
            }
        }
        assert_eq!(mask.limits(), vec![2, 2, 4, 4, 6, 6]);
    }

    #[test]
    fn forward_shapes_and_eval_determinism() {
        let m = toy_model(4, 8, 2, 0.2);
        let seq = toy_sequence(4, 3, 5);
        let a = m.forward(&seq, Mode::Eval).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|t| t.shape() == [4, 40]));
        assert_eq!(a, m.forward(&seq, Mode::Eval).unwrap());
        let mut rng = crate::seeded_rng(0);
        assert_ne!(a, m.forward(&seq, Mode::Train(&mut rng)).unwrap());
    }

    #[test]
    fn future_inputs_do_not_leak() {
        let m = toy_model(4, 8, 2, 0.0);
        let seq = toy_sequence(4, 4, 9);
        let base = m.forward(&seq, Mode::Eval).unwrap();
        let mut changed: Vec<_> = seq.matrices().to_vec();
        for v in changed[2].values.data_mut() {
            *v += 3.0;
        }
        let seq2 = FeatureSequence::new(seq.layout(), changed).unwrap();
        let out = m.forward(&seq2, Mode::Eval).unwrap();
        assert_eq!(out[0], base[0]);
        assert_eq!(out[1], base[1]);
        assert_ne!(out[2], base[2]);
    }

    #[test]
    fn zeroed_value_and_ffn_output_make_layers_identity() {
        let mut m = toy_model(3, 8, 2, 0.0);
        for layer in &mut m.params_mut().layers {
            for t in [&mut layer.value, &mut layer.ffn_out_weight, &mut layer.attn_out_bias, &mut layer.ffn_out_bias] {
                t.data_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let seq = toy_sequence(3, 2, 3);
        let out = m.forward(&seq, Mode::Eval).unwrap();
        // Without decoder layers: final norm of embedding + positional.
        let mut stripped = m.clone();
        stripped.params_mut().layers.truncate(0);
        let inputs: Vec<Tensor> = seq.matrices().iter().map(|x| x.values.clone()).collect();
        let mut tape = Tape::new();
        let p = stripped.params().map(|t| tape.constant(t.clone()));
        let y = m.forward_tokens(&mut tape, &p, &inputs, &[0, 1, 2], Mode::Eval).unwrap();
        assert_eq!(unflatten_sequence(tape.value(y), 2).unwrap(), out);
    }

    #[test]
    fn attention_rows_are_distributions() {
        let m = toy_model(3, 8, 2, 0.0);
        let seq = toy_sequence(3, 3, 4);
        let weights = m.attention_weights(&seq).unwrap();
        assert_eq!(weights.len(), 4);
        let mask = CausalMask::new(3, 3);
        for w in &weights {
            for q in 0..9 {
                let row = w.row(q);
                let total: f64 = row.iter().sum();
                assert!((total - 1.0).abs() < 1e-12);
                for (k, &v) in row.iter().enumerate() {
                    if !mask.allows(q, k) {
                        assert_eq!(v, 0.0);
                    }
                }
            }
        }
        // A single token attends only to itself.
        let mut tape = Tape::new();
        let p = m.params().map(|t| tape.constant(t.clone()));
        let mut trace = Vec::new();
        let x = seq.matrices()[0].values.slice_rows(0, 1).unwrap();
        m.forward_traced(&mut tape, &p, &[x], &[0], Mode::Eval, Some(&mut trace)).unwrap();
        assert_eq!(tape.value(trace[0]).data(), &[1.0]);
    }

    #[test]
    fn toy_model_gradients_match_finite_differences() {
        let m = toy_model(3, 8, 2, 0.0);
        let seq = toy_sequence(3, 2, 6);
        let inputs: Vec<Tensor> = seq.matrices().iter().map(|x| x.values.clone()).collect();
        let target = Tensor::concat_rows(&[&inputs[1], &inputs[0]]).unwrap();
        let f = |tape: &mut Tape, vars: &[Var]| {
            let p = Params::<Var>::from_values(2, vars.to_vec())?;
            let out = m.forward_tokens(tape, &p, &inputs, &[0, 1, 2], Mode::Eval)?;
            tape.mse_mean(out, target.clone())
        };
        let params: Vec<Tensor> = m.params().values().into_iter().cloned().collect();
        let err = grad_check(f, &params, &GradCheck { coords_per_param: 6, ..GradCheck::default() }).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn every_parameter_receives_gradient() {
        let m = toy_model(3, 8, 2, 0.0);
        let seq = toy_sequence(3, 3, 2);
        let inputs: Vec<Tensor> = seq.matrices().iter().map(|x| x.values.clone()).collect();
        let mut tape = Tape::new();
        let p = m.params().bind(&mut tape);
        let out = m.forward_tokens(&mut tape, &p, &inputs[..2], &[0, 1, 2], Mode::Eval).unwrap();
        let target = Tensor::concat_rows(&[&inputs[1], &inputs[2]]).unwrap();
        let loss = tape.mse_mean(out, target).unwrap();
        let grads = tape.backward(loss).unwrap();
        for ((name, _), var) in m.params().named().into_iter().zip(p.values()) {
            assert!(grads.wrt(*var).data().iter().any(|&g| g != 0.0), "{name}");
        }
    }

    #[test]
    fn predict_next_and_rollout() {
        let m = toy_model(4, 8, 1, 0.0);
        let seq = toy_sequence(4, 3, 1);
        let blocks = m.predict_next(&seq).unwrap();
        assert!(blocks.adjacency_scores.data().iter().all(|&p| p > 0.0 && p < 1.0));
        assert_eq!(concatenate(&blocks).unwrap().cols(), seq.layout().width());
        let raw = m.forward(&seq, Mode::Eval).unwrap();
        let sliced = slice_prediction(raw.last().unwrap(), &seq.layout()).unwrap();
        assert_eq!(sliced.history, blocks.history);
        assert_eq!(sliced.adjacency_scores.data().iter().map(|&x| sigmoid(x)).collect::<Vec<_>>(), blocks.adjacency_scores.data());

        let one = m.rollout(&seq, 1).unwrap();
        assert_eq!(one, vec![blocks]);
        let three = m.rollout(&seq, 3).unwrap();
        assert_eq!(three.len(), 3);
        assert!(three.iter().all(|b| b.adjacency_scores.shape() == [4, 4] && b.engagement.shape() == [4, 24]));
        assert!(matches!(m.rollout(&seq, 5), Err(Error::Capacity { .. })));
    }
}
