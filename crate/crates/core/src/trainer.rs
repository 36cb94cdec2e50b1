//! Training objective, optimizers, the training loop, link scoring, and
//! hyperparameter sweeps.
//!
//! The final step of every dataset is held out: training pairs inputs at
//! steps `1..T-2` with targets at `2..T-1`, and evaluation predicts step `T`
//! from steps `1..T-1`. A mini-batch is a random subset of users; each
//! iteration is one optimizer step on that subset's rows across all input
//! steps.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::egpt::{EgptConfig, EgptModel, Mode, PositionalMode};
use crate::error::{Error, Result};
use crate::features::{binarize_adjacency, build_sequence, FeatureLayout, FeatureSequence};
use crate::numerics::{Tape, Tensor, Var};
use crate::synthgen::{Adjacency, Dataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

/// Multipliers on the three loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub adjacency: f64,
    pub demographics: f64,
    pub activity: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adjacency: 1.0,
            demographics: 1.0,
            activity: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub d_h: usize,
    pub layers: usize,
    pub heads: usize,
    pub dropout: f64,
    /// Optimizer steps.
    pub iterations: usize,
    pub optimizer: OptimizerKind,
    pub loss_weights: LossWeights,
    /// Link probability above which a pair counts as predicted.
    pub threshold: f64,
    pub positional: PositionalMode,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            batch_size: 32,
            learning_rate: 2e-3,
            d_h: 64,
            layers: 4,
            heads: 4,
            dropout: 0.1,
            iterations: 100,
            optimizer: OptimizerKind::Adam,
            loss_weights: LossWeights::default(),
            threshold: 0.5,
            positional: PositionalMode::PerTimeUser,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::param("learning_rate", "must be positive and finite"));
        }
        if self.d_h == 0 || self.layers == 0 || self.iterations == 0 {
            return Err(Error::param("d_h/layers/iterations", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param("dropout", "must lie in [0, 1)"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::param("threshold", "must lie in (0, 1)"));
        }
        let w = self.loss_weights;
        if [w.adjacency, w.demographics, w.activity].iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::param("loss_weights", "must be finite and nonnegative"));
        }
        Ok(())
    }

    /// Row label in the style `bs=32,lr=2e-03,hd=64,dl=4,drp=0.1`.
    pub fn label(&self) -> String {
        let exp = libm::floor(libm::log10(self.learning_rate)) as i32;
        let mantissa = self.learning_rate / libm::pow(10.0, f64::from(exp));
        let sign = if exp < 0 { '-' } else { '+' };
        format!(
            "bs={},lr={}e{sign}{:02},hd={},dl={},drp={}",
            self.batch_size,
            libm::round(mantissa * 1e6) / 1e6,
            exp.unsigned_abs(),
            self.d_h,
            self.layers,
            self.dropout
        )
    }

    /// Model configuration for `users` users and sequences up to `steps`
    /// long.
    pub fn model_config(&self, users: usize, steps: usize) -> EgptConfig {
        EgptConfig {
            layout: FeatureLayout::new(users),
            d_h: self.d_h,
            layers: self.layers,
            heads: self.heads,
            dropout: self.dropout,
            max_steps: steps.max(16),
            positional: self.positional,
        }
    }
}

/// The six hyperparameter rows of the reference comparison, in table order.
pub fn reference_grid() -> Vec<Hyperparams> {
    [
        (32, 1e-3, 4, 0.1),
        (32, 2e-3, 4, 0.1),
        (32, 3e-2, 8, 0.3),
        (64, 1e-3, 4, 0.1),
        (64, 2e-3, 4, 0.3),
        (64, 3e-2, 8, 0.3),
    ]
    .into_iter()
    .map(|(batch_size, learning_rate, layers, dropout)| Hyperparams {
        batch_size,
        learning_rate,
        d_h: 64,
        layers,
        dropout,
        ..Hyperparams::default()
    })
    .collect()
}

/// Confusion counts over upper-triangle user pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LinkCounts {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
}

impl LinkCounts {
    pub fn compare(predicted: &Adjacency, truth: &Adjacency) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::Layout(format!("{} predicted nodes, {} true", predicted.len(), truth.len())));
        }
        let n = truth.len();
        let mut c = LinkCounts::default();
        for i in 0..n {
            for j in i + 1..n {
                match (predicted.has_edge(i, j), truth.has_edge(i, j)) {
                    (true, true) => c.true_positives += 1,
                    (true, false) => c.false_positives += 1,
                    (false, true) => c.false_negatives += 1,
                    (false, false) => c.true_negatives += 1,
                }
            }
        }
        Ok(c)
    }

    pub fn merge(self, other: LinkCounts) -> LinkCounts {
        LinkCounts {
            true_positives: self.true_positives + other.true_positives,
            false_positives: self.false_positives + other.false_positives,
            false_negatives: self.false_negatives + other.false_negatives,
            true_negatives: self.true_negatives + other.true_negatives,
        }
    }

    fn total(&self) -> u64 {
        self.true_positives + self.false_positives + self.false_negatives + self.true_negatives
    }

    /// Share of pairs predicted as links.
    pub fn predicted_rate(&self) -> f64 {
        ratio(self.true_positives + self.false_positives, self.total())
    }

    /// Share of pairs that are links.
    pub fn base_rate(&self) -> f64 {
        ratio(self.true_positives + self.false_negatives, self.total())
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: LinkCounts,
}

impl LinkScores {
    /// Precision or recall with an empty denominator is 0, and so is F1
    /// when both are 0.
    pub fn from_counts(counts: LinkCounts) -> Self {
        let precision = ratio(counts.true_positives, counts.true_positives + counts.false_positives);
        let recall = ratio(counts.true_positives, counts.true_positives + counts.false_negatives);
        LinkScores {
            precision,
            recall,
            f1: harmonic_mean(precision, recall),
            counts,
        }
    }

    pub fn compare(predicted: &Adjacency, truth: &Adjacency) -> Result<Self> {
        Ok(Self::from_counts(LinkCounts::compare(predicted, truth)?))
    }
}

fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Expected F1 of labelling each pair a link independently with
/// probability `predicted_rate` when a `base_rate` share are links.
pub fn random_baseline_f1(base_rate: f64, predicted_rate: f64) -> f64 {
    harmonic_mean(base_rate, predicted_rate)
}

/// Scores of predicting step `T` as a copy of step `T-1`.
pub fn persistence_baseline(dataset: &Dataset) -> Result<LinkScores> {
    let t = dataset.steps();
    if t < 2 {
        return Err(Error::InsufficientHistory { needed: 2, got: t });
    }
    let snaps = sorted_snapshots(dataset);
    LinkScores::compare(&snaps[t - 2].adjacency, &snaps[t - 1].adjacency)
}

fn sorted_snapshots(dataset: &Dataset) -> Vec<&crate::synthgen::TemporalSnapshot> {
    let mut s: Vec<_> = dataset.snapshots.iter().collect();
    s.sort_by_key(|s| s.step);
    s
}

fn link_counts(model: &EgptModel, dataset: &Dataset, threshold: f64) -> Result<LinkCounts> {
    let seq = build_sequence(dataset)?;
    let t = seq.len();
    let history = seq.prefix(t - 1)?;
    let blocks = model.predict_next(&history)?;
    let predicted = binarize_adjacency(&blocks.adjacency_scores, threshold)?;
    let truth = &sorted_snapshots(dataset)[t - 1].adjacency;
    LinkCounts::compare(&predicted, truth)
}

/// Predicts the held-out last step from all earlier ones and scores every
/// upper-triangle pair.
pub fn evaluate_links(model: &EgptModel, dataset: &Dataset, threshold: f64) -> Result<LinkScores> {
    Ok(LinkScores::from_counts(link_counts(model, dataset, threshold)?))
}

/// Adds the composite objective for `pred` (logits for the adjacency block)
/// against `target` to the tape: mean binary cross-entropy on links, plus
/// mean squared error on demographics, plus mean squared error on history
/// and engagement together.
pub fn loss(tape: &mut Tape, pred: Var, target: &Tensor, layout: &FeatureLayout, weights: &LossWeights) -> Result<Var> {
    let shape = tape.value(pred).shape().to_vec();
    if shape.as_slice() != target.shape() {
        return Err(Error::Contract(format!("prediction shape {shape:?} does not match target {:?}", target.shape())));
    }
    if shape.len() != 2 || shape[1] != layout.width() {
        return Err(Error::Contract(format!("prediction width {shape:?} does not match layout width {}", layout.width())));
    }
    let [a, d, _, e] = layout.blocks();
    let adj = tape.slice_cols(pred, a.start, a.end)?;
    let adj = tape.bce_with_logits_mean(adj, target.slice_cols(a.start, a.end)?)?;
    let demo = tape.slice_cols(pred, d.start, d.end)?;
    let demo = tape.mse_mean(demo, target.slice_cols(d.start, d.end)?)?;
    let act = tape.slice_cols(pred, d.end, e.end)?;
    let act = tape.mse_mean(act, target.slice_cols(d.end, e.end)?)?;
    let adj = tape.scale(adj, weights.adjacency)?;
    let demo = tape.scale(demo, weights.demographics)?;
    let act = tape.scale(act, weights.activity)?;
    let total = tape.add(adj, demo)?;
    tape.add(total, act)
}

/// Value of [`loss`] without recording gradients.
pub fn loss_value(pred: &Tensor, target: &Tensor, layout: &FeatureLayout, weights: &LossWeights) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let l = loss(&mut tape, p, target, layout, weights)?;
    Ok(tape.value(l).item())
}

/// Parameter update rule.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { learning_rate: f64 },
    Adam(Adam),
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(learning_rate)),
            OptimizerKind::Sgd => Optimizer::Sgd { learning_rate },
        }
    }

    /// Applies one update; `grads[i]` belongs to `params[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::Contract(format!("{} parameters, {} gradients", params.len(), grads.len())));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::dim("optimizer step", p.shape(), g.shape()));
            }
        }
        match self {
            Optimizer::Sgd { learning_rate } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (w, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= *learning_rate * d;
                    }
                }
            }
            Optimizer::Adam(adam) => {
                if adam.m.is_empty() {
                    adam.m = grads.iter().map(|g| alloc::vec![0.0; g.len()]).collect();
                    adam.v = adam.m.clone();
                }
                adam.step += 1;
                let c1 = 1.0 - libm::pow(adam.beta1, f64::from(adam.step));
                let c2 = 1.0 - libm::pow(adam.beta2, f64::from(adam.step));
                for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
                    let (m, v) = (&mut adam.m[k], &mut adam.v[k]);
                    for (i, (w, d)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * d;
                        v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * d * d;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        *w -= adam.learning_rate * m_hat / (libm::sqrt(v_hat) + adam.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub hyperparams: Hyperparams,
    pub seed: u64,
    /// Loss before each optimizer step.
    pub losses: Vec<f64>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: LinkCounts,
    /// Seconds spent training and evaluating; absent without `std`.
    pub wall_clock_secs: Option<f64>,
}

impl TrainReport {
    pub fn scores(&self) -> LinkScores {
        LinkScores::from_counts(self.counts)
    }

    /// The report with timing removed, for reproducibility comparisons.
    pub fn without_timing(&self) -> TrainReport {
        TrainReport {
            wall_clock_secs: None,
            ..self.clone()
        }
    }

    pub fn first_loss(&self) -> f64 {
        self.losses.first().copied().unwrap_or(f64::NAN)
    }

    pub fn last_loss(&self) -> f64 {
        self.losses.last().copied().unwrap_or(f64::NAN)
    }
}

struct TrainingData {
    inputs: Vec<Tensor>,
    targets: Vec<Tensor>,
}

fn training_data(dataset: &Dataset) -> Result<TrainingData> {
    let seq: FeatureSequence = build_sequence(dataset)?;
    let t = seq.len();
    if t < 3 {
        return Err(Error::InsufficientHistory { needed: 3, got: t });
    }
    let m = seq.matrices();
    Ok(TrainingData {
        inputs: m[..t - 2].iter().map(|x| x.values.clone()).collect(),
        targets: m[1..t - 1].iter().map(|x| x.values.clone()).collect(),
    })
}

fn gather(rows: &Tensor, users: &[usize]) -> Tensor {
    let picked: Vec<&[f64]> = users.iter().map(|&u| rows.row(u)).collect();
    Tensor::from_rows(&picked).expect("uniform row width")
}

#[cfg(feature = "std")]
struct Stopwatch(std::time::Instant);

#[cfg(feature = "std")]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch(std::time::Instant::now())
    }

    fn seconds(&self) -> Option<f64> {
        Some(self.0.elapsed().as_secs_f64())
    }
}

#[cfg(not(feature = "std"))]
struct Stopwatch;

#[cfg(not(feature = "std"))]
impl Stopwatch {
    fn start() -> Self {
        Stopwatch
    }

    fn seconds(&self) -> Option<f64> {
        None
    }
}

/// Trains on one dataset and scores the held-out last step.
pub fn train(dataset: &Dataset, hp: &Hyperparams, seed: u64) -> Result<(EgptModel, TrainReport)> {
    train_many(core::slice::from_ref(dataset), hp, seed)
}

/// Trains one model on several datasets with the same user count. Each
/// iteration splits the batch evenly across the datasets; link scores pool
/// the confusion counts of every dataset.
pub fn train_many(datasets: &[Dataset], hp: &Hyperparams, seed: u64) -> Result<(EgptModel, TrainReport)> {
    hp.validate()?;
    let first = datasets.first().ok_or_else(|| Error::param("datasets", "need at least one dataset"))?;
    let users = first.user_count();
    let steps = first.steps();
    if datasets.iter().any(|d| d.user_count() != users || d.steps() != steps) {
        return Err(Error::Layout("all datasets must share user and step counts".into()));
    }
    let clock = Stopwatch::start();
    let data = datasets.iter().map(training_data).collect::<Result<Vec<_>>>()?;
    let config = hp.model_config(users, steps);
    let layout = config.layout;
    let mut model = EgptModel::new(config, seed)?;
    let mut optimizer = Optimizer::new(hp.optimizer, hp.learning_rate);
    let mut rng = crate::seeded_rng(seed);
    rng.set_stream(1);
    let per_dataset = (hp.batch_size / datasets.len()).clamp(1, users);

    let mut losses = Vec::with_capacity(hp.iterations);
    for iteration in 1..=hp.iterations {
        let diverged = |e: Error| match e {
            Error::NonFinite { .. } => Error::Divergence { iteration, loss: f64::NAN },
            other => other,
        };
        let mut tape = Tape::new();
        let params = model.params().bind(&mut tape);
        let mut terms = Vec::with_capacity(data.len());
        for d in &data {
            let mut batch = index::sample(&mut rng, users, per_dataset).into_vec();
            batch.sort_unstable();
            let inputs: Vec<Tensor> = d.inputs.iter().map(|x| gather(x, &batch)).collect();
            let targets: Vec<Tensor> = d.targets.iter().map(|x| gather(x, &batch)).collect();
            let target = Tensor::concat_rows(&targets.iter().collect::<Vec<_>>())?;
            let out = model
                .forward_tokens(&mut tape, &params, &inputs, &batch, Mode::Train(&mut rng))
                .map_err(diverged)?;
            terms.push(loss(&mut tape, out, &target, &layout, &hp.loss_weights).map_err(diverged)?);
        }
        let mut total = terms[0];
        for &t in &terms[1..] {
            total = tape.add(total, t)?;
        }
        let total = tape.scale(total, 1.0 / terms.len() as f64)?;
        let value = tape.value(total).item();
        if !value.is_finite() {
            return Err(Error::Divergence { iteration, loss: value });
        }
        losses.push(value);
        let grads = tape.backward(total)?;
        let grads: Vec<Tensor> = params.values().into_iter().map(|v| grads.wrt(*v)).collect();
        let mut tensors: Vec<&mut Tensor> = params_mut(model.params_mut());
        optimizer.step(&mut tensors, &grads)?;
        if tensors.iter().any(|t| !t.is_finite()) {
            return Err(Error::Divergence { iteration, loss: value });
        }
    }

    let mut counts = LinkCounts::default();
    for d in datasets {
        counts = counts.merge(link_counts(&model, d, hp.threshold)?);
    }
    let scores = LinkScores::from_counts(counts);
    let report = TrainReport {
        hyperparams: hp.clone(),
        seed,
        losses,
        precision: scores.precision,
        recall: scores.recall,
        f1: scores.f1,
        counts,
        wall_clock_secs: clock.seconds(),
    };
    Ok((model, report))
}

fn params_mut(p: &mut crate::egpt::Params<Tensor>) -> Vec<&mut Tensor> {
    let mut out: Vec<&mut Tensor> = Vec::new();
    out.push(&mut p.embed_weight);
    out.push(&mut p.embed_bias);
    out.push(&mut p.positional);
    for l in &mut p.layers {
        out.extend([
            &mut l.attn_norm_gain,
            &mut l.attn_norm_bias,
            &mut l.query,
            &mut l.key,
            &mut l.value,
            &mut l.attn_out_weight,
            &mut l.attn_out_bias,
            &mut l.ffn_norm_gain,
            &mut l.ffn_norm_bias,
            &mut l.ffn_in_weight,
            &mut l.ffn_in_bias,
            &mut l.ffn_out_weight,
            &mut l.ffn_out_bias,
        ]);
    }
    out.push(&mut p.final_norm_gain);
    out.push(&mut p.final_norm_bias);
    out.push(&mut p.out_weight);
    out.push(&mut p.out_bias);
    out
}

/// One sweep cell: a report, or the error that stopped it.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Position in the input grid.
    pub cell: usize,
    pub hyperparams: Hyperparams,
    pub outcome: core::result::Result<TrainReport, String>,
}

impl SweepRow {
    pub fn f1(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|r| r.f1)
    }
}

/// Trains every grid cell with the same seed, calling `on_cell` as each
/// finishes. Failed cells are recorded and the sweep continues. Rows come
/// back sorted by F1, best first, failures last.
pub fn sweep(
    dataset: &Dataset,
    grid: &[Hyperparams],
    seed: u64,
    mut on_cell: impl FnMut(&SweepRow),
) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::param("grid", "sweep needs at least one configuration"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (cell, hp) in grid.iter().enumerate() {
        let outcome = train(dataset, hp, seed)
            .map(|(_, report)| report)
            .map_err(|e| format!("{e}"));
        let row = SweepRow {
            cell,
            hyperparams: hp.clone(),
            outcome,
        };
        on_cell(&row);
        rows.push(row);
    }
    sort_by_f1(&mut rows);
    Ok(rows)
}

pub fn sort_by_f1(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| match (a.f1(), b.f1()) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.cell.cmp(&b.cell)),
        (Some(_), None) => core::cmp::Ordering::Less,
        (None, Some(_)) => core::cmp::Ordering::Greater,
        (None, None) => a.cell.cmp(&b.cell),
    });
}

/// 1-based competition rank of `cell` by F1: one plus the number of cells
/// with a strictly higher score.
pub fn rank_of(rows: &[SweepRow], cell: usize) -> Option<usize> {
    let target = rows.iter().find(|r| r.cell == cell)?.f1()?;
    Some(1 + rows.iter().filter(|r| r.f1().is_some_and(|f| f > target)).count())
}
