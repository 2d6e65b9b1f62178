//! Dual-objective training on a toy conditional-probability judge.
//!
//! Each premise atom `P_i` has a paired negated-premise atom `not P_i` with
//! its own embedding row. The judge scores `p(Q_j | x)` as the logistic of
//! `<premise[x], consequent[j]> + bias`, clipped to `[eps, 1 - eps]`.
//!
//! * `loss_pos  = -sum_i ln p(Q_i | P_i)`
//! * `loss_neg  = -sum_i ln (1 - p(Q_i | not P_i))`
//! * `loss_dual = loss_pos + lambda * loss_neg`
//!
//! Negated consequents are the complementary outcome `1 - p` and have no
//! atoms of their own.

mod experiment;

pub use self::experiment::{
    render_experiment_csv, run_experiment, run_experiment_sweep, ArmResult, ExperimentResult, Thresholds,
    EXPERIMENT_CSV_HEADER,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::Statement;
use crate::error::TrainError;

/// Standard deviation of the initial embedding entries.
pub const INIT_SCALE: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-7;

/// Premise `i` affirms consequent `consequent`; `not P_i` affirms nothing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomPair {
    pub premise: usize,
    pub consequent: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyDataset {
    pub pairs: Vec<AtomPair>,
}

impl ToyDataset {
    /// Validates non-emptiness, index ranges, and that no premise or
    /// consequent appears in two pairs.
    pub fn new(pairs: Vec<AtomPair>) -> Result<Self, TrainError> {
        let n = pairs.len();
        if n == 0 {
            return Err(TrainError::InvalidDataset("no pairs".into()));
        }
        let mut premise_seen = vec![false; n];
        let mut consequent_seen = vec![false; n];
        for p in &pairs {
            if p.premise >= n || p.consequent >= n {
                return Err(TrainError::InvalidDataset(format!(
                    "pair ({}, {}) out of range for {n} pairs",
                    p.premise, p.consequent
                )));
            }
            if std::mem::replace(&mut premise_seen[p.premise], true) {
                return Err(TrainError::InvalidDataset(format!(
                    "premise {} appears twice",
                    p.premise
                )));
            }
            if std::mem::replace(&mut consequent_seen[p.consequent], true) {
                return Err(TrainError::InvalidDataset(format!(
                    "consequent {} appears twice",
                    p.consequent
                )));
            }
        }
        Ok(Self { pairs })
    }

    /// Number of premise atoms `N`; there are `2N` premise rows.
    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn negated_row(&self, premise: usize) -> usize {
        self.n_pairs() + premise
    }

    /// Statement `i` becomes the pair `(P_i, Q_i)`, labeled with its id.
    pub fn from_statements(statements: &[Statement]) -> Result<Self, TrainError> {
        Self::new(
            statements
                .iter()
                .enumerate()
                .map(|(i, s)| AtomPair {
                    premise: i,
                    consequent: i,
                    label: Some(s.id.clone()),
                })
                .collect(),
        )
    }
}

/// `n_pairs` disjoint pairs with the consequent assignment shuffled by `seed`.
pub fn synthesize_dataset(n_pairs: usize, seed: u64) -> Result<ToyDataset, TrainError> {
    if n_pairs == 0 {
        return Err(TrainError::InvalidDataset("n_pairs must be >= 1".into()));
    }
    let mut consequents: Vec<usize> = (0..n_pairs).collect();
    consequents.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ToyDataset::new(
        consequents
            .into_iter()
            .enumerate()
            .map(|(premise, consequent)| AtomPair {
                premise,
                consequent,
                label: None,
            })
            .collect(),
    )
}

/// Embedding tables, row-major. Rows `0..n` of `premise` are `P_i`, rows
/// `n..2n` are `not P_i`. The same shape doubles as a gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelParams {
    pub n: usize,
    pub dim: usize,
    pub premise: Vec<f64>,
    pub consequent: Vec<f64>,
    pub bias: f64,
}

impl ToyModelParams {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            n,
            dim,
            premise: vec![0.0; 2 * n * dim],
            consequent: vec![0.0; n * dim],
            bias: 0.0,
        }
    }

    /// Seeded normal initialization. With `shared_negation_init` each
    /// `not P_i` row is a copy of its `P_i` row.
    pub fn init(n: usize, dim: usize, seed: u64, shared_negation_init: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_SCALE).expect("valid normal");
        let mut params = Self::zeros(n, dim);
        let half = n * dim;
        for x in &mut params.premise[..half] {
            *x = normal.sample(&mut rng);
        }
        if shared_negation_init {
            params.premise.copy_within(..half, half);
        } else {
            for x in &mut params.premise[half..] {
                *x = normal.sample(&mut rng);
            }
        }
        for x in &mut params.consequent {
            *x = normal.sample(&mut rng);
        }
        params
    }

    pub fn premise_row(&self, row: usize) -> &[f64] {
        &self.premise[row * self.dim..(row + 1) * self.dim]
    }

    pub fn consequent_row(&self, row: usize) -> &[f64] {
        &self.consequent[row * self.dim..(row + 1) * self.dim]
    }

    /// Rows `n..2n`.
    pub fn negated_rows(&self) -> &[f64] {
        &self.premise[self.n * self.dim..]
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.premise.iter().chain(&self.consequent).all(|x| x.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.premise
            .iter()
            .chain(&self.consequent)
            .chain(std::iter::once(&self.bias))
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    fn score(&self, premise_row: usize, consequent_row: usize) -> f64 {
        let u = self.premise_row(premise_row);
        let v = self.consequent_row(consequent_row);
        u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    fn check_dataset(&self, dataset: &ToyDataset) {
        assert_eq!(self.n, dataset.n_pairs(), "params sized for a different dataset");
    }
}

pub fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// `p(Q_consequent | premise_row)`, clipped to `[eps, 1 - eps]`.
pub fn predict_prob(params: &ToyModelParams, premise_row: usize, consequent: usize, eps: f64) -> f64 {
    logistic(params.score(premise_row, consequent)).clamp(eps, 1.0 - eps)
}

/// Raw probability and whether clipping was active.
fn judged(params: &ToyModelParams, premise_row: usize, consequent: usize, eps: f64) -> (f64, bool) {
    let p = logistic(params.score(premise_row, consequent));
    if p < eps {
        (eps, true)
    } else if p > 1.0 - eps {
        (1.0 - eps, true)
    } else {
        (p, false)
    }
}

pub fn loss_pos(params: &ToyModelParams, dataset: &ToyDataset, eps: f64) -> f64 {
    params.check_dataset(dataset);
    dataset
        .pairs
        .iter()
        .map(|p| -predict_prob(params, p.premise, p.consequent, eps).ln())
        .sum()
}

pub fn loss_neg(params: &ToyModelParams, dataset: &ToyDataset, eps: f64) -> f64 {
    params.check_dataset(dataset);
    dataset
        .pairs
        .iter()
        .map(|p| -(1.0 - predict_prob(params, dataset.negated_row(p.premise), p.consequent, eps)).ln())
        .sum()
}

pub fn loss_dual(params: &ToyModelParams, dataset: &ToyDataset, lambda: f64, eps: f64) -> f64 {
    loss_pos(params, dataset, eps) + lambda * loss_neg(params, dataset, eps)
}

/// Accumulate `dloss/dscore * dscore/dtheta` for one term.
fn accumulate(grad: &mut ToyModelParams, params: &ToyModelParams, premise_row: usize, consequent: usize, dscore: f64) {
    let d = params.dim;
    let u = params.premise_row(premise_row);
    let v = params.consequent_row(consequent);
    for k in 0..d {
        grad.premise[premise_row * d + k] += dscore * v[k];
        grad.consequent[consequent * d + k] += dscore * u[k];
    }
    grad.bias += dscore;
}

/// Analytic gradient of `loss_dual`. Terms whose probability is clipped
/// contribute zero.
pub fn gradients(params: &ToyModelParams, dataset: &ToyDataset, lambda: f64, eps: f64) -> ToyModelParams {
    params.check_dataset(dataset);
    let mut grad = ToyModelParams::zeros(params.n, params.dim);
    for pair in &dataset.pairs {
        // d/ds [-ln sigma(s)] = sigma(s) - 1
        let (p, clipped) = judged(params, pair.premise, pair.consequent, eps);
        if !clipped {
            accumulate(&mut grad, params, pair.premise, pair.consequent, p - 1.0);
        }
        if lambda != 0.0 {
            // d/ds [-ln(1 - sigma(s))] = sigma(s)
            let row = dataset.negated_row(pair.premise);
            let (p, clipped) = judged(params, row, pair.consequent, eps);
            if !clipped {
                accumulate(&mut grad, params, row, pair.consequent, lambda * p);
            }
        }
    }
    grad
}

/// Parameters of the dual-objective trainer. `n_pairs` sizes the synthetic
/// dataset used by the experiment and `train` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub embedding_dim: usize,
    pub seed: u64,
    pub prob_clip_epsilon: f64,
    pub shared_negation_init: bool,
    pub n_pairs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            learning_rate: 0.5,
            epochs: 500,
            embedding_dim: 8,
            seed: 0,
            prob_clip_epsilon: DEFAULT_EPSILON,
            shared_negation_init: true,
            n_pairs: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and > 0");
        }
        if !(self.prob_clip_epsilon > 0.0 && self.prob_clip_epsilon <= 0.01) {
            return bad("prob_clip_epsilon must lie in (0, 0.01]");
        }
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be >= 1");
        }
        if self.n_pairs == 0 {
            return bad("n_pairs must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distinguishability {
    /// `p(Q_i | P_i) - p(Q_i | not P_i)` per pair.
    pub margins: Vec<f64>,
    pub min: f64,
    pub mean: f64,
}

pub fn distinguishability_report(params: &ToyModelParams, dataset: &ToyDataset, eps: f64) -> Distinguishability {
    params.check_dataset(dataset);
    let margins: Vec<f64> = dataset
        .pairs
        .iter()
        .map(|p| {
            predict_prob(params, p.premise, p.consequent, eps)
                - predict_prob(params, dataset.negated_row(p.premise), p.consequent, eps)
        })
        .collect();
    let min = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = margins.iter().sum::<f64>() / margins.len() as f64;
    Distinguishability { margins, min, mean }
}

/// Losses and margins after `epoch` updates (epoch 0 is the initialization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_pos: f64,
    pub loss_neg: f64,
    pub loss_dual: f64,
    pub min_margin: f64,
    pub mean_margin: f64,
}

fn record(epoch: usize, params: &ToyModelParams, dataset: &ToyDataset, config: &TrainConfig) -> EpochRecord {
    let eps = config.prob_clip_epsilon;
    let loss_pos = loss_pos(params, dataset, eps);
    let loss_neg = loss_neg(params, dataset, eps);
    let d = distinguishability_report(params, dataset, eps);
    EpochRecord {
        epoch,
        loss_pos,
        loss_neg,
        loss_dual: loss_pos + config.lambda * loss_neg,
        min_margin: d.min,
        mean_margin: d.mean,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub initial: ToyModelParams,
    pub params: ToyModelParams,
    /// `epochs + 1` records, starting at the initialization.
    pub trace: Vec<EpochRecord>,
}

/// Full-batch gradient descent from a seeded initialization.
pub fn train(dataset: &ToyDataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let initial = ToyModelParams::init(
        dataset.n_pairs(),
        config.embedding_dim,
        config.seed,
        config.shared_negation_init,
    );
    train_from(dataset, config, initial)
}

/// Like [`train`] but starting from the given parameters.
pub fn train_from(
    dataset: &ToyDataset,
    config: &TrainConfig,
    initial: ToyModelParams,
) -> Result<TrainOutcome, TrainError> {
    train_observed(dataset, config, initial, |_, _| {})
}

/// Like [`train_from`], calling `observe(epoch, params)` after every update.
pub fn train_observed<F>(
    dataset: &ToyDataset,
    config: &TrainConfig,
    initial: ToyModelParams,
    mut observe: F,
) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(usize, &ToyModelParams),
{
    config.validate()?;
    let eps = config.prob_clip_epsilon;
    let lr = config.learning_rate;
    let mut params = initial.clone();
    let mut trace = Vec::with_capacity(config.epochs + 1);
    trace.push(record(0, &params, dataset, config));

    for epoch in 1..=config.epochs {
        let grad = gradients(&params, dataset, config.lambda, eps);
        for (x, g) in params.premise.iter_mut().zip(&grad.premise) {
            *x -= lr * g;
        }
        for (x, g) in params.consequent.iter_mut().zip(&grad.consequent) {
            *x -= lr * g;
        }
        params.bias -= lr * grad.bias;

        let rec = record(epoch, &params, dataset, config);
        if !rec.loss_dual.is_finite() || !params.is_finite() {
            return Err(TrainError::Divergence { epoch });
        }
        trace.push(rec);
        observe(epoch, &params);
    }
    Ok(TrainOutcome { initial, params, trace })
}
