//! Independent reference computations for the dual-objective losses.
//! Written from the formulas directly, without the library's helpers.

#![allow(dead_code)]

use fallacy_forge::dual::{ToyDataset, ToyModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

fn clipped_prob(theta: &ToyModelParams, premise_row: usize, consequent: usize, eps: f64) -> f64 {
    let d = theta.dim;
    let mut s = theta.bias;
    for k in 0..d {
        s += theta.premise[premise_row * d + k] * theta.consequent[consequent * d + k];
    }
    sigmoid(s).max(eps).min(1.0 - eps)
}

pub fn oracle_loss_pos(theta: &ToyModelParams, data: &ToyDataset, eps: f64) -> f64 {
    let mut total = 0.0;
    for pair in &data.pairs {
        total -= clipped_prob(theta, pair.premise, pair.consequent, eps).ln();
    }
    total
}

pub fn oracle_loss_neg(theta: &ToyModelParams, data: &ToyDataset, eps: f64) -> f64 {
    let n = data.pairs.len();
    let mut total = 0.0;
    for pair in &data.pairs {
        total -= (1.0 - clipped_prob(theta, n + pair.premise, pair.consequent, eps)).ln();
    }
    total
}

pub fn oracle_loss_dual(theta: &ToyModelParams, data: &ToyDataset, lambda: f64, eps: f64) -> f64 {
    oracle_loss_pos(theta, data, eps) + lambda * oracle_loss_neg(theta, data, eps)
}

/// Every parameter as a flat vector: premise rows, consequent rows, bias.
pub fn flatten(theta: &ToyModelParams) -> Vec<f64> {
    let mut v = theta.premise.clone();
    v.extend_from_slice(&theta.consequent);
    v.push(theta.bias);
    v
}

fn set_flat(theta: &mut ToyModelParams, index: usize, value: f64) {
    let np = theta.premise.len();
    let nc = theta.consequent.len();
    if index < np {
        theta.premise[index] = value;
    } else if index < np + nc {
        theta.consequent[index - np] = value;
    } else {
        theta.bias = value;
    }
}

/// Central finite differences of the oracle dual loss.
pub fn finite_difference_gradient(
    theta: &ToyModelParams,
    data: &ToyDataset,
    lambda: f64,
    eps: f64,
    h: f64,
) -> Vec<f64> {
    let base = flatten(theta);
    let mut probe = theta.clone();
    (0..base.len())
        .map(|i| {
            set_flat(&mut probe, i, base[i] + h);
            let up = oracle_loss_dual(&probe, data, lambda, eps);
            set_flat(&mut probe, i, base[i] - h);
            let down = oracle_loss_dual(&probe, data, lambda, eps);
            set_flat(&mut probe, i, base[i]);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)`, and 0 when both are exactly 0.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| relative_error(x, y)).fold(0.0, f64::max)
}

/// Uniform draws in `[-scale, scale]` for every parameter, independent of
/// the library's initializer.
pub fn random_params(n: usize, dim: usize, seed: u64, scale: f64) -> ToyModelParams {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut theta = ToyModelParams::zeros(n, dim);
    for x in theta.premise.iter_mut().chain(theta.consequent.iter_mut()) {
        *x = rng.gen_range(-scale..=scale);
    }
    theta.bias = rng.gen_range(-scale..=scale);
    theta
}
