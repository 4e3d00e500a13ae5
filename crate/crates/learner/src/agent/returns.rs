//! Discounted returns, n-step TD targets, advantages, and stochastic action
//! selection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Discounted cumulative reward from each step to the episode end, by
/// backward recursion.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (i, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

/// n-step TD targets over one segment: the discounted reward tail plus the
/// discounted bootstrap value at the segment end (zero when the segment ends
/// the episode).
pub fn n_step_targets(rewards: &[f64], bootstrap: f64, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = bootstrap;
    for (i, &r) in rewards.iter().enumerate().rev() {
        acc = r + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Advantage of an action: its return estimate minus the critic baseline.
pub fn advantage(q: f64, v: f64) -> f64 {
    q - v
}

/// Inverse-CDF sampling from a probability vector.
pub fn sample_action(probs: &[f64], rng: &mut ChaCha8Rng) -> Result<usize> {
    if probs.is_empty() || probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateDistribution);
    }
    let u = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if u < cum {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1)
}

/// Greedy argmax with ties broken toward the lowest index.
pub fn greedy_action(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}
