//! Linear softmax policy and linear value head with analytic gradients.
//!
//! Weights are stored feature-major: entry `j * vocab_size + k` couples
//! feature `j` to symbol `k`, so a sparse feature vector touches contiguous rows.

use super::features::Features;
use crate::document::TokenId;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    vocab_size: usize,
    feature_dim: usize,
    weights: Vec<f64>,
}

impl PolicyParams {
    pub fn zeros(vocab_size: usize, feature_dim: usize) -> Self {
        Self { vocab_size, feature_dim, weights: vec![0.0; vocab_size * feature_dim] }
    }

    /// Gaussian initialisation with standard deviation `scale`.
    pub fn random(vocab_size: usize, feature_dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = (0..vocab_size * feature_dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self { vocab_size, feature_dim, weights }
    }

    pub fn from_weights(vocab_size: usize, feature_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != vocab_size * feature_dim {
            return Err(Error::usage(format!(
                "{} weights for a {vocab_size}x{feature_dim} policy",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("policy weights".into()));
        }
        Ok(Self { vocab_size, feature_dim, weights })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn check(&self, f: &Features) -> Result<()> {
        if f.dim() != self.feature_dim {
            return Err(Error::usage(format!(
                "features of dimension {} for a policy of dimension {}",
                f.dim(),
                self.feature_dim
            )));
        }
        Ok(())
    }

    fn check_symbol(&self, symbol: TokenId) -> Result<()> {
        if symbol as usize >= self.vocab_size {
            return Err(Error::usage(format!("symbol {symbol} outside vocabulary of {}", self.vocab_size)));
        }
        Ok(())
    }

    pub fn logits(&self, f: &Features) -> Result<Vec<f64>> {
        self.check(f)?;
        let v = self.vocab_size;
        let mut z = vec![0.0; v];
        for &(j, x) in f.entries() {
            let row = &self.weights[j as usize * v..(j as usize + 1) * v];
            for (zk, w) in z.iter_mut().zip(row) {
                *zk += x * w;
            }
        }
        Ok(z)
    }

    /// Adds `coeff_k * f` to the gradient rows of each listed symbol.
    pub fn accumulate_outer(&self, grad: &mut [f64], coeffs: &[(TokenId, f64)], f: &Features) {
        let v = self.vocab_size;
        for &(j, x) in f.entries() {
            let row = &mut grad[j as usize * v..(j as usize + 1) * v];
            for &(k, c) in coeffs {
                row[k as usize] += c * x;
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.iter().map(|e| e / total).collect()
}

/// Distribution over the full vocabulary.
pub fn next_token_dist(params: &PolicyParams, f: &Features) -> Result<Vec<f64>> {
    Ok(softmax(&params.logits(f)?))
}

/// Distribution restricted to `allowed`, in the order of `allowed`.
pub fn masked_dist(params: &PolicyParams, f: &Features, allowed: &[TokenId]) -> Result<Vec<f64>> {
    if allowed.is_empty() {
        return Err(Error::usage("empty symbol mask"));
    }
    for &t in allowed {
        params.check_symbol(t)?;
    }
    let z = params.logits(f)?;
    Ok(softmax(&allowed.iter().map(|&t| z[t as usize]).collect::<Vec<_>>()))
}

/// `log p(symbol)` under the full-vocabulary softmax and its dense gradient
/// `(e_y - p) ⊗ f`.
pub fn log_prob_and_grad(params: &PolicyParams, f: &Features, symbol: TokenId) -> Result<(f64, Vec<f64>)> {
    params.check_symbol(symbol)?;
    let p = next_token_dist(params, f)?;
    let coeffs: Vec<(TokenId, f64)> = p
        .iter()
        .enumerate()
        .map(|(k, &pk)| (k as TokenId, if k == symbol as usize { 1.0 - pk } else { -pk }))
        .collect();
    let mut grad = vec![0.0; params.weights.len()];
    params.accumulate_outer(&mut grad, &coeffs, f);
    Ok((p[symbol as usize].ln(), grad))
}

/// Masked counterpart of [`log_prob_and_grad`]; only rows of allowed symbols move.
pub fn masked_log_prob_and_grad(
    params: &PolicyParams,
    f: &Features,
    allowed: &[TokenId],
    symbol: TokenId,
) -> Result<(f64, Vec<f64>)> {
    let at = allowed
        .iter()
        .position(|&t| t == symbol)
        .ok_or_else(|| Error::usage(format!("symbol {symbol} is masked out")))?;
    let p = masked_dist(params, f, allowed)?;
    let coeffs: Vec<(TokenId, f64)> = allowed
        .iter()
        .zip(&p)
        .enumerate()
        .map(|(i, (&t, &pk))| (t, if i == at { 1.0 - pk } else { -pk }))
        .collect();
    let mut grad = vec![0.0; params.weights.len()];
    params.accumulate_outer(&mut grad, &coeffs, f);
    Ok((p[at].ln(), grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueParams {
    weights: Vec<f64>,
}

impl ValueParams {
    pub fn zeros(feature_dim: usize) -> Self {
        Self { weights: vec![0.0; feature_dim] }
    }

    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("value weights".into()));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn value(&self, f: &Features) -> Result<f64> {
        if f.dim() != self.weights.len() {
            return Err(Error::usage(format!(
                "features of dimension {} for a value head of dimension {}",
                f.dim(),
                self.weights.len()
            )));
        }
        Ok(f.entries().iter().map(|&(j, x)| self.weights[j as usize] * x).sum())
    }
}

/// Linear value and its gradient, which is the dense feature vector.
pub fn value_and_grad(params: &ValueParams, f: &Features) -> Result<(f64, Vec<f64>)> {
    Ok((params.value(f)?, f.to_dense()))
}

/// Draws an index from a distribution at `temperature`; zero temperature is
/// greedy with ties going to the lowest index.
pub fn sample_index(p: &[f64], temperature: f64, rng: &mut impl Rng) -> usize {
    if temperature <= 0.0 {
        return p
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
            .0;
    }
    let tempered;
    let p = if temperature != 1.0 {
        let logits: Vec<f64> = p.iter().map(|x| x.ln() / temperature).collect();
        tempered = softmax(&logits);
        &tempered
    } else {
        p
    };
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}
