//! Clipped-surrogate policy update with separate KL anchors on generated and
//! observation tokens, plus the value-head regression step.
//!
//! Per episode the maximised objective is
//! `(1/T) Σ_t [ (1/L_t) Σ_i (clip_i − β_gen·KL_i) − β_obs·(1/H_t) Σ_j KL_j ]`,
//! averaged over the batch. Turns without observation tokens contribute no
//! observation term.

use crate::error::{Error, Result};
use crate::policy::{softmax, GeneratedStep, ObservationStep, PolicyParams, ValueParams};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const KL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub epsilon: f64,
    pub beta_gen: f64,
    pub beta_obs: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub epochs_per_batch: usize,
    pub batch_episodes: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.2,
            beta_gen: 0.001,
            beta_obs: 0.01,
            lr_policy: 1e-2,
            lr_value: 1e-2,
            epochs_per_batch: 1,
            batch_episodes: 128,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        for (name, v) in [
            ("beta_gen", self.beta_gen),
            ("beta_obs", self.beta_obs),
            ("lr_policy", self.lr_policy),
            ("lr_value", self.lr_value),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        if self.epochs_per_batch == 0 || self.batch_episodes == 0 {
            return Err(Error::config("epochs_per_batch and batch_episodes must be at least 1"));
        }
        if self.beta_obs < self.beta_gen {
            log::warn!(
                "beta_obs ({}) below beta_gen ({}): observation tokens are anchored more loosely than generated ones",
                self.beta_obs,
                self.beta_gen
            );
        }
        Ok(())
    }
}

/// One turn of a training episode with its precomputed credit.
#[derive(Debug, Clone, PartialEq)]
pub struct TurnSample {
    pub generated: Vec<GeneratedStep>,
    pub advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
    /// Observation returned after this turn's action; empty on the final turn.
    pub observation: Vec<ObservationStep>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeSample {
    pub turns: Vec<TurnSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub surrogate: f64,
    pub kl_gen: f64,
    pub kl_obs: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub policy_grad_norm: f64,
    pub value_grad_norm: f64,
}

/// `min(ratio·A, clip(ratio, 1−ε, 1+ε)·A)`.
pub fn clip_term(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Categorical KL(p‖q). Reference mass below `KL_FLOOR` is floored and logged.
pub fn kl_at_position(p: &[f64], q: &[f64]) -> f64 {
    let mut kl = 0.0;
    let mut floored = false;
    for (&pk, &qk) in p.iter().zip(q) {
        if pk <= 0.0 {
            continue;
        }
        let qk = if qk < KL_FLOOR {
            floored = true;
            KL_FLOOR
        } else {
            qk
        };
        kl += pk * (pk.ln() - qk.ln());
    }
    if floored {
        log::warn!("reference distribution has mass below {KL_FLOOR} where the policy has mass; floored");
    }
    kl.max(0.0)
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Objective value, monitored terms and ascent gradient for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyLoss {
    pub objective: f64,
    /// Clip term under the same averaging as the objective.
    pub surrogate: f64,
    /// Flat means over all generated / observation positions.
    pub kl_gen: f64,
    pub kl_obs: f64,
    pub entropy: f64,
    pub grad: Vec<f64>,
}

#[derive(Default)]
struct EpisodeTerms {
    objective: f64,
    surrogate: f64,
    kl_gen_sum: f64,
    kl_obs_sum: f64,
    entropy_sum: f64,
    gen_count: usize,
    obs_count: usize,
}

fn pick(z: &[f64], allowed: &[u32]) -> Vec<f64> {
    allowed.iter().map(|&t| z[t as usize]).collect()
}

fn episode_terms(
    ep: &EpisodeSample,
    theta: &PolicyParams,
    reference: &PolicyParams,
    cfg: &OptimConfig,
    grad: &mut [f64],
) -> Result<EpisodeTerms> {
    let mut terms = EpisodeTerms::default();
    if ep.turns.is_empty() {
        return Err(Error::usage("episode without turns"));
    }
    let inv_t = 1.0 / ep.turns.len() as f64;
    let mut coeffs = Vec::new();
    for (t, turn) in ep.turns.iter().enumerate() {
        let l = turn.generated.len();
        if l == 0 {
            return Err(Error::usage(format!("turn {} has no generated tokens", t + 1)));
        }
        if turn.advantages.len() != l {
            return Err(Error::usage(format!("turn {}: {} advantages for {l} tokens", t + 1, turn.advantages.len())));
        }
        let w_gen = inv_t / l as f64;
        for (step, &adv) in turn.generated.iter().zip(&turn.advantages) {
            let at = step
                .allowed
                .iter()
                .position(|&s| s == step.token)
                .ok_or_else(|| Error::usage(format!("token {} outside its mask", step.token)))?;
            let p = softmax(&pick(&theta.logits(&step.features)?, &step.allowed));
            let q = softmax(&pick(&reference.logits(&step.features)?, &step.allowed));
            let ratio = (p[at].ln() - step.log_prob).exp();
            let clip = clip_term(ratio, adv, cfg.epsilon);
            let kl = kl_at_position(&p, &q);
            terms.objective += w_gen * (clip - cfg.beta_gen * kl);
            terms.surrogate += w_gen * clip;
            terms.kl_gen_sum += kl;
            terms.entropy_sum += entropy(&p);
            terms.gen_count += 1;

            let clipped = ratio.clamp(1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
            let unclipped_active = ratio * adv <= clipped * adv;
            let g_clip = if unclipped_active { adv * ratio } else { 0.0 };
            coeffs.clear();
            for (i, (&s, (&pk, &qk))) in step.allowed.iter().zip(p.iter().zip(&q)).enumerate() {
                let dlogp = if i == at { 1.0 - pk } else { -pk };
                let dkl = pk * (pk.ln() - qk.ln() - kl);
                coeffs.push((s, w_gen * (g_clip * dlogp - cfg.beta_gen * dkl)));
            }
            theta.accumulate_outer(grad, &coeffs, &step.features);
        }
        let h = turn.observation.len();
        for step in &turn.observation {
            let w_obs = inv_t / h as f64;
            let p = softmax(&theta.logits(&step.features)?);
            let q = softmax(&reference.logits(&step.features)?);
            let kl = kl_at_position(&p, &q);
            terms.objective -= w_obs * cfg.beta_obs * kl;
            terms.kl_obs_sum += kl;
            terms.obs_count += 1;
            if cfg.beta_obs > 0.0 {
                coeffs.clear();
                for (k, (&pk, &qk)) in p.iter().zip(&q).enumerate() {
                    coeffs.push((k as u32, -w_obs * cfg.beta_obs * pk * (pk.ln() - qk.ln() - kl)));
                }
                theta.accumulate_outer(grad, &coeffs, &step.features);
            }
        }
    }
    Ok(terms)
}

/// Batch objective and its ascent gradient. The sampling policy's
/// log-probabilities are read from the recorded steps.
pub fn policy_loss(
    batch: &[EpisodeSample],
    theta: &PolicyParams,
    reference: &PolicyParams,
    cfg: &OptimConfig,
) -> Result<PolicyLoss> {
    if batch.is_empty() {
        return Err(Error::usage("empty batch"));
    }
    if (theta.vocab_size(), theta.feature_dim()) != (reference.vocab_size(), reference.feature_dim()) {
        return Err(Error::usage("policy and reference shapes differ"));
    }
    let size = theta.weights().len();
    let parts: Vec<Result<(EpisodeTerms, Vec<f64>)>> = batch
        .par_iter()
        .map(|ep| {
            let mut g = vec![0.0; size];
            episode_terms(ep, theta, reference, cfg, &mut g).map(|t| (t, g))
        })
        .collect();
    let n = batch.len() as f64;
    let mut grad = vec![0.0; size];
    let mut total = EpisodeTerms::default();
    for part in parts {
        let (t, g) = part?;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        total.objective += t.objective;
        total.surrogate += t.surrogate;
        total.kl_gen_sum += t.kl_gen_sum;
        total.kl_obs_sum += t.kl_obs_sum;
        total.entropy_sum += t.entropy_sum;
        total.gen_count += t.gen_count;
        total.obs_count += t.obs_count;
    }
    grad.iter_mut().for_each(|g| *g /= n);
    let mean = |s: f64, c: usize| if c == 0 { 0.0 } else { s / c as f64 };
    Ok(PolicyLoss {
        objective: total.objective / n,
        surrogate: total.surrogate / n,
        kl_gen: mean(total.kl_gen_sum, total.gen_count),
        kl_obs: mean(total.kl_obs_sum, total.obs_count),
        entropy: mean(total.entropy_sum, total.gen_count),
        grad,
    })
}

/// Mean squared error of the value head over all generated positions and its
/// descent gradient.
pub fn value_loss(batch: &[EpisodeSample], value: &ValueParams) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; value.weights().len()];
    let mut sum = 0.0;
    let mut count = 0usize;
    for ep in batch {
        for turn in &ep.turns {
            if turn.value_targets.len() != turn.generated.len() {
                return Err(Error::usage("value targets do not match generated tokens"));
            }
            for (step, &target) in turn.generated.iter().zip(&turn.value_targets) {
                let err = value.value(&step.features)? - target;
                sum += err * err;
                for &(j, x) in step.features.entries() {
                    grad[j as usize] += 2.0 * err * x;
                }
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok((0.0, grad));
    }
    let n = count as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok((sum / n, grad))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what} gradient entry {i} is {}", values[i]))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Update {
    pub policy: PolicyParams,
    pub value: ValueParams,
    /// Measured before the first epoch's step.
    pub report: LossReport,
}

/// Gradient ascent on the policy objective and descent on the value loss,
/// `epochs_per_batch` times against the same recorded sampling policy.
pub fn train_step(
    batch: &[EpisodeSample],
    policy: &PolicyParams,
    value: &ValueParams,
    reference: &PolicyParams,
    cfg: &OptimConfig,
) -> Result<Update> {
    cfg.validate()?;
    let mut policy = policy.clone();
    let mut value = value.clone();
    let mut report = None;
    for _ in 0..cfg.epochs_per_batch {
        let pl = policy_loss(batch, &policy, reference, cfg)?;
        let (vl, vg) = value_loss(batch, &value)?;
        ensure_finite("policy", &pl.grad)?;
        ensure_finite("value", &vg)?;
        if !pl.objective.is_finite() || !vl.is_finite() {
            return Err(Error::NonFinite(format!("objective {} / value loss {vl}", pl.objective)));
        }
        report.get_or_insert(LossReport {
            surrogate: pl.surrogate,
            kl_gen: pl.kl_gen,
            kl_obs: pl.kl_obs,
            value_loss: vl,
            entropy: pl.entropy,
            policy_grad_norm: norm(&pl.grad),
            value_grad_norm: norm(&vg),
        });
        for (w, g) in policy.weights_mut().iter_mut().zip(&pl.grad) {
            *w += cfg.lr_policy * g;
        }
        for (w, g) in value.weights_mut().iter_mut().zip(&vg) {
            *w -= cfg.lr_value * g;
        }
    }
    Ok(Update { policy, value, report: report.expect("at least one epoch") })
}
