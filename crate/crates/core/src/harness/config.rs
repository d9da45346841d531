//! Flat `key = value` run configuration.
//!
//! Values are TOML scalars; bare words are accepted as strings so that
//! `action_space = search_only` works without quotes. Unknown keys are errors.

use crate::credit::{GaeConfig, TokenGaeScope};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::policy::{ActionSpace, DecodeConfig, SegmentLimits};
use crate::ppo::OptimConfig;
use crate::reward::RewardConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub eta: f64,
    pub m: usize,
    #[serde(rename = "T", alias = "horizon")]
    pub horizon: usize,
    pub ngram_n: usize,
    pub retrieval_k: usize,
    pub epsilon: f64,
    pub beta_gen: f64,
    pub beta_obs: f64,
    pub gamma_turn: f64,
    pub gamma_token: f64,
    pub lambda_turn: f64,
    pub lambda_token: f64,
    pub token_gae_scope: TokenGaeScope,
    /// Whiten token advantages across each training batch.
    pub normalize_advantages: bool,
    pub batch_episodes: usize,
    pub epochs_per_batch: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub token_cap: usize,
    pub think_limit: usize,
    pub query_limit: usize,
    pub fetch_digit_limit: usize,
    pub answer_limit: usize,
    pub temperature: f64,
    pub action_space: ActionSpace,
    pub window: usize,
    pub init_scale: f64,
    pub steps: usize,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    /// Fraction of documents, taken from the end of the corpus, held out for evaluation.
    pub eval_fraction: f64,
    pub seed: u64,
    pub init_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let reward = RewardConfig::default();
        let gae = GaeConfig::default();
        let optim = OptimConfig::default();
        let decode = DecodeConfig::default();
        Self {
            alpha: reward.alpha,
            eta: reward.eta,
            m: reward.m,
            horizon: EnvConfig::default().horizon,
            ngram_n: reward.ngram_n,
            retrieval_k: reward.retrieval_k,
            epsilon: optim.epsilon,
            beta_gen: optim.beta_gen,
            beta_obs: optim.beta_obs,
            gamma_turn: gae.gamma_turn,
            gamma_token: gae.gamma_token,
            lambda_turn: gae.lambda_turn,
            lambda_token: gae.lambda_token,
            token_gae_scope: TokenGaeScope::default(),
            normalize_advantages: false,
            batch_episodes: optim.batch_episodes,
            epochs_per_batch: optim.epochs_per_batch,
            lr_policy: optim.lr_policy,
            lr_value: optim.lr_value,
            token_cap: decode.token_cap,
            think_limit: decode.limits.think,
            query_limit: decode.limits.query,
            fetch_digit_limit: decode.limits.fetch_digits,
            answer_limit: decode.limits.answer,
            temperature: decode.temperature,
            action_space: decode.action_space,
            window: 8,
            init_scale: 0.01,
            steps: 200,
            eval_every: 50,
            checkpoint_every: 100,
            eval_fraction: 0.2,
            seed: 0,
            init_seed: 0,
        }
    }
}

impl RunConfig {
    pub fn reward(&self) -> RewardConfig {
        RewardConfig {
            alpha: self.alpha,
            eta: self.eta,
            m: self.m,
            ngram_n: self.ngram_n,
            retrieval_k: self.retrieval_k,
        }
    }

    pub fn gae(&self) -> GaeConfig {
        GaeConfig {
            gamma_turn: self.gamma_turn,
            lambda_turn: self.lambda_turn,
            gamma_token: self.gamma_token,
            lambda_token: self.lambda_token,
        }
    }

    pub fn optim(&self) -> OptimConfig {
        OptimConfig {
            epsilon: self.epsilon,
            beta_gen: self.beta_gen,
            beta_obs: self.beta_obs,
            lr_policy: self.lr_policy,
            lr_value: self.lr_value,
            epochs_per_batch: self.epochs_per_batch,
            batch_episodes: self.batch_episodes,
        }
    }

    pub fn env(&self) -> EnvConfig {
        EnvConfig {
            horizon: self.horizon,
            retrieval_k: self.retrieval_k,
            fetch_enabled: self.action_space == ActionSpace::Full,
        }
    }

    pub fn decode(&self) -> DecodeConfig {
        DecodeConfig {
            temperature: self.temperature,
            token_cap: self.token_cap,
            limits: SegmentLimits {
                think: self.think_limit,
                query: self.query_limit,
                fetch_digits: self.fetch_digit_limit,
                answer: self.answer_limit,
            },
            action_space: self.action_space,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.reward().validate()?;
        self.gae().validate()?;
        self.optim().validate()?;
        if self.horizon == 0 || self.retrieval_k == 0 {
            return Err(Error::config("T and retrieval_k must be at least 1"));
        }
        if self.token_cap == 0 || self.window == 0 {
            return Err(Error::config("token_cap and window must be at least 1"));
        }
        if self.fetch_digit_limit == 0 || self.query_limit == 0 || self.answer_limit == 0 {
            return Err(Error::config("query, fetch and answer limits must be at least 1"));
        }
        if !(self.temperature >= 0.0) || !(self.init_scale >= 0.0) {
            return Err(Error::config("temperature and init_scale must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.eval_fraction) {
            return Err(Error::config("eval_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = parse_flat(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Flat rendering that [`RunConfig::parse`] reads back unchanged.
    pub fn to_flat(&self) -> Result<String> {
        to_flat(self)
    }
}

/// Parses `key = value` lines (with `#` comments) into any deserialisable struct.
pub fn parse_flat<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut table = toml::Table::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}: expected key = value", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(Error::config(format!("line {}: empty key", lineno + 1)));
        }
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        if table.insert(key.to_string(), parsed).is_some() {
            return Err(Error::config(format!("line {}: duplicate key {key}", lineno + 1)));
        }
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(e.message().to_string()))
}

pub fn to_flat<T: Serialize>(value: &T) -> Result<String> {
    let table = toml::Table::try_from(value).map_err(|e| Error::config(e.to_string()))?;
    let mut out = String::new();
    for (k, v) in table {
        out.push_str(&format!("{k} = {v}\n"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_reference_settings() {
        let c = RunConfig::default();
        assert_eq!((c.alpha, c.eta, c.m, c.horizon, c.ngram_n, c.retrieval_k), (5.0, 0.5, 5, 6, 3, 1));
        assert_eq!((c.epsilon, c.beta_gen, c.beta_obs), (0.2, 0.001, 0.01));
        assert_eq!((c.gamma_turn, c.gamma_token, c.lambda_turn, c.lambda_token), (0.9, 1.0, 1.0, 1.0));
        assert_eq!((c.batch_episodes, c.token_cap), (128, 64));
    }

    #[test]
    fn parses_flat_keys_with_comments_and_bare_words() {
        let c = RunConfig::parse("alpha=4\nT = 3 # horizon\n\naction_space = search_only\nseed=7\n").unwrap();
        assert_eq!((c.alpha, c.horizon, c.seed), (4.0, 3, 7));
        assert_eq!(c.action_space, ActionSpace::SearchOnly);
        assert_eq!(RunConfig::parse("horizon = 2").unwrap().horizon, 2);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["alpha = 1", "nonsense = 3", "alpha", "T = 0", "T = 2\nT = 3", "gamma_turn = 2", "epsilon = 0"] {
            let err = RunConfig::parse(bad).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{bad}: {err}");
        }
    }

    #[test]
    fn flat_rendering_round_trips() {
        let c = RunConfig { lr_policy: 0.123456789012345, action_space: ActionSpace::SearchOnly, ..RunConfig::default() };
        assert_eq!(RunConfig::parse(&c.to_flat().unwrap()).unwrap(), c);
    }
}
