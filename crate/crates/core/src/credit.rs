//! Dual-level credit assignment.
//!
//! Turn-level GAE turns the immediate turn rewards into `V̂_t`; `V̂_t` is placed
//! on the last generated token of turn `t`, repeated-query penalties are spread
//! over the search query tokens, and token-level GAE over the episode's
//! generated positions yields per-token advantages and value targets.

use crate::error::{Error, Result};
use crate::grammar::ActionKind;
use serde::{Deserialize, Serialize};
use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaeConfig {
    pub gamma_turn: f64,
    pub lambda_turn: f64,
    pub gamma_token: f64,
    pub lambda_token: f64,
}

impl Default for GaeConfig {
    fn default() -> Self {
        Self { gamma_turn: 0.9, lambda_turn: 1.0, gamma_token: 1.0, lambda_token: 1.0 }
    }
}

impl GaeConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_turn", self.gamma_turn),
            ("lambda_turn", self.lambda_turn),
            ("gamma_token", self.gamma_token),
            ("lambda_token", self.lambda_token),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Whether token-level GAE runs over the whole episode or restarts per turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenGaeScope {
    #[default]
    Episode,
    Turn,
}

/// Credit-assignment view of one turn. Positions index the episode's
/// concatenated generated tokens (observation tokens excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub positions: Range<usize>,
    /// Search query tokens; present only for search turns.
    pub query_span: Option<Range<usize>>,
    /// `None` for malformed responses.
    pub action_kind: Option<ActionKind>,
    pub turn_reward: f64,
    pub overlap: f64,
    /// One weight per query-span token.
    pub token_penalty_weights: Vec<f64>,
}

impl TurnRecord {
    pub fn last_position(&self) -> usize {
        self.positions.end - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageTable {
    pub turn_values: Vec<f64>,
    pub token_rewards: Vec<f64>,
    pub token_advantages: Vec<f64>,
    pub value_targets: Vec<f64>,
}

fn gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let mut adv = vec![0.0; rewards.len()];
    let mut running = 0.0;
    for k in (0..rewards.len()).rev() {
        let next = values.get(k + 1).copied().unwrap_or(0.0);
        let delta = rewards[k] + gamma * next - values[k];
        running = delta + gamma * lambda * running;
        adv[k] = running;
    }
    adv
}

/// `V̂_t = Σ_{k≥t} (γλ)^{k-t} δ_k + V_t` with a zero bootstrap after the last turn.
pub fn turn_gae(turn_rewards: &[f64], turn_values: &[f64], cfg: &GaeConfig) -> Result<Vec<f64>> {
    if turn_rewards.len() != turn_values.len() {
        return Err(Error::usage(format!(
            "turn_gae: {} rewards vs {} values",
            turn_rewards.len(),
            turn_values.len()
        )));
    }
    if turn_rewards.is_empty() {
        return Err(Error::usage("turn_gae: empty episode"));
    }
    let adv = gae(turn_rewards, turn_values, cfg.gamma_turn, cfg.lambda_turn);
    Ok(adv.iter().zip(turn_values).map(|(a, v)| a + v).collect())
}

/// Token-level GAE; returns `(advantages, value_targets)`.
pub fn token_gae(rewards: &[f64], values: &[f64], cfg: &GaeConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.len() != values.len() {
        return Err(Error::usage(format!(
            "token_gae: {} rewards vs {} values",
            rewards.len(),
            values.len()
        )));
    }
    let adv = gae(rewards, values, cfg.gamma_token, cfg.lambda_token);
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

fn check_layout(turns: &[TurnRecord]) -> Result<usize> {
    let mut cursor = 0;
    for (t, turn) in turns.iter().enumerate() {
        let p = &turn.positions;
        if p.start >= p.end {
            return Err(Error::usage(format!("turn {} has no generated tokens", t + 1)));
        }
        if p.start < cursor {
            return Err(Error::usage(format!("turn {} overlaps the previous turn", t + 1)));
        }
        cursor = p.end;
        match (&turn.query_span, turn.action_kind) {
            (Some(q), Some(ActionKind::Search)) => {
                if q.start < p.start || q.end > p.end || q.start > q.end {
                    return Err(Error::usage(format!("turn {} query span outside the turn", t + 1)));
                }
                if turn.token_penalty_weights.len() != q.len() {
                    return Err(Error::usage(format!(
                        "turn {}: {} weights for {} query tokens",
                        t + 1,
                        turn.token_penalty_weights.len(),
                        q.len()
                    )));
                }
            }
            (None, Some(ActionKind::Search)) => {
                return Err(Error::usage(format!("search turn {} lacks a query span", t + 1)))
            }
            (Some(_), _) => {
                return Err(Error::usage(format!("non-search turn {} has a query span", t + 1)))
            }
            (None, _) => {}
        }
    }
    Ok(cursor)
}

/// Places `V̂_t` on each turn's final token and `-w_i · overlap_t` on query
/// tokens of search turns after the first; every other position gets 0.
pub fn assemble_token_rewards(turns: &[TurnRecord], turn_values_hat: &[f64]) -> Result<Vec<f64>> {
    if turns.len() != turn_values_hat.len() {
        return Err(Error::usage(format!(
            "{} turns vs {} turn values",
            turns.len(),
            turn_values_hat.len()
        )));
    }
    let len = check_layout(turns)?;
    let mut rewards = vec![0.0; len];
    for (t, (turn, &v_hat)) in turns.iter().zip(turn_values_hat).enumerate() {
        if t > 0 && turn.action_kind == Some(ActionKind::Search) {
            if let Some(q) = &turn.query_span {
                for (pos, w) in q.clone().zip(&turn.token_penalty_weights) {
                    if pos != turn.last_position() {
                        rewards[pos] = 0.0 - w * turn.overlap;
                    }
                }
            }
        }
        rewards[turn.last_position()] = v_hat;
    }
    Ok(rewards)
}

/// Full pipeline for one episode. `token_values` holds `V(s^i)` for every
/// generated position; the turn-level values are read at each turn's last token.
pub fn compute_advantages(
    turns: &[TurnRecord],
    token_values: &[f64],
    cfg: &GaeConfig,
    scope: TokenGaeScope,
) -> Result<AdvantageTable> {
    let len = check_layout(turns)?;
    if token_values.len() != len {
        return Err(Error::usage(format!(
            "{} token values for {} generated positions",
            token_values.len(),
            len
        )));
    }
    let rewards: Vec<f64> = turns.iter().map(|t| t.turn_reward).collect();
    let values: Vec<f64> = turns.iter().map(|t| token_values[t.last_position()]).collect();
    let v_hat = turn_gae(&rewards, &values, cfg)?;
    let token_rewards = assemble_token_rewards(turns, &v_hat)?;
    let (token_advantages, value_targets) = match scope {
        TokenGaeScope::Episode => token_gae(&token_rewards, token_values, cfg)?,
        TokenGaeScope::Turn => {
            let mut adv = vec![0.0; len];
            let mut tgt = vec![0.0; len];
            for turn in turns {
                let r = turn.positions.clone();
                let (a, v) = token_gae(&token_rewards[r.clone()], &token_values[r.clone()], cfg)?;
                adv[r.clone()].copy_from_slice(&a);
                tgt[r].copy_from_slice(&v);
            }
            (adv, tgt)
        }
    };
    Ok(AdvantageTable { turn_values: v_hat, token_rewards, token_advantages, value_targets })
}

/// Token reward of the single-response preliminary: the sequence-level reward on
/// the final token and a per-token KL penalty everywhere. Kept for reference;
/// the training objective applies KL in the loss instead.
pub fn kl_shaped_token_rewards(final_reward: f64, per_token_kl: &[f64], beta: f64) -> Vec<f64> {
    let mut r: Vec<f64> = per_token_kl.iter().map(|kl| -beta * kl).collect();
    if let Some(last) = r.last_mut() {
        *last += final_reward;
    }
    r
}
