//! Offline re-scoring of persisted trajectories from their logged evidence.

use super::rollout::Trajectory;
use crate::credit::{compute_advantages, AdvantageTable, GaeConfig, TokenGaeScope};
use crate::error::Result;
use crate::grammar::{parse_response, Command};
use crate::reward::{turn_reward, RewardComponents, TurnEvidence};
use crate::text::terms;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnScore {
    pub turn: usize,
    pub format_reward: f64,
    pub result_reward: f64,
    pub turn_reward: f64,
    pub components: RewardComponents,
    /// Parse result and every reward field equal the logged ones bit for bit.
    pub matches_log: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub episode_id: u64,
    pub turns: Vec<TurnScore>,
    /// Credit assignment with an all-zero value function.
    pub advantages: AdvantageTable,
    pub matches_log: bool,
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits()
}

fn same_opt(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => same(x, y),
        (None, None) => true,
        _ => false,
    }
}

fn same_components(a: &RewardComponents, b: &RewardComponents) -> bool {
    same_opt(a.f1, b.f1)
        && same_opt(a.ndcg, b.ndcg)
        && same_opt(a.f_idx, b.f_idx)
        && same_opt(a.f_rep, b.f_rep)
        && same_opt(a.overlap, b.overlap)
}

/// Recomputes every turn reward from the response text and the logged
/// collected/ranked pages, then runs credit assignment with zero values.
pub fn score_trajectory(t: &Trajectory, gae: &GaeConfig, scope: TokenGaeScope) -> Result<ScoreRow> {
    let mut accessed = BTreeSet::new();
    let mut past_queries: Vec<Vec<String>> = Vec::new();
    let mut turns = Vec::with_capacity(t.turns.len());
    for log in &t.turns {
        let parsed = parse_response(&log.response_text);
        let query = match parsed.action().map(|a| &a.command) {
            Some(Command::Search { query }) => Some(terms(query)),
            _ => None,
        };
        let b = turn_reward(
            &parsed,
            TurnEvidence { collected: &log.collected_pages, ranked: &log.ranked_list },
            &t.task,
            &accessed,
            query.as_deref(),
            &past_queries,
            &t.reward_config,
        )?;
        let matches_log = parsed == log.parse_result
            && same(b.format_reward, log.format_reward)
            && same(b.result_reward, log.result_reward)
            && same(b.turn_reward, log.turn_reward)
            && same_components(&b.components, &log.components);
        accessed.extend(log.collected_pages.iter().copied());
        if let Some(q) = query {
            past_queries.push(q);
        }
        turns.push(TurnScore {
            turn: log.turn,
            format_reward: b.format_reward,
            result_reward: b.result_reward,
            turn_reward: b.turn_reward,
            components: b.components,
            matches_log,
        });
    }
    let len = t.turns.last().map_or(0, |l| l.positions.end);
    let advantages = compute_advantages(&t.turn_records(), &vec![0.0; len], gae, scope)?;
    let matches_log = turns.iter().all(|s| s.matches_log);
    Ok(ScoreRow { episode_id: t.episode_id, turns, advantages, matches_log })
}
