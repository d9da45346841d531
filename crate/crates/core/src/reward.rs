//! Turn-level and token-level reward components.
//!
//! The immediate turn reward is `r_t = f_t + u_t`: a format term in `{0, -1}`
//! and a result term that depends on the action type. Search queries that
//! repeat earlier queries additionally receive a token-level penalty, computed
//! here as an n-gram Jaccard overlap plus per-token weights and applied by
//! [`crate::credit`].

use crate::document::Task;
use crate::error::{Error, Result};
use crate::grammar::{Command, ParseResult};
use crate::text::{boxed_content, normalize_answer};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Answer scale.
    pub alpha: f64,
    /// Repetition penalty weight.
    pub eta: f64,
    /// NDCG cutoff.
    pub m: usize,
    /// n-gram order for query overlap.
    pub ngram_n: usize,
    pub retrieval_k: usize,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { alpha: 5.0, eta: 0.5, m: 5, ngram_n: 3, retrieval_k: 1 }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 1.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!("alpha must be > 1, got {}", self.alpha)));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::config(format!("eta must be >= 0, got {}", self.eta)));
        }
        if self.m == 0 || self.ngram_n == 0 || self.retrieval_k == 0 {
            return Err(Error::config("m, ngram_n and retrieval_k must be positive"));
        }
        Ok(())
    }
}

/// Sub-terms that entered a turn's reward.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardComponents {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndcg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_idx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_rep: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format_reward: f64,
    pub result_reward: f64,
    /// Always `format_reward + result_reward`.
    pub turn_reward: f64,
    pub components: RewardComponents,
}

/// What a turn produced, independent of the environment that produced it.
#[derive(Debug, Clone, Copy)]
pub struct TurnEvidence<'a> {
    pub collected: &'a [usize],
    pub ranked: &'a [usize],
}

pub fn format_reward(parsed: &ParseResult) -> f64 {
    if parsed.is_well_formed() {
        0.0
    } else {
        -1.0
    }
}

fn char_counts(s: &str) -> BTreeMap<char, usize> {
    let mut m = BTreeMap::new();
    for c in s.chars() {
        *m.entry(c).or_insert(0) += 1;
    }
    m
}

/// F1 over character multisets of the normalized strings.
pub fn char_f1(predicted: &str, gold: &str) -> f64 {
    let p = normalize_answer(predicted);
    let g = normalize_answer(gold);
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let pc = char_counts(&p);
    let gc = char_counts(&g);
    let overlap: usize = pc.iter().map(|(c, n)| (*n).min(*gc.get(c).unwrap_or(&0))).sum();
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.chars().count() as f64;
    let recall = overlap as f64 / g.chars().count() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Binary-relevance NDCG over the first `m` ranks.
pub fn ndcg_at_m(ranked: &[usize], gold: &BTreeSet<usize>, m: usize) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::config("NDCG is undefined for an empty gold set"));
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(m)
        .enumerate()
        .filter(|(_, p)| gold.contains(p))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let idcg: f64 = (1..=m.min(gold.len())).map(discount).sum();
    Ok(dcg / idcg)
}

/// `exp(-d)` where `d` is the mean absolute index distance to the gold pages.
pub fn fetch_proximity(page: usize, gold: &BTreeSet<usize>) -> f64 {
    let total: f64 = gold.iter().map(|&g| (page as f64 - g as f64).abs()).sum();
    (-(total / gold.len() as f64)).exp()
}

/// Fraction of this turn's pages that were already accessed.
pub fn repetition_fraction(collected: &[usize], accessed: &BTreeSet<usize>) -> f64 {
    let repeated = collected.iter().filter(|p| accessed.contains(p)).count();
    repeated as f64 / collected.len() as f64
}

/// Text scored against the gold answer: the last `\boxed{}` span if present.
pub fn answer_span(text: &str) -> &str {
    boxed_content(text).unwrap_or(text)
}

/// Result reward for a well-formed action and its components.
pub fn result_reward(
    command: &Command,
    evidence: TurnEvidence<'_>,
    task: &Task,
    accessed: &BTreeSet<usize>,
    cfg: &RewardConfig,
) -> Result<(f64, RewardComponents)> {
    let mut comp = RewardComponents::default();
    let rep = |comp: &mut RewardComponents| {
        if evidence.collected.is_empty() {
            0.0
        } else {
            let r = repetition_fraction(evidence.collected, accessed);
            comp.f_rep = Some(r);
            r
        }
    };
    let u = match command {
        Command::Answer { text } => {
            let f1 = char_f1(answer_span(text), &task.gold_answer);
            comp.f1 = Some(f1);
            f1 * cfg.alpha
        }
        Command::Fetch { .. } => {
            let f_idx = match evidence.collected.first() {
                Some(&c1) => {
                    let v = fetch_proximity(c1, &task.gold_pages);
                    comp.f_idx = Some(v);
                    v
                }
                None => 0.0,
            };
            f_idx - rep(&mut comp) * cfg.eta
        }
        Command::Search { .. } => {
            let ndcg = ndcg_at_m(evidence.ranked, &task.gold_pages, cfg.m)?;
            comp.ndcg = Some(ndcg);
            ndcg - rep(&mut comp) * cfg.eta
        }
    };
    Ok((u, comp))
}

/// Complete immediate reward for one turn. `past_queries` holds the term
/// sequences of earlier searches in the episode and feeds the overlap term.
pub fn turn_reward(
    parsed: &ParseResult,
    evidence: TurnEvidence<'_>,
    task: &Task,
    accessed: &BTreeSet<usize>,
    current_query: Option<&[String]>,
    past_queries: &[Vec<String>],
    cfg: &RewardConfig,
) -> Result<RewardBreakdown> {
    let format_reward = format_reward(parsed);
    let (result_reward, mut components) = match parsed.action() {
        Some(action) => result_reward(&action.command, evidence, task, accessed, cfg)?,
        None => (0.0, RewardComponents::default()),
    };
    if let (Some(Command::Search { .. }), Some(query)) = (parsed.action().map(|a| &a.command), current_query) {
        if !past_queries.is_empty() {
            components.overlap = Some(query_overlap(query, past_queries, cfg.ngram_n));
        }
    }
    Ok(RewardBreakdown {
        format_reward,
        result_reward,
        turn_reward: format_reward + result_reward,
        components,
    })
}

/// Set of word n-grams; a sequence shorter than `n` is a single gram.
pub fn ngrams(tokens: &[String], n: usize) -> BTreeSet<Vec<String>> {
    if tokens.is_empty() {
        BTreeSet::new()
    } else if tokens.len() < n {
        [tokens.to_vec()].into()
    } else {
        tokens.windows(n).map(|w| w.to_vec()).collect()
    }
}

fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Maximum n-gram Jaccard similarity against any earlier query; 0 with no history.
pub fn query_overlap(current: &[String], past: &[Vec<String>], n: usize) -> f64 {
    let cur = ngrams(current, n);
    past.iter()
        .map(|q| jaccard(&cur, &ngrams(q, n)))
        .fold(0.0, f64::max)
}

/// Per-token penalty weights: `c_u / sum(c)`, where `c_u` counts the current
/// query's n-gram windows that contain token `u` and also occur in some past
/// query. All zeros when nothing repeats.
pub fn token_weights(current: &[String], past: &[Vec<String>], n: usize) -> Vec<f64> {
    let mut counts = vec![0usize; current.len()];
    if current.is_empty() || past.is_empty() {
        return vec![0.0; current.len()];
    }
    let seen: BTreeSet<Vec<String>> = past.iter().flat_map(|q| ngrams(q, n)).collect();
    let width = n.min(current.len());
    for start in 0..=current.len() - width {
        if seen.contains(&current[start..start + width]) {
            for c in &mut counts[start..start + width] {
                *c += 1;
            }
        }
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0.0; current.len()];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}
