//! Navigation metrics: page recall, precision, F1, unique pages and answer match.

use super::rollout::Trajectory;
use crate::document::QueryKind;
use crate::reward::answer_span;
use crate::text::normalize_answer;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Decides whether a predicted answer matches the gold answer.
pub trait AnswerJudge: Send + Sync {
    fn judge(&self, predicted: &str, gold: &str) -> bool;
}

/// Normalized exact match on the scored answer span.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl AnswerJudge for ExactMatch {
    fn judge(&self, predicted: &str, gold: &str) -> bool {
        normalize_answer(answer_span(predicted)) == normalize_answer(gold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavMetrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub unique_pages: usize,
    pub answer_match: bool,
}

/// Set-based metrics; precision is 0 when nothing was collected.
pub fn page_metrics(collected: &BTreeSet<usize>, gold: &BTreeSet<usize>) -> (f64, f64, f64) {
    let hit = collected.intersection(gold).count() as f64;
    let recall = if gold.is_empty() { 0.0 } else { hit / gold.len() as f64 };
    let precision = if collected.is_empty() { 0.0 } else { hit / collected.len() as f64 };
    let f1 = if recall + precision == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    (recall, precision, f1)
}

pub fn nav_metrics(trajectory: &Trajectory, judge: &dyn AnswerJudge) -> NavMetrics {
    let collected = trajectory.accessed_pages();
    let (recall, precision, f1) = page_metrics(&collected, &trajectory.gold.pages);
    NavMetrics {
        recall,
        precision,
        f1,
        unique_pages: collected.len(),
        answer_match: trajectory
            .final_answer
            .as_deref()
            .is_some_and(|a| judge.judge(a, &trajectory.gold.answer)),
    }
}

/// Means over a group of trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSummary {
    pub episodes: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub unique_pages: f64,
    pub accuracy: f64,
    pub reward: f64,
}

impl MetricSummary {
    pub fn from_trajectories<'a>(trajectories: impl IntoIterator<Item = &'a Trajectory>, judge: &dyn AnswerJudge) -> Self {
        let mut s = MetricSummary::default();
        for t in trajectories {
            let m = nav_metrics(t, judge);
            s.episodes += 1;
            s.recall += m.recall;
            s.precision += m.precision;
            s.f1 += m.f1;
            s.unique_pages += m.unique_pages as f64;
            s.accuracy += if m.answer_match { 1.0 } else { 0.0 };
            s.reward += t.total_reward();
        }
        if s.episodes > 0 {
            let n = s.episodes as f64;
            for v in [&mut s.recall, &mut s.precision, &mut s.f1, &mut s.unique_pages, &mut s.accuracy, &mut s.reward] {
                *v /= n;
            }
        }
        s
    }
}

/// Summary overall and per query kind.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub rows: BTreeMap<String, MetricSummary>,
}

impl MetricsTable {
    pub fn new(trajectories: &[Trajectory], judge: &dyn AnswerJudge) -> Self {
        let mut rows = BTreeMap::new();
        rows.insert("all".to_string(), MetricSummary::from_trajectories(trajectories, judge));
        for (name, kind) in [("general", QueryKind::General), ("page_referenced", QueryKind::PageReferenced)] {
            let group: Vec<&Trajectory> = trajectories.iter().filter(|t| t.task.query_kind == kind).collect();
            if !group.is_empty() {
                rows.insert(name.to_string(), MetricSummary::from_trajectories(group, judge));
            }
        }
        Self { rows }
    }
}

impl fmt::Display for MetricsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "split", "episodes", "recall", "prec", "f1", "#UP", "acc", "reward"
        )?;
        for (name, s) in &self.rows {
            writeln!(
                f,
                "{:<16} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>8.3} {:>8.4} {:>8.4}",
                name, s.episodes, s.recall, s.precision, s.f1, s.unique_pages, s.accuracy, s.reward
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn page_metric_examples() {
        assert_eq!(page_metrics(&set(&[1, 3]), &set(&[1, 2])), (0.5, 0.5, 0.5));
        assert_eq!(page_metrics(&set(&[1, 2]), &set(&[1, 2])), (1.0, 1.0, 1.0));
        assert_eq!(page_metrics(&set(&[]), &set(&[1, 2])), (0.0, 0.0, 0.0));
    }

    #[test]
    fn exact_match_normalizes_and_reads_boxed() {
        assert!(ExactMatch.judge("  Alpha ", "alpha"));
        assert!(ExactMatch.judge(r"it is \boxed{alpha}", "alpha"));
        assert!(!ExactMatch.judge("alphas", "alpha"));
    }
}
