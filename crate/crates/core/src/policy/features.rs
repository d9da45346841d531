//! Sparse state features for the linear policy and value heads.
//!
//! Blocks, in layout order:
//! bias, previous token, bag of the last `w` stream tokens, turn one-hot,
//! segment one-hot, question bag (think/search only), page-reference flag,
//! fetch digit cursor (fetch only), last-observation kind, last-observation
//! bag (answer only).

use super::vocab::{Segment, Vocab};
use crate::document::TokenId;
use crate::error::{Error, Result};
use std::collections::BTreeSet;

pub const MAX_TURN_FEATURES: usize = 8;
const CURSOR_SLOTS: usize = 11;
const OBS_KINDS: usize = 3;
/// Cursor activations are large so the sparse digit associations learn at
/// the same pace as the denser blocks under plain SGD.
const CURSOR_SCALE: f64 = 10.0;

/// Sparse feature vector with a declared dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    dim: usize,
    entries: Vec<(u32, f64)>,
}

impl Features {
    /// Entries are merged by index; duplicate indices add.
    pub fn new(dim: usize, mut entries: Vec<(u32, f64)>) -> Result<Self> {
        if let Some(&(i, _)) = entries.iter().find(|(i, _)| *i as usize >= dim) {
            return Err(Error::usage(format!("feature index {i} outside dimension {dim}")));
        }
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => merged.push((i, v)),
            }
        }
        Ok(Self { dim, entries: merged })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect();
        Self { dim: values.len(), entries }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i as usize] = v;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }
}

/// What the question contributes to features.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuestionView {
    /// Generated-vocabulary ids occurring in the question.
    pub tokens: BTreeSet<TokenId>,
    /// Digits of the first number in the question (the referenced page).
    pub page_digits: Vec<u8>,
}

impl QuestionView {
    pub fn new(question: &str, vocab: &Vocab) -> Self {
        let tokens = vocab.question_tokens(question).into_iter().collect();
        let page_digits = question
            .split(|c: char| !c.is_ascii_digit())
            .find(|run| !run.is_empty())
            .map(|run| run.bytes().map(|b| b - b'0').collect())
            .unwrap_or_default();
        Self { tokens, page_digits }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ObservationKind {
    #[default]
    None,
    Pages,
    Notice,
}

/// The most recent environment observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationView {
    pub kind: ObservationKind,
    pub tokens: BTreeSet<TokenId>,
}

/// Everything the feature map reads at one position.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    /// Stream tokens before this position (generated and observation).
    pub history: &'a [TokenId],
    /// 1-based turn number.
    pub turn: usize,
    pub segment: Segment,
    /// Content tokens already emitted inside the current segment.
    pub segment_len: usize,
    pub question: &'a QuestionView,
    pub last_observation: &'a ObservationView,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMap {
    window: usize,
    vocab_size: usize,
    generated_len: usize,
    prev: usize,
    recent: usize,
    turn: usize,
    segment: usize,
    question: usize,
    page_ref: usize,
    cursor: usize,
    obs_kind: usize,
    obs_bag: usize,
    dim: usize,
}

impl FeatureMap {
    pub fn new(vocab: &Vocab, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::config("feature window must be at least 1"));
        }
        let v = vocab.len();
        let g = vocab.generated_len();
        let prev = 1;
        let recent = prev + v + 1;
        let turn = recent + v;
        let segment = turn + MAX_TURN_FEATURES;
        let question = segment + Segment::COUNT;
        let page_ref = question + g;
        let cursor = page_ref + 1;
        let obs_kind = cursor + CURSOR_SLOTS;
        let obs_bag = obs_kind + OBS_KINDS;
        let dim = obs_bag + vocab.observation_len();
        Ok(Self {
            window,
            vocab_size: v,
            generated_len: g,
            prev,
            recent,
            turn,
            segment,
            question,
            page_ref,
            cursor,
            obs_kind,
            obs_bag,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn features(&self, ctx: &Context<'_>) -> Features {
        let mut e: Vec<(u32, f64)> = Vec::with_capacity(16 + self.window + ctx.question.tokens.len());
        let mut push = |i: usize, v: f64| e.push((i as u32, v));
        push(0, 1.0);
        let prev = ctx.history.last().map(|&t| t as usize).unwrap_or(self.vocab_size);
        push(self.prev + prev.min(self.vocab_size), 1.0);
        let start = ctx.history.len().saturating_sub(self.window);
        let scale = 1.0 / self.window as f64;
        for &t in &ctx.history[start..] {
            if (t as usize) < self.vocab_size {
                push(self.recent + t as usize, scale);
            }
        }
        push(self.turn + ctx.turn.clamp(1, MAX_TURN_FEATURES) - 1, 1.0);
        push(self.segment + ctx.segment.index(), 1.0);
        if matches!(ctx.segment, Segment::InThink | Segment::InSearch) {
            for &t in &ctx.question.tokens {
                if (t as usize) < self.generated_len {
                    push(self.question + t as usize, 1.0);
                }
            }
        }
        if !ctx.question.page_digits.is_empty() {
            push(self.page_ref, 1.0);
        }
        if ctx.segment == Segment::InFetch {
            let slot = ctx
                .question
                .page_digits
                .get(ctx.segment_len)
                .map(|&d| d as usize)
                .unwrap_or(CURSOR_SLOTS - 1);
            push(self.cursor + slot, CURSOR_SCALE);
        }
        let kind = match ctx.last_observation.kind {
            ObservationKind::None => 0,
            ObservationKind::Pages => 1,
            ObservationKind::Notice => 2,
        };
        push(self.obs_kind + kind, 1.0);
        if ctx.segment == Segment::InAnswer {
            for &t in &ctx.last_observation.tokens {
                let t = t as usize;
                if t >= self.generated_len && t < self.vocab_size {
                    push(self.obs_bag + t - self.generated_len, 1.0);
                }
            }
        }
        Features::new(self.dim, e).expect("feature layout stays within its dimension")
    }
}
