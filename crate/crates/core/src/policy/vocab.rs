//! Micro-vocabulary shared by the toy policy, the corpus generator and the
//! token-stream bookkeeping.
//!
//! Ids `0..generated_len()` are symbols the policy can emit: the eight
//! response tags, an end-of-turn marker, an unknown marker, digits and a small
//! word inventory. Ids from `generated_len()` up are observation symbols, one
//! per word plus an unknown id and a notice id; they stand in for the visual
//! tokens of page images and are never sampled.

use crate::document::TokenId;
use crate::grammar::{
    ANSWER_CLOSE, ANSWER_OPEN, FETCH_CLOSE, FETCH_OPEN, SEARCH_CLOSE, SEARCH_OPEN, THINK_CLOSE, THINK_OPEN,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Arc;

pub const THINK_OPEN_ID: TokenId = 0;
pub const THINK_CLOSE_ID: TokenId = 1;
pub const SEARCH_OPEN_ID: TokenId = 2;
pub const SEARCH_CLOSE_ID: TokenId = 3;
pub const FETCH_OPEN_ID: TokenId = 4;
pub const FETCH_CLOSE_ID: TokenId = 5;
pub const ANSWER_OPEN_ID: TokenId = 6;
pub const ANSWER_CLOSE_ID: TokenId = 7;
pub const EOT_ID: TokenId = 8;
pub const UNK_ID: TokenId = 9;
pub const DIGIT_BASE: TokenId = 10;
pub const WORD_BASE: TokenId = 20;

const TAGS: [&str; 8] = [
    THINK_OPEN,
    THINK_CLOSE,
    SEARCH_OPEN,
    SEARCH_CLOSE,
    FETCH_OPEN,
    FETCH_CLOSE,
    ANSWER_OPEN,
    ANSWER_CLOSE,
];

pub const FUNCTION_WORDS: [&str; 5] = ["what", "is", "on", "page", "the"];
pub const KEY_WORDS: [&str; 8] = ["date", "budget", "revenue", "author", "title", "venue", "owner", "region"];
pub const VALUE_WORDS: [&str; 12] = [
    "alpha", "bravo", "cobalt", "delta", "ember", "falcon", "garnet", "harbor", "indigo", "juniper", "kepler",
    "lumen",
];
pub const FILLER_WORDS: [&str; 15] = [
    "report", "table", "figure", "summary", "section", "chart", "total", "annual", "market", "policy", "review",
    "growth", "index", "note", "plan",
];

/// Which actions the policy may open after `</think>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    #[default]
    Full,
    SearchOnly,
}

/// Tag that ends a content segment.
pub fn close_tag(segment: Segment) -> Option<TokenId> {
    match segment {
        Segment::InThink => Some(THINK_CLOSE_ID),
        Segment::InSearch => Some(SEARCH_CLOSE_ID),
        Segment::InFetch => Some(FETCH_CLOSE_ID),
        Segment::InAnswer => Some(ANSWER_CLOSE_ID),
        _ => None,
    }
}

/// Position within a response, tracked token by token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    Start,
    InThink,
    AfterThink,
    InSearch,
    InFetch,
    InAnswer,
    AfterAction,
    Ended,
    /// A token broke the grammar; used only for scripted responses.
    Invalid,
    /// Teacher-forced observation span.
    Observation,
}

impl Segment {
    pub const COUNT: usize = 10;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn advance(self, token: TokenId, vocab: &Vocab) -> Segment {
        use Segment::*;
        let content = vocab.is_word(token) || vocab.is_digit(token);
        match (self, token) {
            (Start, THINK_OPEN_ID) => InThink,
            (InThink, THINK_CLOSE_ID) => AfterThink,
            (InThink, _) if content => InThink,
            (AfterThink, SEARCH_OPEN_ID) => InSearch,
            (AfterThink, FETCH_OPEN_ID) => InFetch,
            (AfterThink, ANSWER_OPEN_ID) => InAnswer,
            (InSearch, SEARCH_CLOSE_ID) | (InFetch, FETCH_CLOSE_ID) | (InAnswer, ANSWER_CLOSE_ID) => AfterAction,
            (InSearch | InAnswer, _) if content => self,
            (InFetch, _) if vocab.is_digit(token) => InFetch,
            (AfterAction, EOT_ID) => Ended,
            (Observation, _) => Observation,
            _ => Invalid,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Vocab {
    words: Vec<String>,
    word_ids: HashMap<String, TokenId>,
    masks: HashMap<(Segment, ActionSpace), Arc<[TokenId]>>,
    closing: HashMap<Segment, Arc<[TokenId]>>,
    opening: HashMap<Segment, Arc<[TokenId]>>,
}

impl Default for Vocab {
    fn default() -> Self {
        let words: Vec<String> = FUNCTION_WORDS
            .iter()
            .chain(&KEY_WORDS)
            .chain(&VALUE_WORDS)
            .chain(&FILLER_WORDS)
            .map(|w| w.to_string())
            .collect();
        Self::with_words(words)
    }
}

impl Vocab {
    pub fn with_words(words: Vec<String>) -> Self {
        let word_ids = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), WORD_BASE + i as TokenId))
            .collect();
        let mut vocab = Self { words, word_ids, masks: HashMap::new(), closing: HashMap::new(), opening: HashMap::new() };
        let content: Vec<TokenId> = (DIGIT_BASE..vocab.generated_len() as TokenId).collect();
        let digits: Vec<TokenId> = (DIGIT_BASE..WORD_BASE).collect();
        let with = |mut v: Vec<TokenId>, extra: TokenId| {
            v.push(extra);
            v
        };
        let all_generated: Vec<TokenId> = (0..vocab.generated_len() as TokenId).collect();
        for space in [ActionSpace::Full, ActionSpace::SearchOnly] {
            let after_think = match space {
                ActionSpace::Full => vec![SEARCH_OPEN_ID, FETCH_OPEN_ID, ANSWER_OPEN_ID],
                ActionSpace::SearchOnly => vec![SEARCH_OPEN_ID, ANSWER_OPEN_ID],
            };
            let table = [
                (Segment::Start, vec![THINK_OPEN_ID]),
                (Segment::InThink, with(content.clone(), THINK_CLOSE_ID)),
                (Segment::AfterThink, after_think),
                (Segment::InSearch, with(content.clone(), SEARCH_CLOSE_ID)),
                (Segment::InFetch, with(digits.clone(), FETCH_CLOSE_ID)),
                (Segment::InAnswer, with(content.clone(), ANSWER_CLOSE_ID)),
                (Segment::AfterAction, vec![EOT_ID]),
                (Segment::Ended, vec![EOT_ID]),
                (Segment::Invalid, all_generated.clone()),
                (Segment::Observation, (0..vocab.len() as TokenId).collect()),
            ];
            for (seg, ids) in table {
                vocab.masks.insert((seg, space), ids.into());
            }
        }
        for seg in [Segment::InThink, Segment::InSearch, Segment::InFetch, Segment::InAnswer] {
            let close = close_tag(seg).expect("content segments have a closing tag");
            vocab.closing.insert(seg, Arc::from([close]));
        }
        vocab.opening.insert(Segment::InSearch, content.clone().into());
        vocab.opening.insert(Segment::InFetch, digits.clone().into());
        vocab.opening.insert(Segment::InAnswer, content.clone().into());
        vocab
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Number of emittable symbols.
    pub fn generated_len(&self) -> usize {
        WORD_BASE as usize + self.words.len()
    }

    pub fn observation_len(&self) -> usize {
        self.words.len() + 2
    }

    pub fn len(&self) -> usize {
        self.generated_len() + self.observation_len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_digit(&self, t: TokenId) -> bool {
        (DIGIT_BASE..WORD_BASE).contains(&t)
    }

    pub fn is_word(&self, t: TokenId) -> bool {
        t >= WORD_BASE && (t as usize) < self.generated_len()
    }

    pub fn is_observation(&self, t: TokenId) -> bool {
        (t as usize) >= self.generated_len() && (t as usize) < self.len()
    }

    pub fn digit(&self, d: u8) -> TokenId {
        DIGIT_BASE + d as TokenId
    }

    pub fn digit_value(&self, t: TokenId) -> Option<u8> {
        self.is_digit(t).then(|| (t - DIGIT_BASE) as u8)
    }

    pub fn word(&self, w: &str) -> Option<TokenId> {
        self.word_ids.get(w).copied()
    }

    pub fn observation_unknown(&self) -> TokenId {
        (self.generated_len() + self.words.len()) as TokenId
    }

    pub fn observation_notice(&self) -> TokenId {
        self.observation_unknown() + 1
    }

    /// Observation symbol mirroring word `w`.
    pub fn observation_of_word(&self, w: TokenId) -> Option<TokenId> {
        self.is_word(w)
            .then(|| (self.generated_len() + (w - WORD_BASE) as usize) as TokenId)
    }

    /// Surface string of a token.
    pub fn symbol(&self, t: TokenId) -> String {
        let g = self.generated_len() as TokenId;
        match t {
            t if (t as usize) < TAGS.len() => TAGS[t as usize].to_string(),
            EOT_ID => "<eot>".into(),
            UNK_ID => "<unk>".into(),
            t if self.is_digit(t) => (t - DIGIT_BASE).to_string(),
            t if self.is_word(t) => self.words[(t - WORD_BASE) as usize].clone(),
            t if t >= g && ((t - g) as usize) < self.words.len() => format!("obs:{}", self.words[(t - g) as usize]),
            t if t == self.observation_unknown() => "obs:<unk>".into(),
            t if t == self.observation_notice() => "obs:<notice>".into(),
            _ => format!("<invalid:{t}>"),
        }
    }

    /// Allowed continuations in a grammar segment. Observation positions are not masked.
    pub fn allowed(&self, segment: Segment, space: ActionSpace) -> &Arc<[TokenId]> {
        &self.masks[&(segment, space)]
    }

    /// Mask for the first token of an action payload, which may not be empty.
    pub fn opening(&self, segment: Segment) -> Option<&Arc<[TokenId]>> {
        self.opening.get(&segment)
    }

    /// Mask holding only the closing tag of a content segment.
    pub fn closing(&self, segment: Segment) -> Option<&Arc<[TokenId]>> {
        self.closing.get(&segment)
    }

    /// Splits response text into tokens: tags, single digits, words (lowercased)
    /// and one `<unk>` per other non-space run. Each token keeps its surface text.
    pub fn tokenize_response(&self, text: &str) -> Vec<(TokenId, String)> {
        let mut out = Vec::new();
        let mut rest = text;
        while let Some(c) = rest.chars().next() {
            if let Some((i, tag)) = TAGS.iter().enumerate().find(|(_, tag)| rest.starts_with(*tag)) {
                out.push((i as TokenId, tag.to_string()));
                rest = &rest[tag.len()..];
            } else if c.is_whitespace() {
                rest = &rest[c.len_utf8()..];
            } else if c.is_ascii_digit() {
                out.push((self.digit(c as u8 - b'0'), c.to_string()));
                rest = &rest[1..];
            } else if c.is_alphabetic() {
                let end = rest.find(|ch: char| !ch.is_alphabetic()).unwrap_or(rest.len());
                let word = rest[..end].to_lowercase();
                out.push((self.word(&word).unwrap_or(UNK_ID), word));
                rest = &rest[end..];
            } else {
                let end = rest
                    .char_indices()
                    .find(|&(_, ch)| ch.is_whitespace() || ch.is_alphanumeric() || ch == '<')
                    .map(|(i, _)| i)
                    .filter(|&i| i > 0)
                    .unwrap_or(c.len_utf8());
                out.push((UNK_ID, rest[..end].to_string()));
                rest = &rest[end..];
            }
        }
        out
    }

    /// Renders generated tokens as response text. Tags attach without spaces,
    /// consecutive digits join into numbers, other tokens are space separated.
    pub fn render_response(&self, tokens: &[TokenId]) -> String {
        let mut s = String::new();
        let mut prev: Option<TokenId> = None;
        for &t in tokens {
            if t == EOT_ID {
                continue;
            }
            let is_tag = (t as usize) < TAGS.len();
            if let Some(p) = prev {
                let p_tag = (p as usize) < TAGS.len();
                let joined_digits = self.is_digit(p) && self.is_digit(t);
                if !is_tag && !p_tag && !joined_digits {
                    s.push(' ');
                }
            }
            s.push_str(&self.symbol(t));
            prev = Some(t);
        }
        s
    }

    /// Observation symbols for a page: one per word, unknown words share an id.
    pub fn observe(&self, text: &str) -> Vec<TokenId> {
        let ids: Vec<TokenId> = crate::text::terms(text)
            .iter()
            .map(|w| {
                self.word(w)
                    .and_then(|id| self.observation_of_word(id))
                    .unwrap_or(self.observation_unknown())
            })
            .collect();
        if ids.is_empty() {
            vec![self.observation_unknown()]
        } else {
            ids
        }
    }

    /// Question tokens in the generated inventory (digits split, unknown words dropped).
    pub fn question_tokens(&self, question: &str) -> Vec<TokenId> {
        self.tokenize_response(question)
            .into_iter()
            .map(|(t, _)| t)
            .filter(|&t| t != UNK_ID)
            .collect()
    }
}
