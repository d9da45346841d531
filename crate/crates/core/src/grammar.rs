//! Response grammar: `<think>…</think>` followed by exactly one of
//! `<search>…</search>`, `<fetch>…</fetch>` or `<answer>…</answer>`, and the
//! `<result>…</result>` observation surface returned by the environment.

use serde::{Deserialize, Serialize};
use std::fmt;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const SEARCH_OPEN: &str = "<search>";
pub const SEARCH_CLOSE: &str = "</search>";
pub const FETCH_OPEN: &str = "<fetch>";
pub const FETCH_CLOSE: &str = "</fetch>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";
pub const RESULT_OPEN: &str = "<result>";
pub const RESULT_CLOSE: &str = "</result>";

const KNOWN_TAGS: [&str; 8] = [
    THINK_OPEN,
    THINK_CLOSE,
    SEARCH_OPEN,
    SEARCH_CLOSE,
    FETCH_OPEN,
    FETCH_CLOSE,
    ANSWER_OPEN,
    ANSWER_CLOSE,
];

const ACTION_TAGS: [(&str, &str, ActionKind); 3] = [
    (SEARCH_OPEN, SEARCH_CLOSE, ActionKind::Search),
    (FETCH_OPEN, FETCH_CLOSE, ActionKind::Fetch),
    (ANSWER_OPEN, ANSWER_CLOSE, ActionKind::Answer),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Search,
    Fetch,
    Answer,
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActionKind::Search => "search",
            ActionKind::Fetch => "fetch",
            ActionKind::Answer => "answer",
        })
    }
}

/// The executable part of a response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    Search { query: String },
    /// 1-based page number as written; bounds are checked by the environment.
    Fetch { page: usize },
    Answer { text: String },
}

impl Command {
    pub fn kind(&self) -> ActionKind {
        match self {
            Command::Search { .. } => ActionKind::Search,
            Command::Fetch { .. } => ActionKind::Fetch,
            Command::Answer { .. } => ActionKind::Answer,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub think: String,
    pub command: Command,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        self.command.kind()
    }

    /// Canonical textual form; parses back to an identical `Action`.
    pub fn render(&self) -> String {
        let (open, body, close) = match &self.command {
            Command::Search { query } => (SEARCH_OPEN, query.clone(), SEARCH_CLOSE),
            Command::Fetch { page } => (FETCH_OPEN, page.to_string(), FETCH_CLOSE),
            Command::Answer { text } => (ANSWER_OPEN, text.clone(), ANSWER_CLOSE),
        };
        format!("{THINK_OPEN}{}{THINK_CLOSE}{open}{body}{close}", self.think)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedReason {
    MissingThink,
    MissingAction,
    MultipleActions,
    BadNesting,
    NonIntegerFetch,
    TrailingContent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseResult {
    WellFormed { action: Action },
    Malformed { reason: MalformedReason },
}

impl ParseResult {
    pub fn action(&self) -> Option<&Action> {
        match self {
            ParseResult::WellFormed { action } => Some(action),
            ParseResult::Malformed { .. } => None,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        matches!(self, ParseResult::WellFormed { .. })
    }
}

fn malformed(reason: MalformedReason) -> ParseResult {
    ParseResult::Malformed { reason }
}

fn contains_known_tag(s: &str) -> bool {
    KNOWN_TAGS.iter().any(|t| s.contains(t))
}

/// Parses one agent response. Total: every input maps to a `ParseResult`.
pub fn parse_response(text: &str) -> ParseResult {
    use MalformedReason::*;

    let s = text.trim();
    let Some(after_open) = s.strip_prefix(THINK_OPEN) else {
        return malformed(if s.contains(THINK_OPEN) { BadNesting } else { MissingThink });
    };
    let Some(close_at) = after_open.find(THINK_CLOSE) else {
        return malformed(BadNesting);
    };
    let think = &after_open[..close_at];
    if contains_known_tag(think) {
        return malformed(BadNesting);
    }

    let rest = after_open[close_at + THINK_CLOSE.len()..].trim_start();
    if rest.is_empty() {
        return malformed(MissingAction);
    }
    let Some(&(open, close, kind)) = ACTION_TAGS.iter().find(|(open, _, _)| rest.starts_with(open))
    else {
        if rest.starts_with(THINK_OPEN) || rest.starts_with("</") && contains_known_tag(rest) {
            return malformed(BadNesting);
        }
        let has_action = ACTION_TAGS.iter().any(|(open, _, _)| rest.contains(open));
        return malformed(if has_action { TrailingContent } else { MissingAction });
    };

    let body_and_tail = &rest[open.len()..];
    let Some(end) = body_and_tail.find(close) else {
        return malformed(BadNesting);
    };
    let body = &body_and_tail[..end];
    if contains_known_tag(body) {
        return malformed(BadNesting);
    }
    let tail = body_and_tail[end + close.len()..].trim();
    if !tail.is_empty() {
        let another = ACTION_TAGS.iter().any(|(o, _, _)| tail.starts_with(o));
        return malformed(if another { MultipleActions } else { TrailingContent });
    }

    let command = match kind {
        ActionKind::Search => Command::Search { query: body.to_string() },
        ActionKind::Answer => Command::Answer { text: body.to_string() },
        ActionKind::Fetch => {
            let digits = body.trim();
            if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                return malformed(NonIntegerFetch);
            }
            match digits.parse::<usize>() {
                Ok(page) => Command::Fetch { page },
                Err(_) => return malformed(NonIntegerFetch),
            }
        }
    };
    ParseResult::WellFormed {
        action: Action { think: think.to_string(), command },
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedPage {
    pub index: usize,
    pub content: String,
}

/// The textual surface of an observation: pages wrapped in `<result>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationBlock {
    pub entries: Vec<ObservedPage>,
    pub include_page_numbers: bool,
}

impl ObservationBlock {
    pub fn render(&self) -> String {
        let body = self
            .entries
            .iter()
            .map(|e| {
                if self.include_page_numbers {
                    format!("Page {}: {}", e.index, e.content)
                } else {
                    e.content.clone()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        format!("{RESULT_OPEN}{body}{RESULT_CLOSE}")
    }
}

/// Recovers page entries from a numbered rendering. Returns `None` when the
/// text is not a `<result>` block or an entry lacks its `Page <n>:` prefix.
pub fn parse_observation(text: &str) -> Option<Vec<ObservedPage>> {
    let body = text.strip_prefix(RESULT_OPEN)?.strip_suffix(RESULT_CLOSE)?;
    if body.is_empty() {
        return Some(Vec::new());
    }
    body.split('\n')
        .map(|line| {
            let rest = line.strip_prefix("Page ")?;
            let (num, content) = rest.split_once(": ")?;
            Some(ObservedPage {
                index: num.parse().ok()?,
                content: content.to_string(),
            })
        })
        .collect()
}

/// Wraps a free-text environment notice (range or format errors).
pub fn render_notice(notice: &str) -> String {
    format!("{RESULT_OPEN}{notice}{RESULT_CLOSE}")
}
