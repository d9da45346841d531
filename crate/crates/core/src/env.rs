//! The document-navigation environment: executes parsed actions against one
//! document and tracks the per-episode bookkeeping (turn counter, accessed pages,
//! past search queries).

use crate::document::{Document, Task};
use crate::error::{Error, Result};
use crate::grammar::{render_notice, Command, ObservationBlock, ObservedPage, ParseResult};
use crate::retrieval::Retriever;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    /// Maximum number of turns per episode.
    pub horizon: usize,
    /// Pages collected per search.
    pub retrieval_k: usize,
    /// When false, `fetch` is answered with a notice and collects nothing.
    pub fetch_enabled: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { horizon: 6, retrieval_k: 1, fetch_enabled: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// 1-based turn about to be played.
    pub turn: usize,
    pub accessed_pages: BTreeSet<usize>,
    pub past_queries: Vec<String>,
    pub done: bool,
    pub horizon: usize,
    pub horizon_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Pages(ObservationBlock),
    /// Range errors, format errors and similar environment messages.
    Notice(String),
    /// The episode ended on an `answer`.
    Terminal,
}

impl Observation {
    pub fn render(&self) -> String {
        match self {
            Observation::Pages(block) => block.render(),
            Observation::Notice(text) => render_notice(text),
            Observation::Terminal => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Turn this outcome belongs to.
    pub turn: usize,
    pub observation: Observation,
    /// Pages collected this turn, in retriever rank order for search.
    pub collected_pages: Vec<usize>,
    /// Full retriever ranking (search only).
    pub ranked_list: Vec<usize>,
    /// Accessed set before this turn's pages were added.
    pub accessed_before: BTreeSet<usize>,
    pub done: bool,
    pub horizon_exhausted: bool,
}

pub struct DocumentEnv<'a> {
    document: &'a Document,
    task: &'a Task,
    retriever: &'a dyn Retriever,
    config: EnvConfig,
    state: EnvState,
}

impl<'a> DocumentEnv<'a> {
    pub fn reset(
        document: &'a Document,
        task: &'a Task,
        retriever: &'a dyn Retriever,
        config: EnvConfig,
    ) -> Result<Self> {
        task.validate(document)?;
        if config.horizon == 0 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if config.retrieval_k == 0 {
            return Err(Error::config("retrieval_k must be at least 1"));
        }
        Ok(Self {
            document,
            task,
            retriever,
            config,
            state: EnvState {
                turn: 1,
                accessed_pages: BTreeSet::new(),
                past_queries: Vec::new(),
                done: false,
                horizon: config.horizon,
                horizon_exhausted: false,
            },
        })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn document(&self) -> &Document {
        self.document
    }

    pub fn task(&self) -> &Task {
        self.task
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    fn pages_block(&self, indices: &[usize]) -> Observation {
        let entries = indices
            .iter()
            .filter_map(|&i| self.document.page(i))
            .map(|p| ObservedPage { index: p.index, content: p.text.clone() })
            .collect();
        Observation::Pages(ObservationBlock { entries, include_page_numbers: true })
    }

    pub fn step(&mut self, parsed: &ParseResult) -> Result<StepOutcome> {
        if self.state.done {
            return Err(Error::usage("step called on a finished episode"));
        }
        let turn = self.state.turn;
        let accessed_before = self.state.accessed_pages.clone();
        let mut ranked_list = Vec::new();
        let mut collected = Vec::new();
        let mut answered = false;

        let observation = match parsed {
            ParseResult::Malformed { reason } => Observation::Notice(format!(
                "Invalid response format ({reason:?}). Reply with <think>...</think> followed by one of <search>, <fetch> or <answer>."
            )),
            ParseResult::WellFormed { action } => match &action.command {
                Command::Search { query } => {
                    self.state.past_queries.push(query.clone());
                    ranked_list = self
                        .retriever
                        .rank(query, self.document)
                        .into_iter()
                        .map(|(i, _)| i)
                        .collect();
                    collected = ranked_list.iter().copied().take(self.config.retrieval_k).collect();
                    self.pages_block(&collected)
                }
                Command::Fetch { .. } if !self.config.fetch_enabled => {
                    Observation::Notice("The fetch tool is not available.".into())
                }
                Command::Fetch { page } => {
                    if self.document.page(*page).is_some() {
                        collected.push(*page);
                        self.pages_block(&collected)
                    } else {
                        Observation::Notice(format!(
                            "Page {page} does not exist; valid pages are 1 to {}.",
                            self.document.len()
                        ))
                    }
                }
                Command::Answer { .. } => {
                    answered = true;
                    Observation::Terminal
                }
            },
        };

        self.state.accessed_pages.extend(collected.iter().copied());
        self.state.turn += 1;
        if answered {
            self.state.done = true;
        } else if self.state.turn > self.config.horizon {
            self.state.done = true;
            self.state.horizon_exhausted = true;
        }

        Ok(StepOutcome {
            turn,
            observation,
            collected_pages: collected,
            ranked_list,
            accessed_before,
            done: self.state.done,
            horizon_exhausted: self.state.horizon_exhausted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::{Page, QueryKind};
    use crate::grammar::parse_response;
    use crate::retrieval::TfCosine;
    use proptest::prelude::*;

    fn ten_pages() -> Document {
        let pages = (1..=10)
            .map(|i| Page {
                index: i,
                text: if i == 6 { "budget table totals".into() } else { format!("filler{i} words") },
                observation_tokens: vec![i as u32],
            })
            .collect();
        Document::new("doc", pages).unwrap()
    }

    fn task(gold: usize) -> Task {
        Task {
            question: "what is the budget".into(),
            gold_answer: "42".into(),
            gold_pages: [gold].into(),
            query_kind: QueryKind::General,
        }
    }

    fn env<'a>(doc: &'a Document, task: &'a Task, horizon: usize) -> DocumentEnv<'a> {
        DocumentEnv::reset(doc, task, &TfCosine, EnvConfig { horizon, ..EnvConfig::default() }).unwrap()
    }

    #[test]
    fn reset_is_fresh() {
        let doc = ten_pages();
        let t = task(4);
        let e = env(&doc, &t, 6);
        let s = e.state();
        assert_eq!((s.turn, s.done, s.horizon), (1, false, 6));
        assert!(s.accessed_pages.is_empty() && s.past_queries.is_empty());
    }

    #[test]
    fn reset_rejects_out_of_range_gold() {
        let doc = ten_pages();
        let t = task(11);
        let err = DocumentEnv::reset(&doc, &t, &TfCosine, EnvConfig::default()).err().unwrap();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn fetch_in_and_out_of_range() {
        let doc = ten_pages();
        let t = task(4);
        let mut e = env(&doc, &t, 6);
        let out = e.step(&parse_response("<think>t</think><fetch>4</fetch>")).unwrap();
        assert_eq!(out.collected_pages, vec![4]);
        assert_eq!(out.observation.render(), "<result>Page 4: filler4 words</result>");
        assert!(!out.done);

        let out = e.step(&parse_response("<think>t</think><fetch>0</fetch>")).unwrap();
        assert!(out.collected_pages.is_empty());
        assert!(matches!(out.observation, Observation::Notice(_)));
        assert!(!out.done);
        assert_eq!(out.accessed_before, [4].into());
        assert_eq!(e.state().turn, 3);
    }

    #[test]
    fn search_collects_top_k_in_rank_order() {
        let doc = ten_pages();
        let t = task(6);
        let mut e = env(&doc, &t, 6);
        let out = e.step(&parse_response("<think>t</think><search>budget table</search>")).unwrap();
        assert_eq!(out.collected_pages, vec![6]);
        assert_eq!(out.ranked_list.len(), 10);
        assert_eq!(out.ranked_list[0], 6);
        assert_eq!(e.state().past_queries, vec!["budget table".to_string()]);

        let doc2 = ten_pages();
        let mut e3 = DocumentEnv::reset(
            &doc2,
            &t,
            &TfCosine,
            EnvConfig { retrieval_k: 3, ..EnvConfig::default() },
        )
        .unwrap();
        let out = e3.step(&parse_response("<think>t</think><search>budget words</search>")).unwrap();
        assert_eq!(out.collected_pages, out.ranked_list[..3].to_vec());
    }

    #[test]
    fn answer_terminates_and_further_steps_fail() {
        let doc = ten_pages();
        let t = task(4);
        let mut e = env(&doc, &t, 6);
        let out = e.step(&parse_response("<think>t</think><answer>42</answer>")).unwrap();
        assert!(out.done && !out.horizon_exhausted);
        assert!(out.collected_pages.is_empty());
        assert_eq!(out.observation, Observation::Terminal);
        let err = e.step(&parse_response("<think>t</think><answer>42</answer>")).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn malformed_continues_until_horizon() {
        let doc = ten_pages();
        let t = task(4);
        let mut e = env(&doc, &t, 3);
        for turn in 1..=3 {
            let out = e.step(&parse_response("no tags at all")).unwrap();
            assert!(matches!(out.observation, Observation::Notice(_)));
            assert_eq!(out.done, turn == 3);
        }
        assert!(e.state().horizon_exhausted);
    }

    #[test]
    fn disabled_fetch_collects_nothing() {
        let doc = ten_pages();
        let t = task(4);
        let cfg = EnvConfig { fetch_enabled: false, ..EnvConfig::default() };
        let mut e = DocumentEnv::reset(&doc, &t, &TfCosine, cfg).unwrap();
        let out = e.step(&parse_response("<think>t</think><fetch>4</fetch>")).unwrap();
        assert!(out.collected_pages.is_empty());
    }

    fn response() -> impl Strategy<Value = String> {
        prop_oneof![
            (0usize..14).prop_map(|p| format!("<think>t</think><fetch>{p}</fetch>")),
            prop::sample::select(vec!["budget", "filler3", "words", "zzz", "table totals"])
                .prop_map(|q| format!("<think>t</think><search>{q}</search>")),
            Just("garbage".to_string()),
            Just("<think>t</think><answer>x</answer>".to_string()),
        ]
    }

    proptest! {
        #[test]
        fn accessed_set_is_union_of_collected(actions in proptest::collection::vec(response(), 1..10), k in 1usize..4) {
            let doc = ten_pages();
            let t = task(4);
            let cfg = EnvConfig { horizon: 6, retrieval_k: k, fetch_enabled: true };
            let mut e = DocumentEnv::reset(&doc, &t, &TfCosine, cfg).unwrap();
            let mut union = BTreeSet::new();
            let mut steps = 0;
            for a in &actions {
                if e.state().done {
                    prop_assert!(e.step(&parse_response(a)).is_err());
                    break;
                }
                let out = e.step(&parse_response(a)).unwrap();
                steps += 1;
                prop_assert_eq!(&out.accessed_before, &union);
                if let ParseResult::WellFormed { action } = parse_response(a) {
                    if let Command::Fetch { page } = action.command {
                        if (1..=10).contains(&page) {
                            prop_assert_eq!(out.collected_pages.clone(), vec![page]);
                        }
                    }
                }
                prop_assert!(out.collected_pages.len() <= k);
                union.extend(out.collected_pages.iter().copied());
                prop_assert_eq!(&e.state().accessed_pages, &union);
            }
            prop_assert!(steps <= 6);
        }
    }
}
