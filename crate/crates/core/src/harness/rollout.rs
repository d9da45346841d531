//! Episode collection: generate, parse, execute, reward, until an answer or
//! the horizon, with every span and reward component recorded.

use crate::credit::TurnRecord;
use crate::document::{Document, Task, TokenId};
use crate::env::{DocumentEnv, EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::grammar::{parse_response, Action, Command, ParseResult};
use crate::policy::vocab::{EOT_ID, SEARCH_CLOSE_ID, SEARCH_OPEN_ID};
use crate::policy::{
    DecodeConfig, Dialogue, FeatureMap, GeneratedStep, ObservationKind, ObservationStep, PolicyParams, Vocab,
};
use crate::retrieval::Retriever;
use crate::reward::{token_weights, turn_reward, RewardComponents, RewardConfig, TurnEvidence};
use crate::text::terms;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::ops::Range;

pub const TRAJECTORY_SCHEMA: &str = "alden-traj/1";

/// One turn as persisted in the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnLog {
    pub turn: usize,
    pub response_text: String,
    pub parse_result: ParseResult,
    pub action: Option<Action>,
    pub observation_text: String,
    pub collected_pages: Vec<usize>,
    pub ranked_list: Vec<usize>,
    pub format_reward: f64,
    pub result_reward: f64,
    pub turn_reward: f64,
    pub components: RewardComponents,
    /// Terms of the search query, for search turns.
    pub query_terms: Option<Vec<String>>,
    /// Penalty weight of each query-span token.
    pub token_penalty_weights: Vec<f64>,
    pub generated_tokens: Vec<TokenId>,
    /// This turn's generated positions within the episode.
    pub positions: Range<usize>,
    /// Query tokens within the episode's generated positions.
    pub query_span: Option<Range<usize>>,
    pub observation_tokens: Vec<TokenId>,
    /// The per-turn token cap cut the response short.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gold {
    pub answer: String,
    pub pages: BTreeSet<usize>,
}

/// Spans in the interleaved stream of generated and observation tokens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenSpans {
    pub generated: Vec<Range<usize>>,
    pub observation: Vec<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema: String,
    pub episode_id: u64,
    pub seed: u64,
    pub agent: String,
    pub doc_id: String,
    pub task: Task,
    pub horizon: usize,
    pub reward_config: RewardConfig,
    pub turns: Vec<TurnLog>,
    pub final_answer: Option<String>,
    pub gold: Gold,
    pub horizon_exhausted: bool,
    pub token_spans: TokenSpans,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.turns.iter().map(|t| t.turn_reward).sum()
    }

    /// Union of collected pages.
    pub fn accessed_pages(&self) -> BTreeSet<usize> {
        self.turns.iter().flat_map(|t| t.collected_pages.iter().copied()).collect()
    }

    /// Credit-assignment view of the turns.
    pub fn turn_records(&self) -> Vec<TurnRecord> {
        self.turns
            .iter()
            .map(|t| TurnRecord {
                positions: t.positions.clone(),
                query_span: t.query_span.clone(),
                action_kind: t.action.as_ref().map(Action::kind),
                turn_reward: t.turn_reward,
                overlap: t.components.overlap.unwrap_or(0.0),
                token_penalty_weights: t.token_penalty_weights.clone(),
            })
            .collect()
    }
}

/// One response from an agent. `steps` is empty for agents that are not trained.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentTurn {
    pub text: String,
    /// Tokens with their surface strings; ends with the end-of-turn marker.
    pub pieces: Vec<(TokenId, String)>,
    pub steps: Vec<GeneratedStep>,
    pub truncated: bool,
}

pub trait Agent {
    fn name(&self) -> String;
    fn begin(&mut self, task: &Task, document: &Document);
    fn respond(&mut self, rng: &mut ChaCha8Rng) -> Result<AgentTurn>;
    /// Receives the observation tokens of the turn just played (empty after an answer).
    fn observe(&mut self, tokens: &[TokenId], kind: ObservationKind) -> Vec<ObservationStep>;
}

/// Agent backed by the micro-policy.
pub struct MicroAgent<'a> {
    params: &'a PolicyParams,
    vocab: &'a Vocab,
    map: &'a FeatureMap,
    decode: DecodeConfig,
    dialogue: Option<Dialogue<'a>>,
}

impl<'a> MicroAgent<'a> {
    pub fn new(params: &'a PolicyParams, vocab: &'a Vocab, map: &'a FeatureMap, decode: DecodeConfig) -> Self {
        Self { params, vocab, map, decode, dialogue: None }
    }

    fn dialogue(&mut self) -> Result<&mut Dialogue<'a>> {
        self.dialogue.as_mut().ok_or_else(|| Error::usage("agent used before begin"))
    }
}

impl Agent for MicroAgent<'_> {
    fn name(&self) -> String {
        "micro".into()
    }

    fn begin(&mut self, task: &Task, _document: &Document) {
        self.dialogue = Some(Dialogue::new(&task.question, self.vocab, self.map));
    }

    fn respond(&mut self, rng: &mut ChaCha8Rng) -> Result<AgentTurn> {
        let (params, decode, vocab) = (self.params, self.decode, self.vocab);
        let turn = self.dialogue()?.sample_turn(params, &decode, rng)?;
        Ok(AgentTurn {
            text: vocab.render_response(&turn.tokens),
            pieces: turn.tokens.iter().map(|&t| (t, vocab.symbol(t))).collect(),
            steps: turn.steps,
            truncated: turn.truncated,
        })
    }

    fn observe(&mut self, tokens: &[TokenId], kind: ObservationKind) -> Vec<ObservationStep> {
        match self.dialogue.as_mut() {
            Some(d) if tokens.is_empty() => {
                d.end_turn();
                Vec::new()
            }
            Some(d) => d.observe(tokens, kind),
            None => Vec::new(),
        }
    }
}

/// Fixed behaviours used for testing and as baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Script {
    /// Fetch every gold page, then answer with the gold answer.
    OracleFetch,
    /// Search with the question, then answer with the gold answer.
    OracleSearch,
    /// Only a think block, every turn.
    Malformed,
    /// The same search every turn.
    RepeatSearch,
    /// Answer with the gold answer on the first turn.
    ImmediateAnswer,
}

impl Script {
    pub const ALL: [Script; 5] =
        [Script::OracleFetch, Script::OracleSearch, Script::Malformed, Script::RepeatSearch, Script::ImmediateAnswer];

    pub fn name(self) -> &'static str {
        match self {
            Script::OracleFetch => "oracle-fetch",
            Script::OracleSearch => "oracle-search",
            Script::Malformed => "malformed",
            Script::RepeatSearch => "repeat-search",
            Script::ImmediateAnswer => "immediate-answer",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::config(format!("unknown scripted policy {name}")))
    }
}

pub struct ScriptedAgent<'a> {
    script: Script,
    vocab: &'a Vocab,
    task: Option<Task>,
    turn: usize,
}

impl<'a> ScriptedAgent<'a> {
    pub fn new(script: Script, vocab: &'a Vocab) -> Self {
        Self { script, vocab, task: None, turn: 0 }
    }
}

impl Agent for ScriptedAgent<'_> {
    fn name(&self) -> String {
        format!("scripted:{}", self.script.name())
    }

    fn begin(&mut self, task: &Task, _document: &Document) {
        self.task = Some(task.clone());
        self.turn = 0;
    }

    fn respond(&mut self, _rng: &mut ChaCha8Rng) -> Result<AgentTurn> {
        let task = self.task.as_ref().ok_or_else(|| Error::usage("agent used before begin"))?;
        let k = self.turn;
        self.turn += 1;
        let answer = || format!("<think>the answer is known</think><answer>{}</answer>", task.gold_answer);
        let text = match self.script {
            Script::OracleFetch => match task.gold_pages.iter().nth(k) {
                Some(p) => format!("<think>read the page</think><fetch>{p}</fetch>"),
                None => answer(),
            },
            Script::OracleSearch if k == 0 => format!("<think>search the question</think><search>{}</search>", task.question),
            Script::OracleSearch | Script::ImmediateAnswer => answer(),
            Script::Malformed => "<think>still thinking about the page</think>".to_string(),
            Script::RepeatSearch => format!("<think>search again</think><search>{}</search>", task.question),
        };
        let mut pieces = self.vocab.tokenize_response(&text);
        pieces.push((EOT_ID, String::new()));
        Ok(AgentTurn { text, pieces, steps: Vec::new(), truncated: false })
    }

    fn observe(&mut self, _tokens: &[TokenId], _kind: ObservationKind) -> Vec<ObservationStep> {
        Vec::new()
    }
}

/// Fixed inputs of an episode.
#[derive(Clone, Copy)]
pub struct EpisodeSetup<'a> {
    pub document: &'a Document,
    pub task: &'a Task,
    pub retriever: &'a dyn Retriever,
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub vocab: &'a Vocab,
}

/// Positions kept for the policy update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TurnSteps {
    pub generated: Vec<GeneratedStep>,
    pub observation: Vec<ObservationStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub trajectory: Trajectory,
    pub steps: Vec<TurnSteps>,
}

/// Per-episode generator: a ChaCha stream selected by the episode id.
pub fn episode_rng(seed: u64, episode_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode_id);
    rng
}

/// Distributes per-term penalty weights over the query tokens: each term's
/// weight is split evenly across the tokens that spell it; other tokens get 0.
pub fn spread_term_weights(pieces: &[(TokenId, String)], query_terms: &[String], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; pieces.len()];
    let mut term = 0;
    let mut rest = query_terms.first().map(String::as_str).unwrap_or("");
    let mut members: Vec<usize> = Vec::new();
    for (i, (_, surface)) in pieces.iter().enumerate() {
        let surface = surface.to_lowercase();
        if surface.is_empty() || term >= query_terms.len() || !rest.starts_with(&surface) {
            continue;
        }
        members.push(i);
        rest = &rest[surface.len()..];
        if rest.is_empty() {
            let w = weights.get(term).copied().unwrap_or(0.0) / members.len() as f64;
            for &m in &members {
                out[m] = w;
            }
            members.clear();
            term += 1;
            rest = query_terms.get(term).map(String::as_str).unwrap_or("");
        }
    }
    out
}

fn observation_tokens(obs: &Observation, doc: &Document, collected: &[usize], vocab: &Vocab) -> (Vec<TokenId>, ObservationKind) {
    match obs {
        Observation::Pages(_) => (
            collected
                .iter()
                .filter_map(|&p| doc.page(p))
                .flat_map(|p| p.observation_tokens.iter().copied())
                .collect(),
            ObservationKind::Pages,
        ),
        Observation::Notice(_) => (vec![vocab.observation_notice()], ObservationKind::Notice),
        Observation::Terminal => (Vec::new(), ObservationKind::None),
    }
}

/// Plays one episode. Deterministic given the agent state, setup and generator.
pub fn rollout(agent: &mut dyn Agent, setup: &EpisodeSetup<'_>, episode_id: u64, seed: u64) -> Result<Episode> {
    setup.reward.validate()?;
    let mut rng = episode_rng(seed, episode_id);
    let mut env = DocumentEnv::reset(setup.document, setup.task, setup.retriever, setup.env)?;
    agent.begin(setup.task, setup.document);
    let mut turns = Vec::new();
    let mut steps = Vec::new();
    let mut spans = TokenSpans::default();
    let mut stream_len = 0;
    let mut generated_len = 0;
    let mut past_queries: Vec<Vec<String>> = Vec::new();
    let mut final_answer = None;

    while !env.state().done {
        let response = agent.respond(&mut rng)?;
        let parsed = parse_response(&response.text);
        let outcome = env.step(&parsed)?;
        let n = response.pieces.len();
        let positions = generated_len..generated_len + n;
        spans.generated.push(stream_len..stream_len + n);
        stream_len += n;
        generated_len += n;

        let mut query_terms = None;
        let mut query_span = None;
        let mut weights = Vec::new();
        if let Some(Command::Search { query }) = parsed.action().map(|a| &a.command) {
            let t = terms(query);
            let ids: Vec<TokenId> = response.pieces.iter().map(|p| p.0).collect();
            let open = ids.iter().position(|&i| i == SEARCH_OPEN_ID);
            let close = ids.iter().position(|&i| i == SEARCH_CLOSE_ID);
            if let (Some(o), Some(c)) = (open, close) {
                let term_w = token_weights(&t, &past_queries, setup.reward.ngram_n);
                weights = spread_term_weights(&response.pieces[o + 1..c], &t, &term_w);
                query_span = Some(positions.start + o + 1..positions.start + c);
            }
            query_terms = Some(t);
        }
        let breakdown = turn_reward(
            &parsed,
            TurnEvidence { collected: &outcome.collected_pages, ranked: &outcome.ranked_list },
            setup.task,
            &outcome.accessed_before,
            query_terms.as_deref(),
            &past_queries,
            &setup.reward,
        )?;
        if let Some(t) = &query_terms {
            past_queries.push(t.clone());
        }
        if let Some(Command::Answer { text }) = parsed.action().map(|a| &a.command) {
            final_answer = Some(text.clone());
        }

        let (obs_tokens, kind) = observation_tokens(&outcome.observation, setup.document, &outcome.collected_pages, setup.vocab);
        let obs_steps = agent.observe(&obs_tokens, kind);
        spans.observation.push(stream_len..stream_len + obs_tokens.len());
        stream_len += obs_tokens.len();
        steps.push(TurnSteps { generated: response.steps, observation: obs_steps });
        turns.push(TurnLog {
            turn: outcome.turn,
            response_text: response.text,
            action: parsed.action().cloned(),
            parse_result: parsed,
            observation_text: outcome.observation.render(),
            collected_pages: outcome.collected_pages,
            ranked_list: outcome.ranked_list,
            format_reward: breakdown.format_reward,
            result_reward: breakdown.result_reward,
            turn_reward: breakdown.turn_reward,
            components: breakdown.components,
            query_terms,
            token_penalty_weights: weights,
            generated_tokens: response.pieces.iter().map(|p| p.0).collect(),
            positions,
            query_span,
            observation_tokens: obs_tokens,
            truncated: response.truncated,
        });
    }

    let trajectory = Trajectory {
        schema: TRAJECTORY_SCHEMA.to_string(),
        episode_id,
        seed,
        agent: agent.name(),
        doc_id: setup.document.doc_id.clone(),
        task: setup.task.clone(),
        horizon: setup.env.horizon,
        reward_config: setup.reward,
        turns,
        final_answer,
        gold: Gold { answer: setup.task.gold_answer.clone(), pages: setup.task.gold_pages.clone() },
        horizon_exhausted: env.state().horizon_exhausted,
        token_spans: spans,
    };
    Ok(Episode { trajectory, steps })
}

pub fn write_trajectories(path: &std::path::Path, trajectories: &[Trajectory]) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in trajectories {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Appends to an existing log.
pub fn append_trajectories(path: &std::path::Path, trajectories: &[Trajectory]) -> Result<()> {
    use std::io::Write;
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = std::io::BufWriter::new(file);
    for t in trajectories {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories(path: &std::path::Path) -> Result<Vec<Trajectory>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line)
            .map_err(|e| Error::config(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if t.schema != TRAJECTORY_SCHEMA {
            return Err(Error::config(format!(
                "{}:{}: schema {} is not {TRAJECTORY_SCHEMA}",
                path.display(),
                lineno + 1,
                t.schema
            )));
        }
        out.push(t);
    }
    Ok(out)
}
