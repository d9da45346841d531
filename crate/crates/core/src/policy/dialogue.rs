//! Token-level dialogue state: grammar-masked sampling of responses and
//! teacher-forced bookkeeping of observation spans.

use super::features::{Context, FeatureMap, Features, ObservationKind, ObservationView, QuestionView};
use super::model::{masked_dist, sample_index, PolicyParams};
use super::vocab::{close_tag, ActionSpace, Segment, Vocab, EOT_ID};
use crate::document::TokenId;
use crate::error::Result;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Content tokens allowed inside each tag before the closing tag is forced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLimits {
    pub think: usize,
    pub query: usize,
    pub fetch_digits: usize,
    pub answer: usize,
}

impl Default for SegmentLimits {
    fn default() -> Self {
        Self { think: 4, query: 6, fetch_digits: 3, answer: 6 }
    }
}

impl SegmentLimits {
    fn limit(&self, segment: Segment) -> Option<usize> {
        match segment {
            Segment::InThink => Some(self.think),
            Segment::InSearch => Some(self.query),
            Segment::InFetch => Some(self.fetch_digits),
            Segment::InAnswer => Some(self.answer),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Zero means greedy.
    pub temperature: f64,
    pub token_cap: usize,
    pub limits: SegmentLimits,
    pub action_space: ActionSpace,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { temperature: 1.0, token_cap: 64, limits: SegmentLimits::default(), action_space: ActionSpace::Full }
    }
}

/// One sampled position, kept for the policy update.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedStep {
    pub features: Features,
    pub allowed: Arc<[TokenId]>,
    pub token: TokenId,
    /// Log-probability under the sampling policy.
    pub log_prob: f64,
}

/// One teacher-forced observation position.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationStep {
    pub features: Features,
    pub token: TokenId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledTurn {
    pub tokens: Vec<TokenId>,
    pub steps: Vec<GeneratedStep>,
    /// The token cap ended the turn before the end-of-turn marker.
    pub truncated: bool,
}

pub struct Dialogue<'a> {
    vocab: &'a Vocab,
    map: &'a FeatureMap,
    question: QuestionView,
    history: Vec<TokenId>,
    turn: usize,
    last_observation: ObservationView,
}

impl<'a> Dialogue<'a> {
    pub fn new(question: &str, vocab: &'a Vocab, map: &'a FeatureMap) -> Self {
        Self {
            vocab,
            map,
            question: QuestionView::new(question, vocab),
            history: Vec::new(),
            turn: 1,
            last_observation: ObservationView::default(),
        }
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn history(&self) -> &[TokenId] {
        &self.history
    }

    fn features(&self, segment: Segment, segment_len: usize) -> Features {
        self.map.features(&Context {
            history: &self.history,
            turn: self.turn,
            segment,
            segment_len,
            question: &self.question,
            last_observation: &self.last_observation,
        })
    }

    /// Samples one response under the grammar mask, appending it to the history.
    pub fn sample_turn(
        &mut self,
        params: &PolicyParams,
        cfg: &DecodeConfig,
        rng: &mut impl Rng,
    ) -> Result<SampledTurn> {
        let mut segment = Segment::Start;
        let mut segment_len = 0;
        let mut tokens = Vec::new();
        let mut steps = Vec::new();
        while tokens.len() < cfg.token_cap {
            let features = self.features(segment, segment_len);
            let forced = cfg.limits.limit(segment).is_some_and(|l| segment_len >= l);
            let allowed = match (forced, self.vocab.closing(segment), self.vocab.opening(segment)) {
                (true, Some(close), _) => close.clone(),
                (false, _, Some(open)) if segment_len == 0 => open.clone(),
                _ => self.vocab.allowed(segment, cfg.action_space).clone(),
            };
            let p = masked_dist(params, &features, &allowed)?;
            let i = sample_index(&p, cfg.temperature, rng);
            let token = allowed[i];
            steps.push(GeneratedStep { features, allowed, token, log_prob: p[i].ln() });
            tokens.push(token);
            self.history.push(token);
            let next = segment.advance(token, self.vocab);
            segment_len = if next == segment && close_tag(segment).is_some() { segment_len + 1 } else { 0 };
            segment = next;
            if token == EOT_ID {
                return Ok(SampledTurn { tokens, steps, truncated: false });
            }
        }
        Ok(SampledTurn { tokens, steps, truncated: true })
    }

    /// Appends externally produced response tokens without recording steps.
    pub fn push_response(&mut self, tokens: &[TokenId]) {
        self.history.extend_from_slice(tokens);
    }

    /// Teacher-forces an observation span, closing the current turn.
    pub fn observe(&mut self, tokens: &[TokenId], kind: ObservationKind) -> Vec<ObservationStep> {
        let mut steps = Vec::with_capacity(tokens.len());
        for (j, &token) in tokens.iter().enumerate() {
            steps.push(ObservationStep { features: self.features(Segment::Observation, j), token });
            self.history.push(token);
        }
        self.last_observation = ObservationView { kind, tokens: tokens.iter().copied().collect() };
        self.turn += 1;
        steps
    }

    /// Closes a turn that produced no observation.
    pub fn end_turn(&mut self) {
        self.turn += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_response;
    use crate::policy::model::PolicyParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Vocab, FeatureMap) {
        let v = Vocab::default();
        let m = FeatureMap::new(&v, 8).unwrap();
        (v, m)
    }

    #[test]
    fn masked_sampling_is_well_formed_and_seeded() {
        let (v, m) = setup();
        let params = PolicyParams::random(v.len(), m.dim(), 0.5, 3);
        let run = |seed| {
            let mut d = Dialogue::new("on page 3 what is the date", &v, &m);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            d.sample_turn(&params, &DecodeConfig::default(), &mut rng).unwrap()
        };
        for seed in 0..300 {
            let t = run(seed);
            assert!(!t.truncated);
            assert_eq!(t.tokens, run(seed).tokens);
            let text = v.render_response(&t.tokens);
            assert!(parse_response(&text).is_well_formed(), "{text}");
            for s in &t.steps {
                assert!(s.allowed.contains(&s.token));
                assert!(s.log_prob <= 0.0);
            }
        }
    }

    #[test]
    fn token_cap_bounds_the_turn() {
        let (v, m) = setup();
        let params = PolicyParams::zeros(v.len(), m.dim());
        let mut d = Dialogue::new("what is the date", &v, &m);
        let cfg = DecodeConfig { token_cap: 4, ..DecodeConfig::default() };
        let t = d.sample_turn(&params, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(t.tokens.len() <= 4 && t.truncated);
        assert!(!parse_response(&v.render_response(&t.tokens)).is_well_formed());
    }

    #[test]
    fn vanishing_temperature_matches_greedy() {
        let (v, m) = setup();
        let mut params = PolicyParams::random(v.len(), m.dim(), 1.0, 4);
        params.weights_mut()[super::super::vocab::ANSWER_OPEN_ID as usize] = 50.0;
        let decode = |temperature, seed| {
            let cfg = DecodeConfig { temperature, ..DecodeConfig::default() };
            let mut d = Dialogue::new("what is the date", &v, &m);
            d.sample_turn(&params, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().tokens
        };
        let greedy = decode(0.0, 1);
        assert_eq!(decode(1e-9, 9), greedy);
        assert!(v.render_response(&greedy).contains("<answer>"));
    }

    #[test]
    fn observation_advances_turn_and_history() {
        let (v, m) = setup();
        let mut d = Dialogue::new("what is the date", &v, &m);
        let obs = v.observe("date alpha report");
        let steps = d.observe(&obs, ObservationKind::Pages);
        assert_eq!(steps.len(), 3);
        assert_eq!(d.turn(), 2);
        assert_eq!(d.history(), obs.as_slice());
    }
}
