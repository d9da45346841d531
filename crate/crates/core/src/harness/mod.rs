//! End-to-end orchestration: corpus generation, rollouts, metrics, replay
//! scoring and the training driver.

pub mod config;
pub mod corpus_gen;
pub mod metrics;
pub mod rollout;
pub mod score;
pub mod train;

pub use config::RunConfig;
pub use corpus_gen::{generate_corpus, split_corpus, CorpusSpec};
pub use metrics::{nav_metrics, AnswerJudge, ExactMatch, MetricsTable, NavMetrics};
pub use rollout::{
    read_trajectories, rollout, write_trajectories, Agent, Episode, EpisodeSetup, MicroAgent, Script, ScriptedAgent,
    Trajectory, TRAJECTORY_SCHEMA,
};
pub use score::{score_trajectory, ScoreRow};
pub use train::{trend_increasing, RunSummary, StepRow, Trainer};
