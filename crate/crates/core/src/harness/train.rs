//! Training driver: sample tasks, roll out in parallel with a frozen snapshot,
//! assign credit, take one optimizer step, log, evaluate, checkpoint.

use super::config::RunConfig;
use super::corpus_gen::split_corpus;
use super::metrics::{ExactMatch, MetricsTable};
use super::rollout::{append_trajectories, rollout, Episode, EpisodeSetup, MicroAgent, Trajectory};
use crate::credit::compute_advantages;
use crate::document::{CorpusRecord, Document, Task};
use crate::error::{Error, Result};
use crate::policy::{Checkpoint, DecodeConfig, FeatureMap, PolicyParams, ValueParams, Vocab};
use crate::ppo::{policy_loss, train_step, EpisodeSample, LossReport, TurnSample};
use crate::retrieval::TfCosine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// One row of the run-metrics CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub step: usize,
    pub surrogate: f64,
    pub kl_gen: f64,
    pub kl_obs: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub mean_episode_reward: f64,
}

impl StepRow {
    fn new(step: usize, r: &LossReport, mean_episode_reward: f64) -> Self {
        Self {
            step,
            surrogate: r.surrogate,
            kl_gen: r.kl_gen,
            kl_obs: r.kl_obs,
            value_loss: r.value_loss,
            entropy: r.entropy,
            mean_episode_reward,
        }
    }
}

/// One row of the evaluation CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub step: usize,
    pub split: String,
    pub episodes: usize,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub unique_pages: f64,
    pub accuracy: f64,
    pub reward: f64,
}

fn eval_rows(step: usize, table: &MetricsTable) -> Vec<EvalRow> {
    table
        .rows
        .iter()
        .map(|(split, s)| EvalRow {
            step,
            split: split.clone(),
            episodes: s.episodes,
            recall: s.recall,
            precision: s.precision,
            f1: s.f1,
            unique_pages: s.unique_pages,
            accuracy: s.accuracy,
            reward: s.reward,
        })
        .collect()
}

/// Documents with their tasks.
pub struct Split {
    pub documents: Vec<Document>,
    /// `(document index, task)` pairs.
    pub tasks: Vec<(usize, Task)>,
}

impl Split {
    fn new(records: &[CorpusRecord], vocab: &Vocab) -> Result<Self> {
        let mut documents = Vec::with_capacity(records.len());
        let mut tasks = Vec::new();
        for (i, r) in records.iter().enumerate() {
            documents.push(r.to_document(|t| vocab.observe(t))?);
            tasks.extend(r.tasks.iter().cloned().map(|t| (i, t)));
        }
        Ok(Self { documents, tasks })
    }
}

pub struct Trainer {
    cfg: RunConfig,
    vocab: Vocab,
    map: FeatureMap,
    train: Split,
    eval: Split,
    policy: PolicyParams,
    value: ValueParams,
    reference: PolicyParams,
    step: usize,
}

/// Artifacts and curves of a finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: Vec<StepRow>,
    pub evals: Vec<EvalRow>,
}

impl Trainer {
    pub fn new(cfg: RunConfig, corpus: &[CorpusRecord]) -> Result<Self> {
        cfg.validate()?;
        let vocab = Vocab::default();
        let map = FeatureMap::new(&vocab, cfg.window)?;
        let (train, eval) = split_corpus(corpus, cfg.eval_fraction);
        let train = Split::new(train, &vocab)?;
        let eval = Split::new(eval, &vocab)?;
        if train.tasks.is_empty() {
            return Err(Error::config("training split has no tasks"));
        }
        let policy = PolicyParams::random(vocab.len(), map.dim(), cfg.init_scale, cfg.init_seed);
        let value = ValueParams::zeros(map.dim());
        Ok(Self { reference: policy.clone(), cfg, vocab, map, train, eval, policy, value, step: 0 })
    }

    /// Continues from saved parameters; the loaded policy becomes the KL reference.
    pub fn with_checkpoint(mut self, ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.window != self.cfg.window || ckpt.header.feature_dim != self.map.dim() {
            return Err(Error::config("checkpoint does not match the configured feature map"));
        }
        let (policy, value) = ckpt.params()?;
        self.reference = policy.clone();
        self.policy = policy;
        self.value = value;
        Ok(self)
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn policy(&self) -> &PolicyParams {
        &self.policy
    }

    pub fn value(&self) -> &ValueParams {
        &self.value
    }

    pub fn reference(&self) -> &PolicyParams {
        &self.reference
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.policy, &self.value, self.cfg.window, self.cfg.init_seed)
    }

    fn play(
        &self,
        params: &PolicyParams,
        split: &Split,
        picks: &[usize],
        decode: DecodeConfig,
        id_base: u64,
    ) -> Result<Vec<Episode>> {
        let env = self.cfg.env();
        let reward = self.cfg.reward();
        picks
            .par_iter()
            .enumerate()
            .map(|(i, &k)| {
                let (d, task) = &split.tasks[k];
                let setup = EpisodeSetup {
                    document: &split.documents[*d],
                    task,
                    retriever: &TfCosine,
                    env,
                    reward,
                    vocab: &self.vocab,
                };
                let mut agent = MicroAgent::new(params, &self.vocab, &self.map, decode);
                rollout(&mut agent, &setup, id_base + i as u64, self.cfg.seed)
            })
            .collect()
    }

    /// Task indices for a training step, drawn with replacement.
    fn sample_tasks(&self, step: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(u64::MAX - step as u64);
        (0..self.cfg.batch_episodes)
            .map(|_| rng.gen_range(0..self.train.tasks.len()))
            .collect()
    }

    /// Rollouts for `step` under the current policy at training temperature.
    pub fn collect(&self, step: usize) -> Result<Vec<Episode>> {
        let picks = self.sample_tasks(step);
        let id_base = (step * self.cfg.batch_episodes) as u64;
        self.play(&self.policy, &self.train, &picks, self.cfg.decode(), id_base)
    }

    /// Credit assignment with the current value head.
    pub fn to_samples(&self, episodes: &[Episode]) -> Result<Vec<EpisodeSample>> {
        let gae = self.cfg.gae();
        episodes
            .par_iter()
            .map(|ep| {
                let values: Vec<f64> = ep
                    .steps
                    .iter()
                    .flat_map(|t| &t.generated)
                    .map(|s| self.value.value(&s.features))
                    .collect::<Result<_>>()?;
                let records = ep.trajectory.turn_records();
                let table = compute_advantages(&records, &values, &gae, self.cfg.token_gae_scope)?;
                let turns = ep
                    .steps
                    .iter()
                    .zip(&records)
                    .map(|(steps, rec)| TurnSample {
                        generated: steps.generated.clone(),
                        advantages: table.token_advantages[rec.positions.clone()].to_vec(),
                        value_targets: table.value_targets[rec.positions.clone()].to_vec(),
                        observation: steps.observation.clone(),
                    })
                    .collect();
                Ok(EpisodeSample { turns })
            })
            .collect()
    }

    /// One iteration: rollouts, credit, optimizer step.
    pub fn train_step(&mut self) -> Result<StepRow> {
        let episodes = self.collect(self.step)?;
        let mean_reward =
            episodes.iter().map(|e| e.trajectory.total_reward()).sum::<f64>() / episodes.len() as f64;
        let mut batch = self.to_samples(&episodes)?;
        if self.cfg.normalize_advantages {
            whiten_advantages(&mut batch);
        }
        let update = train_step(&batch, &self.policy, &self.value, &self.reference, &self.cfg.optim())?;
        let row = StepRow::new(self.step, &update.report, mean_reward);
        self.policy = update.policy;
        self.value = update.value;
        self.step += 1;
        Ok(row)
    }

    /// Greedy rollouts over every task of the held-out split.
    pub fn evaluate(&self) -> Result<(MetricsTable, Vec<Trajectory>)> {
        self.evaluate_split(&self.eval)
    }

    /// Greedy rollouts over every training task.
    pub fn evaluate_train(&self) -> Result<(MetricsTable, Vec<Trajectory>)> {
        self.evaluate_split(&self.train)
    }

    fn evaluate_split(&self, split: &Split) -> Result<(MetricsTable, Vec<Trajectory>)> {
        let picks: Vec<usize> = (0..split.tasks.len()).collect();
        let decode = DecodeConfig { temperature: 0.0, ..self.cfg.decode() };
        let episodes = self.play(&self.policy, split, &picks, decode, u64::MAX / 2)?;
        let trajectories: Vec<Trajectory> = episodes.into_iter().map(|e| e.trajectory).collect();
        Ok((MetricsTable::new(&trajectories, &ExactMatch), trajectories))
    }

    /// Fixed probe batch sampled from the reference policy.
    pub fn reference_probe(&self, episodes: usize, seed: u64) -> Result<Vec<EpisodeSample>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks: Vec<usize> = (0..episodes).map(|_| rng.gen_range(0..self.train.tasks.len())).collect();
        let eps = self.play(&self.reference, &self.train, &picks, self.cfg.decode(), u64::MAX / 4)?;
        self.to_samples(&eps)
    }

    /// Mean observation-token KL between the current policy and the reference on `probe`.
    pub fn observation_kl(&self, probe: &[EpisodeSample]) -> Result<f64> {
        Ok(policy_loss(probe, &self.policy, &self.reference, &self.cfg.optim())?.kl_obs)
    }

    fn sweep(&self, files: &mut Option<RunFiles>, summary: &mut RunSummary) -> Result<()> {
        let (table, trajectories) = self.evaluate()?;
        let rows = eval_rows(self.step, &table);
        if let Some(f) = files.as_mut() {
            append_trajectories(&f.dir.join("trajectories.jsonl"), &trajectories)?;
            for r in &rows {
                f.eval.serialize(r)?;
            }
            f.eval.flush()?;
        }
        log::info!("step {}\n{table}", self.step);
        summary.evals.extend(rows);
        Ok(())
    }

    /// Runs `cfg.steps` iterations. With an output directory, writes
    /// `metrics.csv`, `eval.csv`, `trajectories.jsonl` (evaluation sweeps),
    /// `config.txt` and checkpoints.
    pub fn run(&mut self, out_dir: Option<&Path>) -> Result<RunSummary> {
        let mut files = out_dir.map(|d| RunFiles::create(d, &self.cfg)).transpose()?;
        let mut summary = RunSummary { steps: Vec::new(), evals: Vec::new() };
        self.sweep(&mut files, &mut summary)?;
        let target = self.step + self.cfg.steps;
        while self.step < target {
            let row = match self.train_step() {
                Ok(row) => row,
                Err(e) => {
                    if let Some(f) = &files {
                        self.checkpoint().save(&f.dir.join("last_good.json"))?;
                    }
                    return Err(e);
                }
            };
            log::debug!("{row:?}");
            if let Some(f) = files.as_mut() {
                f.metrics.serialize(row)?;
                f.metrics.flush()?;
            }
            summary.steps.push(row);
            let every = |n: usize| n > 0 && self.step.is_multiple_of(n);
            if every(self.cfg.eval_every) || self.step == target {
                self.sweep(&mut files, &mut summary)?;
            }
            if let (Some(f), true) = (&files, every(self.cfg.checkpoint_every)) {
                self.checkpoint().save(&f.dir.join(format!("checkpoint-{:06}.json", self.step)))?;
            }
        }
        if let Some(f) = &files {
            self.checkpoint().save(&f.dir.join("final.json"))?;
        }
        Ok(summary)
    }
}

struct RunFiles {
    dir: PathBuf,
    metrics: csv::Writer<std::fs::File>,
    eval: csv::Writer<std::fs::File>,
}

impl RunFiles {
    fn create(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), cfg.to_flat()?)?;
        let traj = dir.join("trajectories.jsonl");
        if traj.exists() {
            std::fs::remove_file(&traj)?;
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics: csv::Writer::from_path(dir.join("metrics.csv"))?,
            eval: csv::Writer::from_path(dir.join("eval.csv"))?,
        })
    }
}

/// Shifts and scales all token advantages in the batch to zero mean and unit variance.
pub fn whiten_advantages(batch: &mut [EpisodeSample]) {
    let all = || batch.iter().flat_map(|e| &e.turns).flat_map(|t| &t.advantages);
    let n = all().count();
    if n < 2 {
        return;
    }
    let mean = all().sum::<f64>() / n as f64;
    let var = all().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let scale = 1.0 / (var.sqrt() + 1e-8);
    for turn in batch.iter_mut().flat_map(|e| e.turns.iter_mut()) {
        for a in &mut turn.advantages {
            *a = (*a - mean) * scale;
        }
    }
}

/// True when the mean of the last tenth of `values` exceeds the mean of the first tenth.
pub fn trend_increasing(values: &[f64]) -> bool {
    let k = (values.len() / 10).max(1);
    if values.len() < 2 * k {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    mean(&values[values.len() - k..]) > mean(&values[..k])
}

/// Reads a run-metrics CSV.
pub fn read_metrics(path: &Path) -> Result<Vec<StepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
