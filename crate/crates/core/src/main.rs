use alden::document::{read_corpus, write_corpus, CorpusRecord};
use alden::harness::metrics::{ExactMatch, MetricsTable};
use alden::harness::{
    generate_corpus, read_trajectories, rollout, score_trajectory, write_trajectories, Agent, CorpusSpec, EpisodeSetup,
    MicroAgent, RunConfig, Script, ScriptedAgent, Trainer, Trajectory,
};
use alden::policy::{Checkpoint, DecodeConfig, FeatureMap, Vocab};
use alden::retrieval::TfCosine;
use alden::{Error, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "alden", version, about = "Agentic long-document navigation with multi-turn PPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus as JSONL.
    GenCorpus {
        /// Flat key = value corpus spec; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play one episode per corpus task and write trajectories.
    Rollout {
        #[arg(long)]
        corpus: PathBuf,
        /// A checkpoint file or `scripted:NAME`.
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration for rewards, horizon and decoding limits.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Decode greedily instead of sampling.
        #[arg(long)]
        greedy: bool,
    },
    /// Train from random init, writing metrics, evaluations and checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Continue from a checkpoint instead of random init.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Recompute rewards and advantages from logged evidence, one JSON row per episode.
    Score {
        #[arg(long)]
        traj: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Navigation metrics summary.
    Metrics {
        #[arg(long)]
        traj: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
}

fn gen_corpus(spec: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let spec = spec.map_or_else(|| Ok(CorpusSpec::default()), CorpusSpec::load)?;
    let records = generate_corpus(&spec, seed)?;
    write_corpus(out, &records)?;
    eprintln!("wrote {} documents to {}", records.len(), out.display());
    Ok(())
}

enum PolicySource {
    Scripted(Script),
    Checkpoint(Checkpoint),
}

impl PolicySource {
    fn parse(spec: &str) -> Result<Self> {
        match spec.strip_prefix("scripted:") {
            Some(name) => Ok(Self::Scripted(Script::from_name(name)?)),
            None => Ok(Self::Checkpoint(Checkpoint::load(Path::new(spec))?)),
        }
    }
}

fn run_rollouts(corpus: &[CorpusRecord], source: &PolicySource, cfg: &RunConfig, decode: DecodeConfig, seed: u64) -> Result<Vec<Trajectory>> {
    let vocab = Vocab::default();
    let model = match source {
        PolicySource::Checkpoint(ckpt) => {
            let (policy, _) = ckpt.params()?;
            Some((policy, FeatureMap::new(&vocab, ckpt.window)?))
        }
        PolicySource::Scripted(_) => None,
    };
    if let Some((policy, map)) = &model {
        if policy.feature_dim() != map.dim() {
            return Err(Error::config("checkpoint feature dimension does not match its feature map"));
        }
    }
    let mut jobs = Vec::new();
    for record in corpus {
        let document = record.to_document(|t| vocab.observe(t))?;
        for task in &record.tasks {
            jobs.push((document.clone(), task.clone()));
        }
    }
    jobs.par_iter()
        .enumerate()
        .map(|(i, (document, task))| {
            let setup = EpisodeSetup {
                document,
                task,
                retriever: &TfCosine,
                env: cfg.env(),
                reward: cfg.reward(),
                vocab: &vocab,
            };
            let mut agent: Box<dyn Agent + '_> = match (source, &model) {
                (PolicySource::Scripted(s), _) => Box::new(ScriptedAgent::new(*s, &vocab)),
                (PolicySource::Checkpoint(_), Some((policy, map))) => Box::new(MicroAgent::new(policy, &vocab, map, decode)),
                (PolicySource::Checkpoint(_), None) => unreachable!("checkpoint parameters are loaded above"),
            };
            rollout(agent.as_mut(), &setup, i as u64, seed).map(|e| e.trajectory)
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenCorpus { spec, seed, out } => gen_corpus(spec.as_deref(), seed, &out),
        Command::Rollout { corpus, policy, seed, out, config, greedy } => {
            let cfg = load_config(config.as_deref())?;
            let records = read_corpus(&corpus)?;
            let source = PolicySource::parse(&policy)?;
            let decode = if greedy { DecodeConfig { temperature: 0.0, ..cfg.decode() } } else { cfg.decode() };
            let trajectories = run_rollouts(&records, &source, &cfg, decode, seed)?;
            write_trajectories(&out, &trajectories)?;
            eprintln!("wrote {} trajectories to {}", trajectories.len(), out.display());
            Ok(())
        }
        Command::Train { config, corpus, out_dir, resume } => {
            let cfg = RunConfig::load(&config)?;
            let records = read_corpus(&corpus)?;
            let mut trainer = Trainer::new(cfg, &records)?;
            if let Some(path) = resume {
                trainer = trainer.with_checkpoint(&Checkpoint::load(&path)?)?;
            }
            let summary = trainer.run(Some(&out_dir))?;
            if let Some(last) = summary.steps.last() {
                eprintln!("step {} mean episode reward {:.4}", last.step, last.mean_episode_reward);
            }
            Ok(())
        }
        Command::Score { traj, config } => {
            let cfg = load_config(config.as_deref())?;
            let trajectories = read_trajectories(&traj)?;
            let rows: Vec<_> = trajectories
                .par_iter()
                .map(|t| score_trajectory(t, &cfg.gae(), cfg.token_gae_scope))
                .collect::<Result<_>>()?;
            let mut out = std::io::stdout().lock();
            for row in &rows {
                serde_json::to_writer(&mut out, row)?;
                writeln!(out)?;
            }
            let matching = rows.iter().filter(|r| r.matches_log).count();
            eprintln!("{matching}/{} episodes reproduce their logged rewards", rows.len());
            if matching != rows.len() {
                return Err(Error::usage("recomputed rewards differ from the log"));
            }
            Ok(())
        }
        Command::Metrics { traj } => {
            let trajectories = read_trajectories(&traj)?;
            print!("{}", MetricsTable::new(&trajectories, &ExactMatch));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
