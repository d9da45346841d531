//! Trains the micro-policy on the synthetic corpus and reports how page
//! recall and fetch usage develop.
//!
//! `cargo run --release --example train_navigator [steps]`

use alden::grammar::Command;
use alden::harness::{generate_corpus, CorpusSpec, RunConfig, Trainer};

fn main() -> alden::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(300);
    let corpus = generate_corpus(&CorpusSpec::default(), 7)?;
    let base = RunConfig::parse(include_str!("../../../configs/learnability.conf"))?;
    let cfg = RunConfig { steps, ..base };
    let mut trainer = Trainer::new(cfg, &corpus)?;

    let (table, _) = trainer.evaluate()?;
    println!("before training\n{table}");
    let every = (steps / 10).max(1);
    for _ in 0..steps {
        let row = trainer.train_step()?;
        if row.step % every == 0 {
            println!(
                "step {:5}  reward {:6.3}  kl_gen {:.4}  kl_obs {:.5}  entropy {:.3}",
                row.step, row.mean_episode_reward, row.kl_gen, row.kl_obs, row.entropy
            );
        }
    }

    let (table, trajectories) = trainer.evaluate()?;
    println!("\nafter {steps} steps\n{table}");
    let fetches = trajectories
        .iter()
        .flat_map(|t| &t.turns)
        .filter(|l| matches!(l.action.as_ref().map(|a| &a.command), Some(Command::Fetch { .. })))
        .count();
    println!("fetch actions in evaluation: {fetches}");
    if let Some(t) = trajectories.iter().find(|t| t.gold.pages.len() == 1 && t.task.question.contains("page")) {
        println!("\n{}", t.task.question);
        for l in &t.turns {
            println!("  {} -> reward {:.3}", l.response_text, l.turn_reward);
        }
    }
    Ok(())
}
