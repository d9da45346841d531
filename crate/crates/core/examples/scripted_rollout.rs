//! Plays every scripted agent over a small corpus and prints navigation metrics.

use alden::harness::metrics::{ExactMatch, MetricsTable};
use alden::harness::{generate_corpus, rollout, CorpusSpec, EpisodeSetup, Script, ScriptedAgent};
use alden::policy::Vocab;
use alden::retrieval::TfCosine;

fn main() -> alden::Result<()> {
    let vocab = Vocab::default();
    let corpus = generate_corpus(&CorpusSpec { n_documents: 10, ..CorpusSpec::default() }, 11)?;
    for script in Script::ALL {
        let mut trajectories = Vec::new();
        for record in &corpus {
            let document = record.to_document(|t| vocab.observe(t))?;
            for task in &record.tasks {
                let setup = EpisodeSetup {
                    document: &document,
                    task,
                    retriever: &TfCosine,
                    env: Default::default(),
                    reward: Default::default(),
                    vocab: &vocab,
                };
                let mut agent = ScriptedAgent::new(script, &vocab);
                trajectories.push(rollout(&mut agent, &setup, trajectories.len() as u64, 0)?.trajectory);
            }
        }
        println!("scripted:{}", script.name());
        println!("{}", MetricsTable::new(&trajectories, &ExactMatch));
    }
    Ok(())
}
