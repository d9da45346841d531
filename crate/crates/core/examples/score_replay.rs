//! Writes a trajectory log, reads it back and re-scores it from the logged
//! evidence alone.

use alden::credit::{GaeConfig, TokenGaeScope};
use alden::harness::{
    generate_corpus, read_trajectories, rollout, score_trajectory, write_trajectories, CorpusSpec, EpisodeSetup,
    MicroAgent,
};
use alden::policy::{DecodeConfig, FeatureMap, PolicyParams, Vocab};
use alden::retrieval::TfCosine;

fn main() -> alden::Result<()> {
    let vocab = Vocab::default();
    let map = FeatureMap::new(&vocab, 8)?;
    let policy = PolicyParams::random(vocab.len(), map.dim(), 1.0, 2);
    let corpus = generate_corpus(&CorpusSpec { n_documents: 20, ..CorpusSpec::default() }, 3)?;
    let mut log = Vec::new();
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
            let mut agent = MicroAgent::new(&policy, &vocab, &map, DecodeConfig::default());
            log.push(rollout(&mut agent, &setup, log.len() as u64, 9)?.trajectory);
        }
    }
    let dir = std::env::temp_dir().join("alden-score-replay");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("trajectories.jsonl");
    write_trajectories(&path, &log)?;
    let replayed = read_trajectories(&path)?;
    let mut matching = 0;
    for t in &replayed {
        let row = score_trajectory(t, &GaeConfig::default(), TokenGaeScope::Episode)?;
        matching += usize::from(row.matches_log);
    }
    println!("{matching}/{} episodes reproduce their logged rewards bit for bit", replayed.len());
    let first = score_trajectory(&replayed[0], &GaeConfig::default(), TokenGaeScope::Episode)?;
    println!("{}", serde_json::to_string_pretty(&first.turns)?);
    Ok(())
}
