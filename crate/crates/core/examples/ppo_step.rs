//! One PPO update on rollouts of a random policy: credit assignment, the
//! dual-KL objective and the effect of the step on the objective.

use alden::credit::{compute_advantages, GaeConfig, TokenGaeScope};
use alden::harness::{generate_corpus, rollout, CorpusSpec, EpisodeSetup, MicroAgent};
use alden::policy::{DecodeConfig, FeatureMap, PolicyParams, ValueParams, Vocab};
use alden::ppo::{policy_loss, train_step, EpisodeSample, OptimConfig, TurnSample};
use alden::retrieval::TfCosine;

fn main() -> alden::Result<()> {
    let vocab = Vocab::default();
    let map = FeatureMap::new(&vocab, 8)?;
    let corpus = generate_corpus(&CorpusSpec { n_documents: 8, ..CorpusSpec::default() }, 5)?;
    let policy = PolicyParams::random(vocab.len(), map.dim(), 0.01, 0);
    let value = ValueParams::zeros(map.dim());
    let mut batch = Vec::new();
    for (i, record) in corpus.iter().enumerate() {
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
            let ep = rollout(&mut agent, &setup, batch.len() as u64, i as u64)?;
            let records = ep.trajectory.turn_records();
            let n = records.last().map_or(0, |r| r.positions.end);
            let table = compute_advantages(&records, &vec![0.0; n], &GaeConfig::default(), TokenGaeScope::Episode)?;
            let turns = ep
                .steps
                .into_iter()
                .zip(&records)
                .map(|(s, r)| TurnSample {
                    generated: s.generated,
                    advantages: table.token_advantages[r.positions.clone()].to_vec(),
                    value_targets: table.value_targets[r.positions.clone()].to_vec(),
                    observation: s.observation,
                })
                .collect();
            batch.push(EpisodeSample { turns });
        }
    }
    let cfg = OptimConfig { lr_policy: 0.1, ..OptimConfig::default() };
    let update = train_step(&batch, &policy, &value, &policy, &cfg)?;
    println!("{} episodes", batch.len());
    println!("{:#?}", update.report);
    let after = policy_loss(&batch, &update.policy, &policy, &cfg)?;
    println!("objective before {:.5}, after {:.5}", update.report.surrogate, after.objective);
    println!("generated KL {:.3e}, observation KL {:.3e}", after.kl_gen, after.kl_obs);
    Ok(())
}
