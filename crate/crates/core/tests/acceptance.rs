//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use alden::credit::{compute_advantages, token_gae, turn_gae, GaeConfig, TokenGaeScope};
use alden::document::{CorpusRecord, Document, QueryKind, Task, TokenId};
use alden::grammar::{parse_response, Action, Command, ParseResult};
use alden::harness::rollout::AgentTurn;
use alden::harness::{
    generate_corpus, read_trajectories, rollout, score_trajectory, write_trajectories, Agent, CorpusSpec, EpisodeSetup,
    MicroAgent, RunConfig, Script, ScriptedAgent, Trainer, Trajectory,
};
use alden::policy::vocab::{EOT_ID, FUNCTION_WORDS, KEY_WORDS};
use alden::policy::{
    log_prob_and_grad, masked_dist, masked_log_prob_and_grad, value_and_grad, FeatureMap, Features, GeneratedStep,
    ObservationKind, ObservationStep, PolicyParams, ValueParams, Vocab,
};
use alden::ppo::{policy_loss, train_step, value_loss, EpisodeSample, OptimConfig, TurnSample};
use alden::retrieval::TfCosine;
use alden::reward::{fetch_proximity, format_reward, turn_reward, RewardConfig, TurnEvidence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

const LEARNABILITY: &str = include_str!("../../../configs/learnability.conf");
const SEARCH_ONLY: &str = include_str!("../../../configs/search_only.conf");

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> Outcome;

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- rewards

fn task(gold: &[usize], answer: &str) -> Task {
    Task {
        question: "what is the date".into(),
        gold_answer: answer.into(),
        gold_pages: gold.iter().copied().collect(),
        query_kind: QueryKind::General,
    }
}

fn result_u(text: &str, collected: &[usize], ranked: &[usize], task: &Task, accessed: &[usize]) -> f64 {
    let parsed = parse_response(text);
    let accessed: BTreeSet<usize> = accessed.iter().copied().collect();
    let b = turn_reward(&parsed, TurnEvidence { collected, ranked }, task, &accessed, None, &[], &RewardConfig::default())
        .expect("reward");
    b.result_reward
}

fn reward_units() -> Outcome {
    let t = task(&[3], "march 3");
    let answer = result_u("<think>x</think><answer>March 3</answer>", &[], &[], &t, &[]);
    let fetch = result_u("<think>x</think><fetch>3</fetch>", &[3], &[], &t, &[]);
    let search = result_u("<think>x</think><search>date</search>", &[3], &[3, 1, 2], &t, &[3]);
    let f_idx = fetch_proximity(4, &[3, 5].into());
    let f_idx_err = (f_idx - (-1f64).exp()).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples = [
        "<think>a</think><answer>b</answer>",
        "<think>a</think>",
        "<answer>b</answer>",
        "<think>a</think><fetch>x</fetch>",
        "",
    ];
    let mut formats_ok = samples.iter().all(|s| {
        let f = format_reward(&parse_response(s));
        f == 0.0 || f == -1.0
    });
    for _ in 0..10_000 {
        let bytes: Vec<u8> = (0..rng.gen_range(0..48)).map(|_| rng.gen()).collect();
        let parsed = parse_response(&String::from_utf8_lossy(&bytes));
        let f = format_reward(&parsed);
        formats_ok &= f == if parsed.is_well_formed() { 0.0 } else { -1.0 };
    }
    let pass = formats_ok && answer == 5.0 && fetch == 1.0 && search == 0.5 && f_idx_err <= 1e-12;
    outcome(
        pass,
        format!(
            "format in {{0,-1}}: {formats_ok}; answer u={answer}; first fetch u={fetch}; repeated search u={search}; \
             |f_idx(4,{{3,5}}) - e^-1| = {f_idx_err:.1e} (tol 1e-12)"
        ),
    )
}

// ---------------------------------------------------------------- GAE

fn gae_oracle(r: &[f64], v: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = r.len();
    let val = |k: usize| if k < n { v[k] } else { 0.0 };
    (0..n)
        .map(|i| (i..n).map(|k| (gamma * lambda).powi((k - i) as i32) * (r[k] + gamma * val(k + 1) - val(k))).sum())
        .collect()
}

fn gae_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut suffix_exact = true;
    let sequences = 2000;
    for _ in 0..sequences {
        let n = rng.gen_range(1..=64);
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (gamma, lambda) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let cfg = GaeConfig { gamma_turn: gamma, lambda_turn: lambda, gamma_token: gamma, lambda_token: lambda };
        let oracle = gae_oracle(&r, &v, gamma, lambda);
        let hat = turn_gae(&r, &v, &cfg).unwrap();
        let (adv, targets) = token_gae(&r, &v, &cfg).unwrap();
        for i in 0..n {
            worst = worst
                .max((hat[i] - (oracle[i] + v[i])).abs())
                .max((adv[i] - oracle[i]).abs())
                .max((targets[i] - (oracle[i] + v[i])).abs());
        }

        let unit = GaeConfig { gamma_turn: 1.0, lambda_turn: 1.0, gamma_token: 1.0, lambda_token: 1.0 };
        let zeros = vec![0.0; n];
        let mut suffix = vec![0.0; n];
        let mut acc = 0.0;
        for k in (0..n).rev() {
            acc += r[k];
            suffix[k] = acc;
        }
        suffix_exact &= turn_gae(&r, &zeros, &unit).unwrap() == suffix;
        suffix_exact &= token_gae(&r, &zeros, &unit).unwrap().0 == suffix;
    }
    outcome(
        worst <= 1e-12 && suffix_exact,
        format!("{sequences} sequences, max |recursive - double sum| = {worst:.1e} (tol 1e-12); unit discount suffix sums exact: {suffix_exact}"),
    )
}

// ---------------------------------------------------------------- token-reward assembly

/// Random actions with queries drawn from a small word pool, so repeats are common.
struct RandomActor<'a> {
    vocab: &'a Vocab,
    pages: usize,
}

impl Agent for RandomActor<'_> {
    fn name(&self) -> String {
        "random-actor".into()
    }

    fn begin(&mut self, _task: &Task, document: &Document) {
        self.pages = document.len();
    }

    fn respond(&mut self, rng: &mut ChaCha8Rng) -> alden::Result<AgentTurn> {
        let pool: Vec<&str> = FUNCTION_WORDS.iter().chain(&KEY_WORDS[..3]).copied().collect();
        let text = match rng.gen_range(0..10) {
            0..=5 => {
                let words: Vec<&str> = (0..rng.gen_range(1..5)).map(|_| pool[rng.gen_range(0..pool.len())]).collect();
                format!("<think>look</think><search>{}</search>", words.join(" "))
            }
            6 | 7 => format!("<think>read</think><fetch>{}</fetch>", rng.gen_range(0..self.pages + 2)),
            8 => "<think>done</think><answer>march 3</answer>".to_string(),
            _ => "<think>hmm</think>".to_string(),
        };
        let mut pieces = self.vocab.tokenize_response(&text);
        pieces.push((EOT_ID, String::new()));
        Ok(AgentTurn { text, pieces, steps: Vec::new(), truncated: false })
    }

    fn observe(&mut self, _tokens: &[TokenId], _kind: ObservationKind) -> Vec<ObservationStep> {
        Vec::new()
    }
}

fn corpus(n_documents: usize, seed: u64) -> Vec<CorpusRecord> {
    generate_corpus(&CorpusSpec { n_documents, ..CorpusSpec::default() }, seed).expect("corpus")
}

fn documents(records: &[CorpusRecord], vocab: &Vocab) -> Vec<(Document, Task)> {
    records
        .iter()
        .flat_map(|r| {
            let doc = r.to_document(|t| vocab.observe(t)).expect("document");
            r.tasks.iter().map(move |t| (doc.clone(), t.clone()))
        })
        .collect()
}

fn play(agent: &mut dyn Agent, jobs: &[(Document, Task)], k: usize, cfg: &RunConfig, vocab: &Vocab, id: u64) -> Trajectory {
    let (document, task) = &jobs[k % jobs.len()];
    let setup = EpisodeSetup { document, task, retriever: &TfCosine, env: cfg.env(), reward: cfg.reward(), vocab };
    rollout(agent, &setup, id, cfg.seed).expect("rollout").trajectory
}

fn assembly_suite() -> Outcome {
    let vocab = Vocab::default();
    let cfg = RunConfig::default();
    let jobs = documents(&corpus(10, 3), &vocab);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut episodes, mut penalised_turns, mut violations) = (0, 0, Vec::new());
    for id in 0..1500u64 {
        let trajectory = if id % 10 == 0 {
            play(&mut ScriptedAgent::new(Script::RepeatSearch, &vocab), &jobs, id as usize, &cfg, &vocab, id)
        } else {
            play(&mut RandomActor { vocab: &vocab, pages: 0 }, &jobs, id as usize, &cfg, &vocab, id)
        };
        episodes += 1;
        let records = trajectory.turn_records();
        let len = records.last().unwrap().positions.end;
        let values: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gae = GaeConfig { gamma_turn: rng.gen_range(0.0..=1.0), ..GaeConfig::default() };
        let table = compute_advantages(&records, &values, &gae, TokenGaeScope::Episode).unwrap();
        let turn_values: Vec<f64> = records.iter().map(|r| values[r.last_position()]).collect();
        let rewards: Vec<f64> = records.iter().map(|r| r.turn_reward).collect();
        let v_hat = turn_gae(&rewards, &turn_values, &gae).unwrap();
        if v_hat != table.turn_values {
            violations.push(format!("episode {id}: turn values"));
        }
        let mut expected = vec![0.0; len];
        for (t, rec) in records.iter().enumerate() {
            if let (true, Some(q)) = (t > 0, &rec.query_span) {
                for (pos, w) in q.clone().zip(&rec.token_penalty_weights) {
                    expected[pos] = -w * rec.overlap;
                }
            }
            if rec.overlap > 0.0 {
                penalised_turns += 1;
                let sum: f64 = rec.token_penalty_weights.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    violations.push(format!("episode {id} turn {}: weights sum {sum}", t + 1));
                }
            }
            expected[rec.last_position()] = v_hat[t];
        }
        for (pos, (&got, &want)) in table.token_rewards.iter().zip(&expected).enumerate() {
            if got != want {
                violations.push(format!("episode {id} position {pos}: {got} vs {want}"));
            }
        }
        for (t, rec) in records.iter().enumerate() {
            for pos in rec.positions.clone() {
                let in_penalised_span = t > 0 && rec.query_span.as_ref().is_some_and(|q| q.contains(&pos));
                if pos != rec.last_position() && !in_penalised_span && table.token_rewards[pos] != 0.0 {
                    violations.push(format!("episode {id} position {pos}: stray reward"));
                }
            }
            if table.token_rewards[rec.last_position()].to_bits() != v_hat[t].to_bits() {
                violations.push(format!("episode {id} turn {}: last token", t + 1));
            }
        }
    }
    let pass = violations.is_empty() && penalised_turns > 0;
    outcome(
        pass,
        format!(
            "{episodes} episodes, {penalised_turns} turns with overlap > 0, {} violations{}",
            violations.len(),
            violations.first().map(|v| format!(" (first: {v})")).unwrap_or_default()
        ),
    )
}

// ---------------------------------------------------------------- gradients

fn random_features(rng: &mut ChaCha8Rng, d: usize) -> Features {
    let dense: Vec<f64> = (0..d).map(|_| if rng.gen_bool(0.6) { rng.gen_range(-1.0..1.0) } else { 0.0 }).collect();
    Features::from_dense(&dense)
}

fn random_allowed(rng: &mut ChaCha8Rng, v: usize) -> Vec<TokenId> {
    let mut allowed: Vec<TokenId> = (0..v as TokenId).filter(|_| rng.gen_bool(0.7)).collect();
    if allowed.is_empty() {
        allowed.push(0);
    }
    allowed
}

/// Random batch whose recorded log-probabilities come from `old`.
fn synthetic_batch(rng: &mut ChaCha8Rng, old: &PolicyParams, episodes: usize) -> Vec<EpisodeSample> {
    let (v, d) = (old.vocab_size(), old.feature_dim());
    (0..episodes)
        .map(|_| {
            let turns = (0..rng.gen_range(1..4))
                .map(|_| {
                    let l = rng.gen_range(1..5);
                    let generated = (0..l)
                        .map(|_| {
                            let features = random_features(rng, d);
                            let allowed = random_allowed(rng, v);
                            let token = allowed[rng.gen_range(0..allowed.len())];
                            let p = masked_dist(old, &features, &allowed).unwrap();
                            let at = allowed.iter().position(|&t| t == token).unwrap();
                            GeneratedStep { features, allowed: Arc::from(allowed), token, log_prob: p[at].ln() }
                        })
                        .collect();
                    let observation = (0..rng.gen_range(1..4))
                        .map(|_| ObservationStep { features: random_features(rng, d), token: rng.gen_range(0..v as TokenId) })
                        .collect();
                    TurnSample {
                        generated,
                        advantages: (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                        value_targets: (0..l).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                        observation,
                    }
                })
                .collect();
            EpisodeSample { turns }
        })
        .collect()
}

fn perturbed(p: &PolicyParams, scale: f64, seed: u64) -> PolicyParams {
    let noise = PolicyParams::random(p.vocab_size(), p.feature_dim(), scale, seed);
    let w = p.weights().iter().zip(noise.weights()).map(|(a, b)| a + b).collect();
    PolicyParams::from_weights(p.vocab_size(), p.feature_dim(), w).unwrap()
}

/// `‖fd − g‖ / max(‖fd‖, ‖g‖)` with central differences of step `h`.
fn fd_relative_error(analytic: &[f64], h: f64, f: impl Fn(usize, f64) -> f64) -> f64 {
    let fd: Vec<f64> = (0..analytic.len()).map(|i| (f(i, h) - f(i, -h)) / (2.0 * h)).collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = fd.iter().zip(analytic).map(|(a, b)| a - b).collect();
    let scale = norm(&fd).max(norm(analytic));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn with_weight(p: &PolicyParams, i: usize, delta: f64) -> PolicyParams {
    let mut q = p.clone();
    q.weights_mut()[i] += delta;
    q
}

fn gradient_suite() -> Outcome {
    let h = 1e-5;
    let instances = 100;
    let (mut logp, mut value, mut loss): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let (v, d) = (rng.gen_range(2..8), rng.gen_range(2..7));
        let theta = PolicyParams::random(v, d, 0.7, seed);
        let f = random_features(&mut rng, d);
        let y = rng.gen_range(0..v as TokenId);
        let (_, g) = log_prob_and_grad(&theta, &f, y).unwrap();
        logp = logp.max(fd_relative_error(&g, h, |i, dx| log_prob_and_grad(&with_weight(&theta, i, dx), &f, y).unwrap().0));
        let allowed = random_allowed(&mut rng, v);
        let y = allowed[rng.gen_range(0..allowed.len())];
        let (_, g) = masked_log_prob_and_grad(&theta, &f, &allowed, y).unwrap();
        logp = logp.max(fd_relative_error(&g, h, |i, dx| {
            masked_log_prob_and_grad(&with_weight(&theta, i, dx), &f, &allowed, y).unwrap().0
        }));

        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vp = ValueParams::from_weights(w.clone()).unwrap();
        let shifted = |i: usize, dx: f64| {
            let mut w = w.clone();
            w[i] += dx;
            ValueParams::from_weights(w).unwrap()
        };
        let (_, g) = value_and_grad(&vp, &f).unwrap();
        value = value.max(fd_relative_error(&g, h, |i, dx| shifted(i, dx).value(&f).unwrap()));
        let old = PolicyParams::random(v, d, 0.7, seed + 7);
        let batch = synthetic_batch(&mut rng, &old, 3);
        let (_, g) = value_loss(&batch, &vp).unwrap();
        value = value.max(fd_relative_error(&g, h, |i, dx| value_loss(&batch, &shifted(i, dx)).unwrap().0));

        let reference = perturbed(&old, 0.3, seed + 100);
        let theta = perturbed(&old, 0.1, seed + 200);
        let cfg = OptimConfig { beta_gen: 0.05, beta_obs: 0.2, ..OptimConfig::default() };
        let g = policy_loss(&batch, &theta, &reference, &cfg).unwrap().grad;
        loss = loss.max(fd_relative_error(&g, h, |i, dx| {
            policy_loss(&batch, &with_weight(&theta, i, dx), &reference, &cfg).unwrap().objective
        }));
    }
    let tol = 1e-4;
    outcome(
        logp <= tol && value <= tol && loss <= tol,
        format!("{instances} instances, max relative error: log-prob {logp:.1e}, value {value:.1e}, full loss {loss:.1e} (tol 1e-4)"),
    )
}

// ---------------------------------------------------------------- KL effect

fn frozen_batch_kl() -> (usize, usize) {
    let mut wins = 0;
    let instances = 100;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let reference = PolicyParams::random(6, 5, 0.5, seed);
        let theta = perturbed(&reference, 0.4, seed + 50);
        let batch = synthetic_batch(&mut rng, &theta, 8);
        let kl_after = |beta_obs: f64| {
            let cfg = OptimConfig { beta_obs, lr_policy: 0.5, ..OptimConfig::default() };
            let up = train_step(&batch, &theta, &ValueParams::zeros(5), &reference, &cfg).unwrap();
            policy_loss(&batch, &up.policy, &reference, &cfg).unwrap().kl_obs
        };
        if kl_after(0.01) <= kl_after(0.0) {
            wins += 1;
        }
    }
    (wins, instances as usize)
}

fn kl_run(beta_obs: f64, records: &[CorpusRecord]) -> f64 {
    let base = RunConfig::parse(LEARNABILITY).unwrap();
    let cfg = RunConfig { steps: 200, batch_episodes: 64, beta_obs, ..base };
    let mut trainer = Trainer::new(cfg, records).unwrap();
    let probe = trainer.reference_probe(64, 99).unwrap();
    for _ in 0..200 {
        trainer.train_step().unwrap();
    }
    trainer.observation_kl(&probe).unwrap()
}

fn kl_suite() -> Outcome {
    let (wins, instances) = frozen_batch_kl();
    let records = corpus(50, 7);
    let beta_obs = RunConfig::parse(LEARNABILITY).unwrap().beta_obs;
    let with = kl_run(beta_obs, &records);
    let without = kl_run(0.0, &records);
    outcome(
        wins == instances && with < without,
        format!(
            "frozen batch: beta_obs=0.01 update KL <= beta_obs=0 update on {wins}/{instances}; \
             200 steps: obs KL {with:.5} with anchor (beta_obs={beta_obs}) vs {without:.5} without"
        ),
    )
}

// ---------------------------------------------------------------- learnability

struct RunResult {
    step0: f64,
    last: f64,
    pq_recall: f64,
    pq_fetch_recall: f64,
}

fn fetch_recall(trajectories: &[&Trajectory]) -> f64 {
    let total: f64 = trajectories
        .iter()
        .map(|t| {
            let fetched: BTreeSet<usize> = t
                .turns
                .iter()
                .filter(|l| matches!(l.action.as_ref().map(|a| &a.command), Some(Command::Fetch { .. })))
                .flat_map(|l| l.collected_pages.iter().copied())
                .collect();
            t.gold.pages.intersection(&fetched).count() as f64 / t.gold.pages.len() as f64
        })
        .sum();
    total / trajectories.len().max(1) as f64
}

fn train_run(conf: &str, records: &[CorpusRecord]) -> RunResult {
    let cfg = RunConfig::parse(conf).unwrap();
    let mut trainer = Trainer::new(cfg.clone(), records).unwrap();
    let rows: Vec<f64> = (0..cfg.steps).map(|_| trainer.train_step().unwrap().mean_episode_reward).collect();
    let tail = (rows.len() / 20).max(1);
    let last = rows[rows.len() - tail..].iter().sum::<f64>() / tail as f64;
    let (table, trajectories) = trainer.evaluate().unwrap();
    let pq: Vec<&Trajectory> = trajectories.iter().filter(|t| t.task.query_kind == QueryKind::PageReferenced).collect();
    RunResult {
        step0: rows[0],
        last,
        pq_recall: table.rows.get("page_referenced").map_or(0.0, |r| r.recall),
        pq_fetch_recall: fetch_recall(&pq),
    }
}

fn learnability_suite() -> Outcome {
    let records = corpus(50, 7);
    let pq = records.iter().flat_map(|r| &r.tasks).filter(|t| t.query_kind == QueryKind::PageReferenced).count();
    let tasks = records.iter().map(|r| r.tasks.len()).sum::<usize>();
    let full = train_run(LEARNABILITY, &records);
    let search = train_run(SEARCH_ONLY, &records);
    let steps = RunConfig::parse(LEARNABILITY).unwrap().steps;
    let reward_ok = full.last - full.step0 >= full.step0.abs();
    let pass = steps <= 2000 && reward_ok && full.pq_recall >= 0.9 && full.pq_fetch_recall >= 0.9 && full.pq_recall > search.pq_recall;
    outcome(
        pass,
        format!(
            "{} docs x {} pages, {pq}/{tasks} PQ tasks, {steps} steps; reward {:.3} -> {:.3} (need gain >= |step0|); \
             PQ recall {:.2} (fetch-only {:.2}, need >= 0.9) vs search-only {:.2}",
            records.len(),
            records[0].pages.len(),
            full.step0,
            full.last,
            full.pq_recall,
            full.pq_fetch_recall,
            search.pq_recall
        ),
    )
}

// ---------------------------------------------------------------- parser fuzz

const FRAGMENTS: [&str; 14] = [
    "<think>", "</think>", "<search>", "</search>", "<fetch>", "</fetch>", "<answer>", "</answer>", "<", "/", "12", " ",
    "word", "\\boxed{x}",
];

fn random_action(rng: &mut ChaCha8Rng) -> Action {
    const CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789 ,.?<>/{}\\";
    let text = |rng: &mut ChaCha8Rng| loop {
        let s: String = (0..rng.gen_range(0..24)).map(|_| CHARS[rng.gen_range(0..CHARS.len())] as char).collect();
        if !FRAGMENTS[..8].iter().any(|t| s.contains(t)) {
            return s;
        }
    };
    let command = match rng.gen_range(0..3) {
        0 => Command::Search { query: text(rng) },
        1 => Command::Fetch { page: rng.gen_range(0..100_000) },
        _ => Command::Answer { text: text(rng) },
    };
    Action { think: text(rng), command }
}

fn fuzz_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let inputs = 1_000_000;
    let mut well_formed = 0usize;
    let total = std::panic::catch_unwind(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut seen = 0usize;
        for i in 0..inputs {
            let bytes: Vec<u8> = if i % 2 == 0 {
                (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect()
            } else {
                (0..rng.gen_range(0..8)).flat_map(|_| FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())].bytes()).collect()
            };
            let parsed = parse_response(&String::from_utf8_lossy(&bytes));
            seen += usize::from(parsed.is_well_formed());
        }
        seen
    });
    let parsed_all = match total {
        Ok(n) => {
            well_formed = n;
            true
        }
        Err(_) => false,
    };
    let round_trips = 10_000;
    let mut failures = 0;
    for _ in 0..round_trips {
        let action = random_action(&mut rng);
        let text = action.render();
        let ok = matches!(parse_response(&text), ParseResult::WellFormed { action: ref a } if *a == action);
        failures += usize::from(!ok);
    }
    outcome(
        parsed_all && failures == 0,
        format!("{inputs} random inputs parsed without panic: {parsed_all} ({well_formed} well-formed); {round_trips} round trips, {failures} failures"),
    )
}

// ---------------------------------------------------------------- replay

fn replay_suite() -> Outcome {
    let vocab = Vocab::default();
    let cfg = RunConfig::default();
    let jobs = documents(&corpus(20, 11), &vocab);
    let map = FeatureMap::new(&vocab, cfg.window).unwrap();
    let policy = PolicyParams::random(vocab.len(), map.dim(), 1.0, 5);
    let episodes = 1000;
    let trajectories: Vec<Trajectory> = (0..episodes as u64)
        .map(|id| match id % 4 {
            0 => play(&mut MicroAgent::new(&policy, &vocab, &map, cfg.decode()), &jobs, id as usize, &cfg, &vocab, id),
            1 => play(&mut RandomActor { vocab: &vocab, pages: 0 }, &jobs, id as usize, &cfg, &vocab, id),
            _ => {
                let script = Script::ALL[(id / 4) as usize % Script::ALL.len()];
                play(&mut ScriptedAgent::new(script, &vocab), &jobs, id as usize, &cfg, &vocab, id)
            }
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trajectories.jsonl");
    write_trajectories(&path, &trajectories).unwrap();
    let logged = read_trajectories(&path).unwrap();

    let out = std::process::Command::new(env!("CARGO_BIN_EXE_alden"))
        .args(["score", "--traj"])
        .arg(&path)
        .output()
        .expect("run score");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mut mismatches = 0;
    for (t, row) in logged.iter().zip(&rows) {
        let turns = row["turns"].as_array().unwrap();
        for (log, scored) in t.turns.iter().zip(turns) {
            for (key, want) in [
                ("format_reward", log.format_reward),
                ("result_reward", log.result_reward),
                ("turn_reward", log.turn_reward),
            ] {
                if scored[key].as_f64().map(f64::to_bits) != Some(want.to_bits()) {
                    mismatches += 1;
                }
            }
        }
        mismatches += usize::from(turns.len() != t.turns.len());
    }
    let in_process = logged
        .iter()
        .filter(|t| !score_trajectory(t, &cfg.gae(), cfg.token_gae_scope).unwrap().matches_log)
        .count();
    let pass = out.status.success() && rows.len() == episodes && mismatches == 0 && in_process == 0;
    outcome(
        pass,
        format!(
            "{episodes}-episode log, score exit {:?}, {} rows, {mismatches} bitwise reward mismatches, {in_process} episodes flagged",
            out.status.code(),
            rows.len()
        ),
    )
}

fn main() -> ExitCode {
    let suite: [(&str, Duration, Check); 8] = [
        ("reward unit values", Duration::from_secs(1), reward_units),
        ("GAE oracle", Duration::from_secs(10), gae_suite),
        ("token-reward assembly", Duration::from_secs(10), assembly_suite),
        ("gradient checks", Duration::from_secs(30), gradient_suite),
        ("KL regularization effect", Duration::from_secs(300), kl_suite),
        ("learnability", Duration::from_secs(1800), learnability_suite),
        ("parser fuzz", Duration::from_secs(60), fuzz_suite),
        ("replay fidelity", Duration::from_secs(600), replay_suite),
    ];
    let mut failed = 0;
    for (name, budget, check) in suite {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "{} {name}: {} [{:.1}s, budget {}s]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
