//! Turn rewards for the reference settings (alpha 5, eta 0.5, m 5).

use alden::document::{QueryKind, Task};
use alden::grammar::parse_response;
use alden::reward::{fetch_proximity, token_weights, turn_reward, RewardConfig, TurnEvidence};
use alden::text::terms;
use std::collections::BTreeSet;

fn main() -> alden::Result<()> {
    let cfg = RewardConfig::default();
    let task = Task {
        question: "on page 4 what is the date".into(),
        gold_answer: "cobalt".into(),
        gold_pages: [4].into(),
        query_kind: QueryKind::PageReferenced,
    };
    let none = BTreeSet::new();
    let show = |label: &str, text: &str, collected: &[usize], accessed: &BTreeSet<usize>, past: &[Vec<String>]| {
        let parsed = parse_response(text);
        let query = parsed.action().and_then(|a| match &a.command {
            alden::grammar::Command::Search { query } => Some(terms(query)),
            _ => None,
        });
        let b = turn_reward(
            &parsed,
            TurnEvidence { collected, ranked: collected },
            &task,
            accessed,
            query.as_deref(),
            past,
            &cfg,
        )?;
        println!("{label:<28} r = {:+.4}  {:?}", b.turn_reward, b.components);
        alden::Result::Ok(())
    };
    show("perfect answer", "<think>t</think><answer>cobalt</answer>", &[], &none, &[])?;
    show("perfect first fetch", "<think>t</think><fetch>4</fetch>", &[4], &none, &[])?;
    show("repeated perfect search", "<think>t</think><search>date</search>", &[4], &[4].into(), &[vec!["date".into()]])?;
    show("malformed", "<fetch>4</fetch>", &[], &none, &[])?;
    println!("f_idx(4, {{3, 5}}) = {:.15}", fetch_proximity(4, &[3, 5].into()));
    let past = vec![terms("revenue of the table")];
    println!("token weights {:?}", token_weights(&terms("revenue of the budget"), &past, 2));
    Ok(())
}
