//! Dual-level credit assignment on a three-turn episode: search, repeated
//! search, answer.

use alden::credit::{compute_advantages, GaeConfig, TokenGaeScope, TurnRecord};
use alden::grammar::ActionKind;

fn main() -> alden::Result<()> {
    let turns = vec![
        TurnRecord {
            positions: 0..6,
            query_span: Some(2..4),
            action_kind: Some(ActionKind::Search),
            turn_reward: 0.6,
            overlap: 0.0,
            token_penalty_weights: vec![0.0, 0.0],
        },
        TurnRecord {
            positions: 6..12,
            query_span: Some(8..10),
            action_kind: Some(ActionKind::Search),
            turn_reward: 0.1,
            overlap: 0.5,
            token_penalty_weights: vec![1.0, 0.0],
        },
        TurnRecord {
            positions: 12..16,
            query_span: None,
            action_kind: Some(ActionKind::Answer),
            turn_reward: 5.0,
            overlap: 0.0,
            token_penalty_weights: vec![],
        },
    ];
    let values = vec![0.0; 16];
    for scope in [TokenGaeScope::Episode, TokenGaeScope::Turn] {
        let table = compute_advantages(&turns, &values, &GaeConfig::default(), scope)?;
        println!("{scope:?}");
        println!("  turn values  {:?}", table.turn_values);
        println!("  token reward {:?}", table.token_rewards);
        println!("  advantages   {:?}", table.token_advantages.iter().map(|a| (a * 1e4).round() / 1e4).collect::<Vec<_>>());
    }
    Ok(())
}
