//! Samples grammar-masked responses from a random micro-policy and shows the
//! per-token log-probabilities.

use alden::policy::{DecodeConfig, Dialogue, FeatureMap, PolicyParams, Vocab};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> alden::Result<()> {
    let vocab = Vocab::default();
    let map = FeatureMap::new(&vocab, 8)?;
    let params = PolicyParams::random(vocab.len(), map.dim(), 0.5, 1);
    println!("vocabulary {} symbols ({} generated), {} features", vocab.len(), vocab.generated_len(), map.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for temperature in [1.0, 0.0] {
        let mut dialogue = Dialogue::new("on page 4 what is the date", &vocab, &map);
        let cfg = DecodeConfig { temperature, ..DecodeConfig::default() };
        let turn = dialogue.sample_turn(&params, &cfg, &mut rng)?;
        println!("T = {temperature}: {}", vocab.render_response(&turn.tokens));
        let logp: f64 = turn.steps.iter().map(|s| s.log_prob).sum();
        println!("  {} tokens, log-prob {logp:.3}", turn.tokens.len());
    }
    Ok(())
}
