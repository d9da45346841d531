//! Steps the document environment by hand through search, fetch and answer.

use alden::document::{Document, Page, QueryKind, Task};
use alden::env::{DocumentEnv, EnvConfig};
use alden::grammar::parse_response;
use alden::retrieval::TfCosine;

fn main() -> alden::Result<()> {
    let texts = ["filler intro words", "the venue is harbor hall", "budget table totals", "closing remarks"];
    let pages = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Page { index: i + 1, text: t.to_string(), observation_tokens: vec![0] })
        .collect();
    let doc = Document::new("demo", pages)?;
    let task = Task {
        question: "what is the venue".into(),
        gold_answer: "harbor hall".into(),
        gold_pages: [2].into(),
        query_kind: QueryKind::General,
    };
    let mut env = DocumentEnv::reset(&doc, &task, &TfCosine, EnvConfig::default())?;
    for response in [
        "<think>look it up</think><search>venue</search>",
        "<think>check a neighbour</think><fetch>9</fetch>",
        "<think>reread</think><fetch>2</fetch>",
        "<think>done</think><answer>harbor hall</answer>",
    ] {
        let out = env.step(&parse_response(response))?;
        println!("turn {} {response}", out.turn);
        println!("  collected {:?} done {}", out.collected_pages, out.done);
        println!("  {}", out.observation.render().replace('\n', "\n  "));
    }
    println!("accessed {:?}", env.state().accessed_pages);
    Ok(())
}
