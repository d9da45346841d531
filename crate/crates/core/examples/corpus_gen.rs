//! Generates the default synthetic corpus and prints one document.

use alden::document::QueryKind;
use alden::harness::{generate_corpus, CorpusSpec};

fn main() -> alden::Result<()> {
    let spec = CorpusSpec::default();
    let corpus = generate_corpus(&spec, 7)?;
    let tasks: Vec<_> = corpus.iter().flat_map(|r| &r.tasks).collect();
    let pq = tasks.iter().filter(|t| t.query_kind == QueryKind::PageReferenced).count();
    println!("{} documents, {} tasks, {pq} page-referenced", corpus.len(), tasks.len());
    let doc = &corpus[0];
    println!("{}", doc.doc_id);
    for page in &doc.pages {
        println!("  page {:>2}: {}", page.index, page.text);
    }
    for task in &doc.tasks {
        println!("  {:?}: {:?} -> {:?} on {:?}", task.query_kind, task.question, task.gold_answer, task.gold_pages);
    }
    Ok(())
}
