//! Page ranking behind a pluggable interface; the default is lexical TF cosine.

use crate::document::Document;
use crate::text::terms;
use std::collections::BTreeMap;

pub trait Retriever: Send + Sync {
    /// Every page of `doc` with its score, best first. Ties go to the lower index.
    fn rank(&self, query: &str, doc: &Document) -> Vec<(usize, f64)>;
}

/// Cosine similarity between term-frequency vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfCosine;

fn term_counts(text: &str) -> BTreeMap<String, f64> {
    let mut counts = BTreeMap::new();
    for t in terms(text) {
        *counts.entry(t).or_insert(0.0) += 1.0;
    }
    counts
}

fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum();
    let aa: f64 = a.values().map(|x| x * x).sum();
    let bb: f64 = b.values().map(|x| x * x).sum();
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        dot / (aa * bb).sqrt()
    }
}

impl Retriever for TfCosine {
    fn rank(&self, query: &str, doc: &Document) -> Vec<(usize, f64)> {
        let q = term_counts(query);
        if q.is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<(usize, f64)> = doc
            .pages()
            .iter()
            .map(|p| (p.index, cosine(&q, &term_counts(&p.text))))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored
    }
}

/// Convenience wrapper over any retriever.
pub fn rank(retriever: &dyn Retriever, query: &str, doc: &Document) -> Vec<(usize, f64)> {
    retriever.rank(query, doc)
}
