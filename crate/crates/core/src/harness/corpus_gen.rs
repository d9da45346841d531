//! Seeded synthetic corpora of filler pages with planted key/value facts.
//!
//! A general query asks for a key that occurs on exactly one page. A
//! page-referenced query names a page whose key also appears, with other
//! values, on several decoy pages, so only the page index disambiguates it.

use super::config::parse_flat;
use crate::document::{CorpusRecord, PageRecord, QueryKind, Task};
use crate::error::{Error, Result};
use crate::policy::vocab::{FILLER_WORDS, KEY_WORDS, VALUE_WORDS};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub n_documents: usize,
    pub pages_per_document: usize,
    pub gq_fraction: f64,
    pub pq_fraction: f64,
    pub facts_per_document: usize,
    /// Pages sharing the key of a page-referenced fact, the gold page included.
    pub key_repeats: usize,
    pub filler_words_per_page: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_documents: 50,
            pages_per_document: 12,
            gq_fraction: 0.5,
            pq_fraction: 0.5,
            facts_per_document: 2,
            key_repeats: 4,
            filler_words_per_page: 6,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let frac_ok = |f: f64| (0.0..=1.0).contains(&f);
        if !frac_ok(self.gq_fraction) || !frac_ok(self.pq_fraction) || (self.gq_fraction + self.pq_fraction - 1.0).abs() > 1e-9
        {
            return Err(Error::config(format!(
                "gq_fraction ({}) and pq_fraction ({}) must be in [0, 1] and sum to 1",
                self.gq_fraction, self.pq_fraction
            )));
        }
        if self.pages_per_document < 10 {
            return Err(Error::config("documents need at least 10 pages"));
        }
        if self.n_documents == 0 || self.facts_per_document == 0 {
            return Err(Error::config("n_documents and facts_per_document must be at least 1"));
        }
        if self.facts_per_document > KEY_WORDS.len() {
            return Err(Error::config(format!("at most {} facts per document", KEY_WORDS.len())));
        }
        if self.key_repeats == 0 || self.key_repeats > VALUE_WORDS.len() {
            return Err(Error::config(format!("key_repeats must lie in 1..={}", VALUE_WORDS.len())));
        }
        let worst_case = self.facts_per_document * self.key_repeats.max(1);
        if worst_case > self.pages_per_document {
            return Err(Error::config(format!(
                "{} facts with {} repeats need {worst_case} fact pages but documents have {}",
                self.facts_per_document, self.key_repeats, self.pages_per_document
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let spec: Self = parse_flat(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Deterministic corpus; task kinds are spread over the whole corpus so the
/// page-referenced share is exact up to rounding.
pub fn generate_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<CorpusRecord>> {
    spec.validate()?;
    let mut records = Vec::with_capacity(spec.n_documents);
    let mut task_index = 0usize;
    for d in 0..spec.n_documents {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (d as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut pages: Vec<Vec<String>> = (0..spec.pages_per_document)
            .map(|_| {
                (0..spec.filler_words_per_page)
                    .map(|_| FILLER_WORDS.choose(&mut rng).expect("fillers").to_string())
                    .collect()
            })
            .collect();
        let mut free_pages: Vec<usize> = (0..spec.pages_per_document).collect();
        free_pages.shuffle(&mut rng);
        let mut keys: Vec<&str> = KEY_WORDS.to_vec();
        keys.shuffle(&mut rng);
        let mut tasks = Vec::new();
        for key in keys.into_iter().take(spec.facts_per_document) {
            let before = (task_index as f64 * spec.pq_fraction).floor();
            let after = ((task_index + 1) as f64 * spec.pq_fraction).floor();
            let kind = if after > before { QueryKind::PageReferenced } else { QueryKind::General };
            task_index += 1;
            let copies = match kind {
                QueryKind::General => 1,
                QueryKind::PageReferenced => spec.key_repeats,
            };
            let mut values: Vec<&str> = VALUE_WORDS.to_vec();
            values.shuffle(&mut rng);
            let planted: Vec<(usize, &str)> = (0..copies)
                .map(|i| (free_pages.pop().expect("capacity checked by validate"), values[i]))
                .collect();
            for &(p, value) in &planted {
                let at = rng.gen_range(0..=pages[p].len());
                pages[p].splice(at..at, [key.to_string(), value.to_string()]);
            }
            let (gold_page, answer) = planted[rng.gen_range(0..planted.len())];
            let question = match kind {
                QueryKind::General => format!("what is the {key}"),
                QueryKind::PageReferenced => format!("on page {} what is the {key}", gold_page + 1),
            };
            tasks.push(Task {
                question,
                gold_answer: answer.to_string(),
                gold_pages: [gold_page + 1].into(),
                query_kind: kind,
            });
        }
        records.push(CorpusRecord {
            doc_id: format!("doc-{d:04}"),
            pages: pages
                .into_iter()
                .enumerate()
                .map(|(i, words)| PageRecord { index: i + 1, text: words.join(" ") })
                .collect(),
            tasks,
        });
    }
    Ok(records)
}

/// Splits records into `(train, eval)`, holding out the trailing documents.
pub fn split_corpus(records: &[CorpusRecord], eval_fraction: f64) -> (&[CorpusRecord], &[CorpusRecord]) {
    let n_eval = ((records.len() as f64) * eval_fraction).round() as usize;
    let n_eval = n_eval.min(records.len().saturating_sub(1));
    records.split_at(records.len() - n_eval)
}
