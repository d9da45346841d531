//! Documents, pages and tasks, plus the JSON-lines corpus format.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::Path;

/// Token id in the micro-vocabulary (see [`crate::policy::Vocab`]).
pub type TokenId = u32;

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    /// 1-based position in the document.
    pub index: usize,
    pub text: String,
    /// Stand-in for the page's visual tokens.
    pub observation_tokens: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pages: Vec<Page>,
}

impl Document {
    /// Pages must be numbered `1..=n` in order, `n >= 1`, each with at least one
    /// observation token.
    pub fn new(doc_id: impl Into<String>, pages: Vec<Page>) -> Result<Self> {
        let doc_id = doc_id.into();
        if pages.is_empty() {
            return Err(Error::config(format!("document {doc_id} has no pages")));
        }
        for (i, page) in pages.iter().enumerate() {
            if page.index != i + 1 {
                return Err(Error::config(format!(
                    "document {doc_id}: page at position {} has index {}",
                    i + 1,
                    page.index
                )));
            }
            if page.observation_tokens.is_empty() {
                return Err(Error::config(format!(
                    "document {doc_id}: page {} has no observation tokens",
                    page.index
                )));
            }
        }
        Ok(Self { doc_id, pages })
    }

    pub fn pages(&self) -> &[Page] {
        &self.pages
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    /// Page by 1-based index.
    pub fn page(&self, index: usize) -> Option<&Page> {
        index.checked_sub(1).and_then(|i| self.pages.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryKind {
    General,
    PageReferenced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub question: String,
    pub gold_answer: String,
    pub gold_pages: BTreeSet<usize>,
    pub query_kind: QueryKind,
}

impl Task {
    pub fn validate(&self, doc: &Document) -> Result<()> {
        if self.gold_pages.is_empty() {
            return Err(Error::config("task has no gold pages"));
        }
        if self.gold_answer.trim().is_empty() {
            return Err(Error::config("task has an empty gold answer"));
        }
        if let Some(bad) = self.gold_pages.iter().find(|&&p| p == 0 || p > doc.len()) {
            return Err(Error::config(format!(
                "gold page {bad} outside 1..={} of document {}",
                doc.len(),
                doc.doc_id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub index: usize,
    pub text: String,
}

/// One line of the corpus file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub pages: Vec<PageRecord>,
    pub tasks: Vec<Task>,
}

impl CorpusRecord {
    /// Builds the document, mapping each page's text to observation tokens.
    pub fn to_document(&self, observe: impl Fn(&str) -> Vec<TokenId>) -> Result<Document> {
        let pages = self
            .pages
            .iter()
            .map(|p| Page {
                index: p.index,
                text: p.text.clone(),
                observation_tokens: observe(&p.text),
            })
            .collect();
        let doc = Document::new(self.doc_id.clone(), pages)?;
        for task in &self.tasks {
            task.validate(&doc)?;
        }
        Ok(doc)
    }
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusRecord>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| {
            Error::config(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
