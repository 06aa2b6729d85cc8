//! Paper records, sentences and span annotations.

mod categories;
pub mod conll;
mod iob;
mod tokenize;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use categories::{CategoryMap, TermCategory};
pub use iob::{is_iob_consistent, spans_to_tags, tags_to_spans, DecodedSpans, Tag};
pub use tokenize::{guess_pos, split_sentences, tokenize, POS_TAGS};

/// One paper of the JSON-lines corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default)]
    pub authors: Vec<String>,
    #[serde(default)]
    pub venue: String,
    pub year: i32,
    #[serde(default, alias = "inCitations")]
    pub in_citations: Vec<String>,
    #[serde(default, alias = "outCitations")]
    pub out_citations: Vec<String>,
}

impl PaperRecord {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(Error::InvalidRecord("empty id".into()));
        }
        if !(1900..=2100).contains(&self.year) {
            return Err(Error::InvalidRecord(format!(
                "{}: year {} outside [1900, 2100]",
                self.id, self.year
            )));
        }
        if self.in_citations.iter().chain(&self.out_citations).any(|c| c == &self.id) {
            return Err(Error::InvalidRecord(format!("{}: cites itself", self.id)));
        }
        Ok(())
    }
}

/// Reads a JSON-lines corpus. Blank lines are skipped; the first malformed or
/// invalid record aborts the load with its line number.
pub fn load_papers(path: impl AsRef<Path>) -> Result<Vec<PaperRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PaperRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        record
            .validate()
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::parse(path, line_no, format!("duplicate id `{}`", record.id)));
        }
        records.push(record);
    }
    Ok(records)
}

/// Writes records one per line with canonical field order.
pub fn write_papers<W: Write>(records: &[PaperRecord], mut out: W) -> Result<()> {
    for record in records {
        let line = serde_json::to_string(record)?;
        writeln!(out, "{line}").map_err(|e| Error::io("<papers>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub pos_tags: Vec<String>,
    pub doc_id: String,
    pub index: usize,
}

impl Sentence {
    pub fn new(tokens: Vec<String>, pos_tags: Vec<String>, doc_id: impl Into<String>, index: usize) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidRecord("sentence without tokens".into()));
        }
        if tokens.len() != pos_tags.len() {
            return Err(Error::Shape(format!(
                "{} tokens but {} POS tags",
                tokens.len(),
                pos_tags.len()
            )));
        }
        Ok(Sentence {
            tokens,
            pos_tags,
            doc_id: doc_id.into(),
            index,
        })
    }

    /// Builds a sentence from raw tokens, guessing POS tags.
    pub fn from_tokens(tokens: Vec<String>, doc_id: impl Into<String>, index: usize) -> Result<Self> {
        let pos = guess_pos(&tokens);
        Sentence::new(tokens, pos, doc_id, index)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn surface(&self, start: usize, end: usize) -> String {
        self.tokens[start..end].join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSentence {
    pub sentence: Sentence,
    pub tags: Vec<Tag>,
}

impl LabeledSentence {
    pub fn new(sentence: Sentence, tags: Vec<Tag>) -> Result<Self> {
        if tags.len() != sentence.len() {
            return Err(Error::Shape(format!(
                "{} tokens but {} tags",
                sentence.len(),
                tags.len()
            )));
        }
        Ok(LabeledSentence { sentence, tags })
    }

    pub fn spans(&self) -> Vec<Span> {
        tags_to_spans(&self.tags, &self.sentence.doc_id, self.sentence.index).spans
    }
}

/// A typed term occurrence: tokens `[start, end)` of one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub doc_id: String,
    pub sentence_index: usize,
    pub start: usize,
    pub end: usize,
    pub category: String,
    pub confidence: f64,
}

impl Span {
    pub fn new(doc_id: impl Into<String>, sentence_index: usize, start: usize, end: usize, category: impl Into<String>) -> Self {
        Span {
            doc_id: doc_id.into(),
            sentence_index,
            start,
            end,
            category: category.into(),
            confidence: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    /// Boundary identity, ignoring category and confidence.
    pub fn key(&self) -> (&str, usize, usize, usize) {
        (&self.doc_id, self.sentence_index, self.start, self.end)
    }
}

/// Splits an abstract into POS-tagged sentences.
pub fn sentences_from_text(text: &str, doc_id: &str) -> Vec<Sentence> {
    split_sentences(text)
        .into_iter()
        .enumerate()
        .filter_map(|(i, tokens)| Sentence::from_tokens(tokens, doc_id, i).ok())
        .collect()
}
