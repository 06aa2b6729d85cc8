//! CoNLL-style labeled files: `token<TAB>pos<TAB>iob-tag` per line, a blank
//! line between sentences and `-DOCSTART- <id>` between documents.

use std::fmt::Write as _;
use std::path::Path;

use super::{LabeledSentence, Sentence, Tag};
use crate::error::{Error, Result};

const DOCSTART: &str = "-DOCSTART-";

/// Parses labeled sentences. Lines with only two columns are accepted and get
/// `O` tags, so unlabeled text can share the format.
pub fn parse_conll(text: &str, origin: &Path) -> Result<Vec<LabeledSentence>> {
    let mut out = Vec::new();
    let mut doc_id = String::from("doc");
    let mut index = 0usize;
    let mut tokens = Vec::new();
    let mut pos = Vec::new();
    let mut tags = Vec::new();

    let mut flush = |tokens: &mut Vec<String>, pos: &mut Vec<String>, tags: &mut Vec<Tag>, doc_id: &str, index: &mut usize| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let sentence = Sentence::new(std::mem::take(tokens), std::mem::take(pos), doc_id, *index)?;
        out.push(LabeledSentence::new(sentence, std::mem::take(tags))?);
        *index += 1;
        Ok(())
    };

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut tokens, &mut pos, &mut tags, &doc_id, &mut index)?;
            continue;
        }
        if let Some(rest) = line.strip_prefix(DOCSTART) {
            flush(&mut tokens, &mut pos, &mut tags, &doc_id, &mut index)?;
            doc_id = rest.trim().to_string();
            if doc_id.is_empty() {
                return Err(Error::parse(origin, line_no, "-DOCSTART- without document id"));
            }
            index = 0;
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let tag = match cols.len() {
            2 => Tag::Outside,
            3 => cols[2]
                .parse()
                .map_err(|e: Error| Error::parse(origin, line_no, e.to_string()))?,
            n => {
                return Err(Error::parse(origin, line_no, format!("expected 2 or 3 tab-separated columns, found {n}")))
            }
        };
        tokens.push(cols[0].to_string());
        pos.push(cols[1].to_string());
        tags.push(tag);
    }
    flush(&mut tokens, &mut pos, &mut tags, &doc_id, &mut index)?;
    Ok(out)
}

pub fn read_conll(path: impl AsRef<Path>) -> Result<Vec<LabeledSentence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_conll(&text, path)
}

pub fn format_conll(sentences: &[LabeledSentence]) -> String {
    let mut out = String::new();
    let mut current_doc: Option<&str> = None;
    for ls in sentences {
        let s = &ls.sentence;
        if current_doc != Some(s.doc_id.as_str()) {
            let _ = writeln!(out, "{DOCSTART} {}", s.doc_id);
            out.push('\n');
            current_doc = Some(&s.doc_id);
        }
        for ((tok, pos), tag) in s.tokens.iter().zip(&s.pos_tags).zip(&ls.tags) {
            let _ = writeln!(out, "{tok}\t{pos}\t{tag}");
        }
        out.push('\n');
    }
    out
}

pub fn write_conll(path: impl AsRef<Path>, sentences: &[LabeledSentence]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_conll(sentences)).map_err(|e| Error::io(path, e))
}
