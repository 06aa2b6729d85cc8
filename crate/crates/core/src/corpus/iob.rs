use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Span;
use crate::error::{Error, Result};

/// An IOB tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn category(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(c) | Tag::Inside(c) => Some(c),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(c) => write!(f, "B-{c}"),
            Tag::Inside(c) => write!(f, "I-{c}"),
        }
    }
}

impl FromStr for Tag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" => Ok(Tag::Outside),
            _ => match s.split_once('-') {
                Some(("B", c)) if !c.is_empty() => Ok(Tag::Begin(c.to_string())),
                Some(("I", c)) if !c.is_empty() => Ok(Tag::Inside(c.to_string())),
                _ => Err(Error::UnknownTag(s.to_string())),
            },
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// True when no I-label follows O or a label of another category.
pub fn is_iob_consistent(tags: &[Tag]) -> bool {
    let mut open: Option<&str> = None;
    for tag in tags {
        match tag {
            Tag::Outside => open = None,
            Tag::Begin(c) => open = Some(c),
            Tag::Inside(c) => {
                if open != Some(c.as_str()) {
                    return false;
                }
            }
        }
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedSpans {
    pub spans: Vec<Span>,
    /// Stray I-labels promoted to B.
    pub repairs: usize,
}

/// Decodes maximal spans. A stray I-label (after O or after another
/// category) is promoted to B and counted as a repair.
pub fn tags_to_spans(tags: &[Tag], doc_id: &str, sentence_index: usize) -> DecodedSpans {
    let mut spans = Vec::new();
    let mut repairs = 0;
    let mut open: Option<(usize, &str)> = None;
    let close = |open: &mut Option<(usize, &str)>, end: usize, spans: &mut Vec<Span>| {
        if let Some((start, cat)) = open.take() {
            spans.push(Span::new(doc_id, sentence_index, start, end, cat));
        }
    };
    for (t, tag) in tags.iter().enumerate() {
        match tag {
            Tag::Outside => close(&mut open, t, &mut spans),
            Tag::Begin(c) => {
                close(&mut open, t, &mut spans);
                open = Some((t, c));
            }
            Tag::Inside(c) => match open {
                Some((_, cat)) if cat == c => {}
                _ => {
                    repairs += 1;
                    close(&mut open, t, &mut spans);
                    open = Some((t, c));
                }
            },
        }
    }
    close(&mut open, tags.len(), &mut spans);
    DecodedSpans { spans, repairs }
}

/// Encodes non-overlapping spans over a sentence of `length` tokens.
pub fn spans_to_tags(spans: &[Span], length: usize) -> Result<Vec<Tag>> {
    let mut tags = vec![Tag::Outside; length];
    let mut taken = vec![false; length];
    for span in spans {
        if span.start >= span.end || span.end > length {
            return Err(Error::InvalidArgument(format!(
                "span [{}, {}) outside sentence of length {length}",
                span.start, span.end
            )));
        }
        for t in span.start..span.end {
            if taken[t] {
                return Err(Error::OverlappingSpans(t));
            }
            taken[t] = true;
            tags[t] = if t == span.start {
                Tag::Begin(span.category.clone())
            } else {
                Tag::Inside(span.category.clone())
            };
        }
    }
    Ok(tags)
}
