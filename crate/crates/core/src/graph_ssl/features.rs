use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, POS_TAGS};
use crate::error::{Error, Result};

/// Word vectors, one `token v1 .. vd` line per entry. An optional first line
/// of two integers (`count dim`) is treated as a header.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable { dim, vectors: HashMap::new() }
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Shape(format!("embedding of length {} in a {}-d table", vector.len(), self.dim)));
        }
        self.vectors.insert(token.into(), vector);
        Ok(())
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (i, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
                continue;
            }
            let values = fields[1..]
                .iter()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
            let t = table.get_or_insert_with(|| EmbeddingTable::new(values.len()));
            if values.len() != t.dim || t.dim == 0 {
                return Err(Error::parse(origin, i + 1, format!("expected {} values, found {}", t.dim, values.len())));
            }
            t.vectors.insert(fields[0].to_string(), values);
        }
        table.ok_or_else(|| Error::parse(origin, 1, "empty embedding table"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Exact match first, then lowercase.
    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors
            .get(token)
            .or_else(|| self.vectors.get(&token.to_lowercase()))
            .map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenRef {
    pub doc_id: String,
    pub sentence_index: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenFeatureVector {
    pub values: Vec<f64>,
    pub token_ref: TokenRef,
}

/// Length of a token feature vector for word vectors of dimension `d`.
pub fn feature_dim(d: usize) -> usize {
    5 * d + d + POS_TAGS.len() + 4
}

fn capitalization_class(token: &str) -> Option<usize> {
    let letters: Vec<char> = token.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.is_empty() {
        None
    } else if letters.iter().all(|c| c.is_lowercase()) {
        Some(0)
    } else if letters.iter().all(|c| c.is_uppercase()) {
        Some(2)
    } else if letters[0].is_uppercase() && letters[1..].iter().all(|c| c.is_lowercase()) {
        Some(1)
    } else {
        Some(3)
    }
}

/// Nearest other token tagged as a verb; ties go left.
fn closest_verb(sentence: &Sentence, position: usize) -> Option<usize> {
    (1..sentence.len()).find_map(|dist| {
        let left = position.checked_sub(dist).filter(|&p| sentence.pos_tags[p].starts_with("VB"));
        let right = Some(position + dist).filter(|&p| p < sentence.len() && sentence.pos_tags[p].starts_with("VB"));
        left.or(right)
    })
}

/// `[5 context embeddings | closest-verb embedding | POS one-hot | capitalization one-hot]`.
/// Out-of-vocabulary tokens, padding beyond the sentence and a missing verb
/// all contribute zero blocks.
pub fn token_features(sentence: &Sentence, position: usize, embeddings: &EmbeddingTable) -> TokenFeatureVector {
    let d = embeddings.dim();
    let mut values = vec![0.0; feature_dim(d)];
    for (slot, offset) in (-2isize..=2).enumerate() {
        let idx = position as isize + offset;
        if idx >= 0 && (idx as usize) < sentence.len() {
            if let Some(v) = embeddings.get(&sentence.tokens[idx as usize]) {
                values[slot * d..(slot + 1) * d].copy_from_slice(v);
            }
        }
    }
    if let Some(v) = closest_verb(sentence, position).and_then(|p| embeddings.get(&sentence.tokens[p])) {
        values[5 * d..6 * d].copy_from_slice(v);
    }
    if let Some(p) = POS_TAGS.iter().position(|&t| t == sentence.pos_tags[position]) {
        values[6 * d + p] = 1.0;
    }
    if let Some(c) = capitalization_class(&sentence.tokens[position]) {
        values[6 * d + POS_TAGS.len() + c] = 1.0;
    }
    TokenFeatureVector {
        values,
        token_ref: TokenRef {
            doc_id: sentence.doc_id.clone(),
            sentence_index: sentence.index,
            position,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(d: usize) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(d);
        for (k, w) in ["we", "use", "crf", "models"].iter().enumerate() {
            t.insert(*w, vec![k as f64 + 1.0; d]).unwrap();
        }
        t
    }

    fn sentence(tokens: &[&str], pos: &[&str]) -> Sentence {
        Sentence::new(
            tokens.iter().map(|s| s.to_string()).collect(),
            pos.iter().map(|s| s.to_string()).collect(),
            "d",
            0,
        )
        .unwrap()
    }

    #[test]
    fn dimension_for_fifty() {
        assert_eq!(feature_dim(50), 347);
        let s = sentence(&["We", "use", "CRF"], &["PRP", "VBP", "NNP"]);
        assert_eq!(token_features(&s, 1, &table(50)).values.len(), 347);
    }

    #[test]
    fn layout_blocks() {
        let d = 2;
        let s = sentence(&["We", "use", "CRF"], &["PRP", "VBP", "NNP"]);
        let f = token_features(&s, 0, &table(d)).values;
        // positions -2, -1 are padding
        assert!(f[..2 * d].iter().all(|&v| v == 0.0));
        assert_eq!(&f[2 * d..3 * d], &[1.0, 1.0]); // "We" via lowercase fallback
        assert_eq!(&f[3 * d..4 * d], &[2.0, 2.0]);
        assert_eq!(&f[4 * d..5 * d], &[3.0, 3.0]);
        assert_eq!(&f[5 * d..6 * d], &[2.0, 2.0]); // closest verb "use"
        let pos = &f[6 * d..6 * d + 43];
        assert_eq!(pos.iter().sum::<f64>(), 1.0);
        assert_eq!(pos[POS_TAGS.iter().position(|&t| t == "PRP").unwrap()], 1.0);
        let cap = &f[6 * d + 43..];
        assert_eq!(cap, &[0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn no_verb_gives_zero_block() {
        let d = 3;
        let s = sentence(&["CRF", "models", "("], &["NNP", "NNS", "("]);
        let f = token_features(&s, 2, &table(d)).values;
        assert!(f[5 * d..6 * d].iter().all(|&v| v == 0.0));
        // "(" has no capitalization class
        assert!(f[6 * d + 43..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parse_table() {
        let t = EmbeddingTable::parse("2 3\na 1 2 3\nb 4 5 6\n", Path::new("x")).unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.get("b"), Some(&[4.0, 5.0, 6.0][..]));
        assert!(t.get("zzz").is_none());
        assert!(EmbeddingTable::parse("a 1 2\nb 1\n", Path::new("x")).is_err());
    }
}
