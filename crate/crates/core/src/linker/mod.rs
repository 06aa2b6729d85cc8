//! Rule-based entity linking: surface variants sharing a normalization key
//! or related by a parenthesized acronym are merged into one entity.

mod normalize;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, Span, TermCategory};
use crate::error::{Error, Result};
use crate::tagger::Prf;

pub use normalize::{detect_acronym, is_acronym_of, normalize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub surface: String,
    pub span: Span,
    pub doc_id: String,
    pub category: TermCategory,
}

impl Mention {
    /// Mention for a span of `sentence`; the span category must name a
    /// known term category.
    pub fn from_span(sentence: &Sentence, span: &Span) -> Result<Self> {
        if span.start >= span.end || span.end > sentence.len() {
            return Err(Error::InvalidArgument(format!(
                "span {}..{} outside sentence of {} tokens",
                span.start,
                span.end,
                sentence.len()
            )));
        }
        let category = span.category.parse::<TermCategory>()?;
        Ok(Mention {
            surface: sentence.surface(span.start, span.end),
            span: span.clone(),
            doc_id: sentence.doc_id.clone(),
            category,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCluster {
    pub canonical_id: String,
    pub canonical_form: String,
    pub variants: BTreeSet<String>,
    pub category: TermCategory,
    pub mention_count: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut x = x;
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller index wins so the result does not depend on call order
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.parent[hi] = lo;
        }
    }
}

/// Identifier for a canonical form: lowercased, words joined by `_`.
pub fn canonical_id(form: &str) -> String {
    form.to_lowercase()
        .split(|c: char| c.is_whitespace() || c == '-' || c == '_')
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("_")
}

/// Clusters mentions by normalization key, merging keys connected by
/// `(long form, acronym)` pairs. The canonical form is the longest variant,
/// then the most frequent, then the lexicographically smallest. Category is
/// the majority over mentions, ties going to Method. Clusters are sorted by
/// canonical id.
pub fn link(mentions: &[Mention], acronym_pairs: &[(String, String)]) -> Vec<EntityCluster> {
    let mut key_ids: BTreeMap<String, usize> = BTreeMap::new();
    for m in mentions {
        let next = key_ids.len();
        key_ids.entry(normalize(&m.surface)).or_insert(next);
    }
    let mut uf = UnionFind::new(key_ids.len());
    for (long, short) in acronym_pairs {
        if let (Some(&a), Some(&b)) = (key_ids.get(&normalize(long)), key_ids.get(&normalize(short))) {
            uf.union(a, b);
        }
    }

    #[derive(Default)]
    struct Acc {
        surfaces: BTreeMap<String, usize>,
        task: usize,
        method: usize,
        mentions: usize,
    }
    let mut groups: BTreeMap<usize, Acc> = BTreeMap::new();
    for m in mentions {
        let root = uf.find(key_ids[&normalize(&m.surface)]);
        let acc = groups.entry(root).or_default();
        *acc.surfaces.entry(m.surface.clone()).or_default() += 1;
        match m.category {
            TermCategory::Task => acc.task += 1,
            TermCategory::Method => acc.method += 1,
        }
        acc.mentions += 1;
    }
    let mut clusters: Vec<EntityCluster> = groups
        .into_values()
        .map(|acc| {
            let canonical_form = acc
                .surfaces
                .iter()
                .min_by(|(a, ca), (b, cb)| {
                    b.chars().count().cmp(&a.chars().count()).then(cb.cmp(ca)).then(a.cmp(b))
                })
                .map(|(s, _)| s.clone())
                .expect("every group has a mention");
            EntityCluster {
                canonical_id: canonical_id(&canonical_form),
                canonical_form,
                variants: acc.surfaces.into_keys().collect(),
                category: if acc.task > acc.method { TermCategory::Task } else { TermCategory::Method },
                mention_count: acc.mentions,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.canonical_id.cmp(&b.canonical_id));
    clusters
}

/// Builds mentions from tagged sentences, detects acronym pairs in each and
/// links everything. Spans whose category is not a term category are skipped.
pub fn link_sentences(tagged: &[(Sentence, Vec<Span>)]) -> Vec<EntityCluster> {
    let mut mentions = Vec::new();
    let mut pairs = Vec::new();
    for (sentence, spans) in tagged {
        pairs.extend(detect_acronym(sentence, spans));
        mentions.extend(spans.iter().filter_map(|s| Mention::from_span(sentence, s).ok()));
    }
    link(&mentions, &pairs)
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Pairwise precision/recall/F1: a surface pair is predicted synonymous iff
/// both surfaces are variants of the same cluster.
pub fn evaluate_linking(clusters: &[EntityCluster], gold_pairs: &[(String, String)]) -> Prf {
    let mut predicted = BTreeSet::new();
    for c in clusters {
        let vs: Vec<&String> = c.variants.iter().collect();
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                predicted.insert(unordered(vs[i], vs[j]));
            }
        }
    }
    let gold: BTreeSet<(String, String)> = gold_pairs
        .iter()
        .filter(|(a, b)| a != b)
        .map(|(a, b)| unordered(a, b))
        .collect();
    let tp = predicted.intersection(&gold).count();
    Prf::from_counts(tp, predicted.len(), gold.len())
}

/// `canonical_id  canonical_form  category  variant`, one row per variant.
pub fn write_cluster_table<W: Write>(clusters: &[EntityCluster], mut out: W) -> Result<()> {
    let io = |e| Error::io("<cluster table>", e);
    for c in clusters {
        for v in &c.variants {
            writeln!(out, "{}\t{}\t{}\t{}", c.canonical_id, c.canonical_form, c.category, v).map_err(io)?;
        }
    }
    Ok(())
}

/// Reads a cluster table. Mention counts are not part of the table and are
/// set to the number of variants.
pub fn read_cluster_table(path: impl AsRef<Path>) -> Result<Vec<EntityCluster>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut by_id: BTreeMap<String, EntityCluster> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, i + 1, format!("expected 4 columns, found {}", fields.len())));
        }
        let category = fields[2].parse::<TermCategory>().map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        let entry = by_id.entry(fields[0].to_string()).or_insert_with(|| EntityCluster {
            canonical_id: fields[0].to_string(),
            canonical_form: fields[1].to_string(),
            variants: BTreeSet::new(),
            category,
            mention_count: 0,
        });
        if entry.canonical_form != fields[1] || entry.category != category {
            return Err(Error::parse(path, i + 1, format!("inconsistent rows for cluster {}", fields[0])));
        }
        if entry.variants.insert(fields[3].to_string()) {
            entry.mention_count += 1;
        }
    }
    Ok(by_id.into_values().collect())
}

/// Surface lookup over linked clusters by normalization key.
#[derive(Debug, Clone, Default)]
pub struct ClusterIndex {
    by_key: HashMap<String, usize>,
    clusters: Vec<EntityCluster>,
}

impl ClusterIndex {
    pub fn new(clusters: Vec<EntityCluster>) -> Self {
        let mut by_key = HashMap::new();
        for (i, c) in clusters.iter().enumerate() {
            by_key.entry(normalize(&c.canonical_id)).or_insert(i);
            for v in &c.variants {
                by_key.entry(normalize(v)).or_insert(i);
            }
        }
        ClusterIndex { by_key, clusters }
    }

    pub fn lookup(&self, surface: &str) -> Option<&EntityCluster> {
        self.by_key.get(&normalize(surface)).map(|&i| &self.clusters[i])
    }

    pub fn clusters(&self) -> &[EntityCluster] {
        &self.clusters
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mention(surface: &str, doc: &str, category: TermCategory) -> Mention {
        let tokens: Vec<String> = surface.split(' ').map(String::from).collect();
        let n = tokens.len();
        let s = Sentence::from_tokens(tokens, doc, 0).unwrap();
        let span = Span::new(doc, 0, 0, n, category.to_string());
        Mention::from_span(&s, &span).unwrap()
    }

    #[test]
    fn acronym_merges_three_variants() {
        let ms = vec![
            mention("NER", "a", TermCategory::Task),
            mention("Named Entity Recognition", "b", TermCategory::Task),
            mention("named entity recognition", "c", TermCategory::Task),
        ];
        let pairs = vec![("Named Entity Recognition".to_string(), "NER".to_string())];
        let clusters = link(&ms, &pairs);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].canonical_form, "Named Entity Recognition");
        assert_eq!(clusters[0].canonical_id, "named_entity_recognition");
        assert_eq!(clusters[0].mention_count, 3);
        assert!(clusters[0].variants.contains(&clusters[0].canonical_form));
    }

    #[test]
    fn unrelated_terms_stay_apart() {
        let ms = vec![mention("HMM", "a", TermCategory::Method), mention("CRF", "a", TermCategory::Method)];
        assert_eq!(link(&ms, &[]).len(), 2);
    }

    #[test]
    fn same_key_across_documents() {
        let ms = vec![mention("CRF", "a", TermCategory::Method), mention("crf", "b", TermCategory::Method)];
        let clusters = link(&ms, &[]);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].mention_count, 2);
    }

    #[test]
    fn majority_category_with_method_tie() {
        let ms = vec![mention("parsing", "a", TermCategory::Task), mention("parsing", "b", TermCategory::Method)];
        assert_eq!(link(&ms, &[])[0].category, TermCategory::Method);
        let ms = vec![
            mention("parsing", "a", TermCategory::Task),
            mention("parsing", "b", TermCategory::Task),
            mention("parsing", "c", TermCategory::Method),
        ];
        assert_eq!(link(&ms, &[])[0].category, TermCategory::Task);
    }

    #[test]
    fn canonical_prefers_frequent_among_longest() {
        let ms = vec![
            mention("neural network", "a", TermCategory::Method),
            mention("Neural Network", "b", TermCategory::Method),
            mention("Neural Network", "c", TermCategory::Method),
            mention("neural networks", "d", TermCategory::Method),
        ];
        let c = link(&ms, &[]);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].canonical_form, "neural networks");
    }

    #[test]
    fn pairwise_scores() {
        let cluster = |vs: &[&str]| EntityCluster {
            canonical_id: vs[0].into(),
            canonical_form: vs[0].into(),
            variants: vs.iter().map(|s| s.to_string()).collect(),
            category: TermCategory::Method,
            mention_count: vs.len(),
        };
        let gold = vec![("a".to_string(), "b".to_string()), ("c".to_string(), "d".to_string())];
        let perfect = evaluate_linking(&[cluster(&["a", "b"]), cluster(&["c", "d"])], &gold);
        assert_eq!(perfect.f1, 1.0);
        let half = evaluate_linking(&[cluster(&["a", "b"]), cluster(&["c", "e"])], &gold);
        assert_eq!((half.precision, half.recall, half.f1), (0.5, 0.5, 0.5));
        let none = evaluate_linking(&[cluster(&["a"])], &gold);
        assert_eq!((none.precision, none.recall), (0.0, 0.0));
    }

    #[test]
    fn link_is_idempotent() {
        let ms = vec![
            mention("CRF", "a", TermCategory::Method),
            mention("conditional random fields", "a", TermCategory::Method),
            mention("HMM", "b", TermCategory::Method),
        ];
        let pairs = vec![("conditional random fields".to_string(), "CRF".to_string())];
        let first = link(&ms, &pairs);
        let second = link(&ms, &pairs);
        assert_eq!(first, second);
    }

    #[test]
    fn table_round_trip_and_lookup() {
        let ms = vec![mention("CRF", "a", TermCategory::Method), mention("conditional random fields", "a", TermCategory::Method)];
        let clusters = link(&ms, &[("conditional random fields".into(), "CRF".into())]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        let mut buf = Vec::new();
        write_cluster_table(&clusters, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 2);
        std::fs::write(&path, buf).unwrap();
        let back = read_cluster_table(&path).unwrap();
        assert_eq!(back[0].variants, clusters[0].variants);
        let index = ClusterIndex::new(back);
        assert_eq!(index.lookup("crfs").unwrap().canonical_form, "conditional random fields");
        assert!(index.lookup("hmm").is_none());
    }
}
