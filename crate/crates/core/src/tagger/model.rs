use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{self, FEATURE_TEMPLATE_VERSION};
use super::lattice::{forward_backward, viterbi_decode, ScoreLattice, TransitionMatrix};
use crate::corpus::{tags_to_spans, LabeledSentence, Sentence, Span, Tag};
use crate::error::{Error, Result};
use crate::graph_ssl::graph_feat;

const MODEL_FORMAT: &str = "scigraph-crf";
const MODEL_VERSION: u32 = 1;

/// Ordered IOB tag set: `O` first, then a `B-`/`I-` pair per category.
#[derive(Debug, Clone, PartialEq)]
pub struct TagAlphabet {
    tags: Vec<Tag>,
    index: HashMap<Tag, usize>,
}

impl TagAlphabet {
    pub fn new(tags: Vec<Tag>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, tag) in tags.iter().enumerate() {
            if index.insert(tag.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate tag {tag}")));
            }
        }
        if !index.contains_key(&Tag::Outside) {
            return Err(Error::InvalidArgument("tag alphabet lacks O".into()));
        }
        for tag in &tags {
            if let Some(c) = tag.category() {
                let b = Tag::Begin(c.to_string());
                let i = Tag::Inside(c.to_string());
                if !index.contains_key(&b) || !index.contains_key(&i) {
                    return Err(Error::InvalidArgument(format!("category {c} lacks a B-/I- pair")));
                }
            }
        }
        Ok(TagAlphabet { tags, index })
    }

    pub fn from_categories<S: AsRef<str>>(categories: &[S]) -> Self {
        let mut tags = vec![Tag::Outside];
        for c in categories {
            let c = c.as_ref().to_string();
            if tags.contains(&Tag::Begin(c.clone())) {
                continue;
            }
            tags.push(Tag::Begin(c.clone()));
            tags.push(Tag::Inside(c));
        }
        TagAlphabet::new(tags).expect("well-formed by construction")
    }

    /// Alphabet over the categories seen in `data`, sorted by name.
    pub fn from_data(data: &[LabeledSentence]) -> Self {
        let mut cats: Vec<&str> = data
            .iter()
            .flat_map(|ls| ls.tags.iter().filter_map(Tag::category))
            .collect();
        cats.sort_unstable();
        cats.dedup();
        Self::from_categories(&cats)
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn tag(&self, id: usize) -> &Tag {
        &self.tags[id]
    }

    pub fn id(&self, tag: &Tag) -> Option<usize> {
        self.index.get(tag).copied()
    }

    pub fn encode(&self, tags: &[Tag]) -> Result<Vec<usize>> {
        tags.iter()
            .map(|t| self.id(t).ok_or_else(|| Error::UnknownTag(t.to_string())))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<Tag> {
        ids.iter().map(|&i| self.tags[i].clone()).collect()
    }
}

/// Produces the emission score lattice for a sentence.
pub trait EmissionScorer {
    fn num_tags(&self) -> usize;
    fn emission_scores(&self, sentence: &Sentence) -> ScoreLattice;
}

/// Linear-chain CRF with a linear emission scorer over the templates in
/// [`features`], and optional graph-posterior feature weights `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    alphabet: TagAlphabet,
    feature_names: Vec<String>,
    feature_index: HashMap<String, usize>,
    /// `num_features x m`, row-major.
    weights: Vec<f64>,
    transitions: TransitionMatrix,
    /// `m x m`, row-major: entry (j, i) weighs graph mass on tag j toward tag i.
    graph_weights: Option<Vec<f64>>,
    feature_template_version: String,
}

/// Decoded tags with their marginals and confidence-scored spans.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub ids: Vec<usize>,
    pub tags: Vec<Tag>,
    pub marginals: Vec<Vec<f64>>,
    pub spans: Vec<Span>,
}

impl CrfModel {
    pub fn new(alphabet: TagAlphabet) -> Self {
        let m = alphabet.len();
        CrfModel {
            alphabet,
            feature_names: Vec::new(),
            feature_index: HashMap::new(),
            weights: Vec::new(),
            transitions: TransitionMatrix::zeros(m),
            graph_weights: None,
            feature_template_version: FEATURE_TEMPLATE_VERSION.to_string(),
        }
    }

    pub fn alphabet(&self) -> &TagAlphabet {
        &self.alphabet
    }

    pub fn transitions(&self) -> &TransitionMatrix {
        &self.transitions
    }

    pub fn transitions_mut(&mut self) -> &mut TransitionMatrix {
        &mut self.transitions
    }

    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_template_version(&self) -> &str {
        &self.feature_template_version
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn feature_id(&self, name: &str) -> Option<usize> {
        self.feature_index.get(name).copied()
    }

    /// Registers a feature with zero weights; returns its id.
    pub fn add_feature(&mut self, name: &str) -> usize {
        if let Some(&id) = self.feature_index.get(name) {
            return id;
        }
        let id = self.feature_names.len();
        self.feature_names.push(name.to_string());
        self.feature_index.insert(name.to_string(), id);
        self.weights.extend(std::iter::repeat_n(0.0, self.alphabet.len()));
        id
    }

    pub fn feature_weight(&self, name: &str, tag: usize) -> f64 {
        self.feature_id(name)
            .map_or(0.0, |f| self.weights[f * self.alphabet.len() + tag])
    }

    pub fn set_feature_weight(&mut self, name: &str, tag: usize, weight: f64) {
        let f = self.add_feature(name);
        let m = self.alphabet.len();
        self.weights[f * m + tag] = weight;
    }

    pub fn graph_weights(&self) -> Option<&[f64]> {
        self.graph_weights.as_deref()
    }

    pub fn set_graph_weights(&mut self, weights: Option<Vec<f64>>) -> Result<()> {
        let m = self.alphabet.len();
        if let Some(w) = &weights {
            if w.len() != m * m {
                return Err(Error::Shape(format!("graph weights need {} entries, got {}", m * m, w.len())));
            }
        }
        self.graph_weights = weights;
        Ok(())
    }

    pub fn uses_graph_features(&self) -> bool {
        self.graph_weights.is_some()
    }

    pub(crate) fn set_parameters(&mut self, weights: Vec<f64>, transitions: TransitionMatrix, graph: Option<Vec<f64>>) {
        debug_assert_eq!(weights.len(), self.weights.len());
        self.weights = weights;
        self.transitions = transitions;
        self.graph_weights = graph;
    }

    /// Known feature ids per position; unknown features are skipped.
    pub(crate) fn feature_ids(&self, sentence: &Sentence) -> Vec<Vec<usize>> {
        (0..sentence.len())
            .map(|t| {
                features::extract(sentence, t)
                    .iter()
                    .filter_map(|f| self.feature_id(f))
                    .collect()
            })
            .collect()
    }

    /// Emission scores including the graph term when the model carries
    /// graph weights and `graph_q` is given.
    pub fn scores_with_graph(&self, sentence: &Sentence, graph_q: Option<&[Vec<f64>]>) -> Result<ScoreLattice> {
        let base = self.emission_scores(sentence);
        match (&self.graph_weights, graph_q) {
            (Some(w), Some(q)) => {
                let m = self.alphabet.len();
                let rows: Vec<Vec<f64>> = w.chunks(m).map(<[f64]>::to_vec).collect();
                graph_feat(&base, q, &rows)
            }
            (Some(_), None) => Err(Error::TransductiveOnly),
            (None, _) => Ok(base),
        }
    }

    pub fn predict(&self, sentence: &Sentence, graph_q: Option<&[Vec<f64>]>) -> Result<Prediction> {
        let lattice = self.scores_with_graph(sentence, graph_q)?;
        let ids = viterbi_decode(&lattice, &self.transitions)?;
        let fb = forward_backward(&lattice, &self.transitions, None)?;
        let m = self.alphabet.len();
        let marginals: Vec<Vec<f64>> = fb.unary.chunks(m).map(<[f64]>::to_vec).collect();
        let tags = self.alphabet.decode(&ids);
        let mut spans = tags_to_spans(&tags, &sentence.doc_id, sentence.index).spans;
        for span in &mut spans {
            span.confidence = (span.start..span.end)
                .map(|t| marginals[t][ids[t]])
                .fold(1.0, f64::min);
        }
        Ok(Prediction { ids, tags, marginals, spans })
    }

    pub fn to_json(&self) -> Result<String> {
        let m = self.alphabet.len();
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            feature_template_version: self.feature_template_version.clone(),
            tags: self.alphabet.tags().to_vec(),
            features: self
                .feature_names
                .iter()
                .enumerate()
                .map(|(f, name)| FeatureRow {
                    name: name.clone(),
                    weights: self.weights[f * m..(f + 1) * m].to_vec(),
                })
                .collect(),
            transitions: MatrixRepr {
                rows: m + 2,
                cols: m + 2,
                row_major: self.transitions.row_major().to_vec(),
            },
            graph_weights: self.graph_weights.as_ref().map(|w| MatrixRepr {
                rows: m,
                cols: m,
                row_major: w.clone(),
            }),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model {} v{}", file.format, file.version)));
        }
        let alphabet = TagAlphabet::new(file.tags)?;
        let m = alphabet.len();
        let mut model = CrfModel::new(alphabet);
        model.feature_template_version = file.feature_template_version;
        for row in file.features {
            if row.weights.len() != m {
                return Err(Error::Format(format!("feature {} has {} weights", row.name, row.weights.len())));
            }
            let f = model.add_feature(&row.name);
            model.weights[f * m..(f + 1) * m].copy_from_slice(&row.weights);
        }
        if file.transitions.rows != m + 2 || file.transitions.cols != m + 2 {
            return Err(Error::Format("transition matrix shape".into()));
        }
        model.transitions = TransitionMatrix::from_row_major(m, file.transitions.row_major)?;
        if let Some(g) = file.graph_weights {
            if g.rows != m || g.cols != m {
                return Err(Error::Format("graph weight shape".into()));
            }
            model.set_graph_weights(Some(g.row_major))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl EmissionScorer for CrfModel {
    fn num_tags(&self) -> usize {
        self.alphabet.len()
    }

    fn emission_scores(&self, sentence: &Sentence) -> ScoreLattice {
        let m = self.alphabet.len();
        let mut lattice = ScoreLattice::zeros(sentence.len(), m);
        for (t, ids) in self.feature_ids(sentence).iter().enumerate() {
            for &f in ids {
                for i in 0..m {
                    let v = lattice.get(t, i) + self.weights[f * m + i];
                    lattice.set(t, i, v);
                }
            }
        }
        lattice
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    feature_template_version: String,
    tags: Vec<Tag>,
    features: Vec<FeatureRow>,
    transitions: MatrixRepr,
    graph_weights: Option<MatrixRepr>,
}

#[derive(Serialize, Deserialize)]
struct FeatureRow {
    name: String,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    rows: usize,
    cols: usize,
    row_major: Vec<f64>,
}
