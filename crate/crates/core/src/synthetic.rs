//! Seeded synthetic data: a tagging corpus drawn from a hidden template
//! grammar, a graph planted from a hidden bilinear model, and a graph whose
//! held-out edges follow a two-step composition rule.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{LabeledSentence, Sentence, Tag, TermCategory};
use crate::error::Result;
use crate::graph_ssl::EmbeddingTable;
use crate::kg::{Entity, KnowledgeGraph, TripleKey, METHOD_METHOD, TASK_METHOD, TASK_TASK};

#[derive(Debug, Clone, PartialEq)]
pub struct TaggingCorpusConfig {
    pub vocabulary: usize,
    pub labeled: usize,
    pub unlabeled: usize,
    pub dev: usize,
    pub embedding_dim: usize,
    /// Standard deviation of word vectors around their class centroid.
    pub embedding_noise: f64,
    /// Share of Task and Method words that occur only in dev sentences.
    pub novel_fraction: f64,
    /// Probability that a term word in a dev sentence is a dev-only word.
    pub novel_rate: f64,
    pub seed: u64,
}

impl Default for TaggingCorpusConfig {
    fn default() -> Self {
        TaggingCorpusConfig {
            vocabulary: 200,
            labeled: 40,
            unlabeled: 400,
            dev: 200,
            embedding_dim: 16,
            embedding_noise: 0.6,
            novel_fraction: 0.2,
            novel_rate: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaggingCorpus {
    pub labeled: Vec<LabeledSentence>,
    pub unlabeled: Vec<Sentence>,
    pub dev: Vec<LabeledSentence>,
    pub embeddings: EmbeddingTable,
}

const FUNCTION_WORDS: [(&str, &str); 23] = [
    ("we", "PRP"),
    ("our", "PRP$"),
    ("the", "DT"),
    ("a", "DT"),
    ("this", "DT"),
    ("for", "IN"),
    ("on", "IN"),
    ("with", "IN"),
    ("of", "IN"),
    ("in", "IN"),
    ("to", "TO"),
    ("propose", "VBP"),
    ("use", "VBP"),
    ("apply", "VBP"),
    ("study", "VBP"),
    ("improve", "VB"),
    ("improves", "VBZ"),
    ("outperforms", "VBZ"),
    ("is", "VBZ"),
    ("studied", "VBN"),
    ("based", "VBN"),
    ("popular", "JJ"),
    (".", "."),
];

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ren", "tas", "vo", "zu", "pel", "dar", "ni", "sor", "gu", "fe", "tan", "bri", "quo", "lem",
    "sha", "ox", "ti", "ward", "mun", "el", "rak",
];

fn coin_word(rng: &mut impl Rng, taken: &mut BTreeSet<String>) -> String {
    loop {
        let n = rng.random_range(2..=3);
        let w: String = (0..n).map(|_| SYLLABLES[rng.random_range(0..SYLLABLES.len())]).collect();
        if taken.insert(w.clone()) {
            return w;
        }
    }
}

/// Zipf-like draw of an index below `n`.
fn zipf(rng: &mut impl Rng, n: usize) -> usize {
    let total: f64 = (1..=n).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for r in 1..=n {
        u -= 1.0 / r as f64;
        if u <= 0.0 {
            return r - 1;
        }
    }
    n - 1
}

struct Grammar {
    novel_rate: f64,
    task: Vec<String>,
    method: Vec<String>,
    novel_task: Vec<String>,
    novel_method: Vec<String>,
    ambiguous: Vec<String>,
    filler: Vec<String>,
}

enum Slot {
    Word(&'static str),
    Task,
    Method,
    /// Task or Method with equal probability; the context does not tell.
    Either,
    Filler,
}

const TEMPLATES: [&[Slot]; 10] = {
    use Slot::*;
    [
        &[Word("we"), Word("propose"), Method, Word("for"), Task, Word(".")],
        &[Word("we"), Word("use"), Method, Word("to"), Word("improve"), Task, Word(".")],
        &[Word("our"), Method, Word("outperforms"), Method, Word("on"), Task, Word(".")],
        &[Task, Word("is"), Word("studied"), Word("with"), Method, Word(".")],
        &[Word("we"), Word("study"), Word("the"), Filler, Word("of"), Task, Word(".")],
        &[Method, Word("is"), Word("based"), Word("on"), Method, Word(".")],
        &[Word("this"), Filler, Word("improves"), Task, Word("in"), Word("the"), Filler, Word(".")],
        &[Word("we"), Word("apply"), Method, Word("to"), Word("the"), Filler, Word("of"), Task, Word(".")],
        &[Word("we"), Word("study"), Either, Word(".")],
        &[Either, Word("is"), Word("popular"), Word(".")],
    ]
};

impl Grammar {
    fn term(&self, category: TermCategory, novel: bool, rng: &mut impl Rng) -> Vec<String> {
        let len = match rng.random::<f64>() {
            u if u < 0.5 => 1,
            u if u < 0.85 => 2,
            _ => 3,
        };
        let (own, unseen) = match category {
            TermCategory::Task => (&self.task, &self.novel_task),
            TermCategory::Method => (&self.method, &self.novel_method),
        };
        (0..len)
            .map(|_| {
                if novel && !unseen.is_empty() && rng.random_bool(self.novel_rate) {
                    unseen[rng.random_range(0..unseen.len())].clone()
                } else if rng.random_bool(0.15) {
                    self.ambiguous[rng.random_range(0..self.ambiguous.len())].clone()
                } else {
                    own[zipf(rng, own.len())].clone()
                }
            })
            .collect()
    }

    fn sentence(&self, doc: usize, novel: bool, rng: &mut impl Rng) -> Result<LabeledSentence> {
        let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
        let (mut tokens, mut pos, mut tags) = (Vec::new(), Vec::new(), Vec::new());
        for slot in template {
            match slot {
                Slot::Word(w) => {
                    tokens.push(w.to_string());
                    pos.push(FUNCTION_WORDS.iter().find(|(f, _)| f == w).expect("known function word").1.to_string());
                    tags.push(Tag::Outside);
                }
                Slot::Filler => {
                    tokens.push(self.filler[zipf(rng, self.filler.len())].clone());
                    pos.push("NN".to_string());
                    tags.push(Tag::Outside);
                }
                Slot::Task | Slot::Method | Slot::Either => {
                    let category = match slot {
                        Slot::Task => TermCategory::Task,
                        Slot::Method => TermCategory::Method,
                        _ if rng.random_bool(0.5) => TermCategory::Task,
                        _ => TermCategory::Method,
                    };
                    let words = self.term(category, novel, rng);
                    let n = words.len();
                    for (i, w) in words.into_iter().enumerate() {
                        tokens.push(w);
                        pos.push(if i + 1 == n { "NN" } else { "JJ" }.to_string());
                        let label = category.to_string();
                        tags.push(if i == 0 { Tag::Begin(label) } else { Tag::Inside(label) });
                    }
                }
            }
        }
        LabeledSentence::new(Sentence::new(tokens, pos, format!("syn-{doc}"), 0)?, tags)
    }
}

/// Tagging corpus with Task and Method spans. Term words follow a Zipf law
/// within their class, so many appear only in unlabeled text; a few words
/// occur in both classes, and some occur only in dev sentences. Word vectors
/// cluster by class.
pub fn tagging_corpus(config: &TaggingCorpusConfig) -> Result<TaggingCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let content = config.vocabulary.saturating_sub(FUNCTION_WORDS.len()).max(8);
    let n_task = content * 35 / 100;
    let n_method = content * 35 / 100;
    let n_ambiguous = (content * 5 / 100).max(1);
    let n_filler = content - n_task - n_method - n_ambiguous;
    let mut taken: BTreeSet<String> = FUNCTION_WORDS.iter().map(|(w, _)| w.to_string()).collect();
    let mut coin = |n: usize| (0..n).map(|_| coin_word(&mut rng, &mut taken)).collect::<Vec<_>>();
    let (mut task, mut method) = (coin(n_task), coin(n_method));
    let (ambiguous, filler) = (coin(n_ambiguous), coin(n_filler));
    let novel_task = task.split_off(n_task - (n_task as f64 * config.novel_fraction).round() as usize);
    let novel_method = method.split_off(n_method - (n_method as f64 * config.novel_fraction).round() as usize);
    let grammar = Grammar { novel_rate: config.novel_rate, task, method, novel_task, novel_method, ambiguous, filler };

    let dim = config.embedding_dim;
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let noise = Normal::new(0.0, config.embedding_noise).expect("valid normal");
    let mut centroid = || DVector::from_fn(dim, |_, _| unit.sample(&mut rng));
    let (c_task, c_method, c_filler) = (centroid(), centroid(), centroid());
    let mut embeddings = EmbeddingTable::new(dim);
    let around = |c: &DVector<f64>, rng: &mut ChaCha8Rng| c.iter().map(|x| x + noise.sample(rng)).collect::<Vec<f64>>();
    for w in grammar.task.iter().chain(&grammar.novel_task) {
        embeddings.insert(w, around(&c_task, &mut rng))?;
    }
    for w in grammar.method.iter().chain(&grammar.novel_method) {
        embeddings.insert(w, around(&c_method, &mut rng))?;
    }
    let middle = (&c_task + &c_method) / 2.0;
    for w in &grammar.ambiguous {
        embeddings.insert(w, around(&middle, &mut rng))?;
    }
    for w in &grammar.filler {
        embeddings.insert(w, around(&c_filler, &mut rng))?;
    }
    for (w, _) in FUNCTION_WORDS {
        let v = DVector::from_fn(dim, |_, _| unit.sample(&mut rng));
        embeddings.insert(w, v.iter().copied().collect())?;
    }

    let mut doc = 0;
    let mut draw = |n: usize, novel: bool, rng: &mut ChaCha8Rng| -> Result<Vec<LabeledSentence>> {
        (0..n)
            .map(|_| {
                doc += 1;
                grammar.sentence(doc, novel, rng)
            })
            .collect()
    };
    let labeled = draw(config.labeled, false, &mut rng)?;
    let unlabeled = draw(config.unlabeled, false, &mut rng)?.into_iter().map(|l| l.sentence).collect();
    let dev = draw(config.dev, true, &mut rng)?;
    Ok(TaggingCorpus { labeled, unlabeled, dev, embeddings })
}

/// A training graph and held-out test triples.
#[derive(Debug, Clone)]
pub struct PlantedGraph {
    pub train: KnowledgeGraph,
    pub test: Vec<TripleKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BilinearGraphConfig {
    pub entities: usize,
    pub dim: usize,
    /// Fraction of candidate pairs per relation declared true.
    pub true_fraction: f64,
    /// Fraction of true pairs held out for testing.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for BilinearGraphConfig {
    fn default() -> Self {
        BilinearGraphConfig { entities: 60, dim: 4, true_fraction: 0.15, holdout_fraction: 0.2, seed: 0 }
    }
}

fn uncategorized(id: String) -> Entity {
    Entity { name: id.clone(), id, category: None, external: false }
}

/// Uncategorized entities with a hidden bilinear model over the three core
/// relations (symmetric matrices for the symmetric ones). The top-scoring
/// pairs of each relation are true; a random share of those is held out.
pub fn bilinear_graph(config: &BilinearGraphConfig) -> Result<PlantedGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let n = config.entities;
    let d = config.dim;
    let vectors: Vec<DVector<f64>> = (0..n).map(|_| DVector::from_fn(d, |_, _| unit.sample(&mut rng))).collect();
    let mut kg = KnowledgeGraph::new();
    for i in 0..n {
        kg.add_entity(uncategorized(format!("e{i:03}")));
    }
    let mut test = Vec::new();
    for r in [TASK_TASK, TASK_METHOD, METHOD_METHOD] {
        let a = DMatrix::from_fn(d, d, |_, _| unit.sample(&mut rng));
        let symmetric = !kg.relation(r).directed;
        let q = if symmetric { (&a + a.transpose()) / 2.0 } else { a };
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for x in 0..n {
            for y in 0..n {
                if x == y || (symmetric && y < x) {
                    continue;
                }
                pairs.push((vectors[x].dot(&(&q * &vectors[y])), x, y));
            }
        }
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
        let keep = (pairs.len() as f64 * config.true_fraction).round() as usize;
        let mut truth: Vec<(usize, usize)> = pairs[..keep].iter().map(|&(_, x, y)| (x, y)).collect();
        truth.shuffle(&mut rng);
        let held = (truth.len() as f64 * config.holdout_fraction).round() as usize;
        for (i, &(x, y)) in truth.iter().enumerate() {
            if i < held {
                test.push((x, r, y));
            } else {
                kg.add_triple(x, r, y, 1.0)?;
            }
        }
    }
    Ok(PlantedGraph { train: kg, test })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompositionGraphConfig {
    pub tasks: usize,
    pub methods: usize,
    pub task_task_edges: usize,
    pub base_task_method_edges: usize,
    pub method_method_edges: usize,
    /// Share of composition-implied edges held out; the rest stay in training.
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for CompositionGraphConfig {
    fn default() -> Self {
        CompositionGraphConfig {
            tasks: 120,
            methods: 120,
            task_task_edges: 120,
            base_task_method_edges: 180,
            method_method_edges: 0,
            holdout_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Random Task-Task, Task-Method and Method-Method edges, closed under the
/// rule `t1 ~ t2` and `t2 -> m` implies `t1 -> m`. Test triples are a share
/// of the implied Task-Method edges.
pub fn composition_graph(config: &CompositionGraphConfig) -> Result<PlantedGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut kg = KnowledgeGraph::new();
    let categorized = |id: String, category| Entity { name: id.clone(), id, category: Some(category), external: false };
    let tasks: Vec<usize> =
        (0..config.tasks).map(|i| kg.add_entity(categorized(format!("task{i:03}"), TermCategory::Task))).collect();
    let methods: Vec<usize> =
        (0..config.methods).map(|i| kg.add_entity(categorized(format!("method{i:03}"), TermCategory::Method))).collect();
    let mut tt = BTreeSet::new();
    while tt.len() < config.task_task_edges.min(tasks.len() * (tasks.len() - 1) / 2) {
        let (a, b) = (tasks[rng.random_range(0..tasks.len())], tasks[rng.random_range(0..tasks.len())]);
        if a != b {
            tt.insert((a.min(b), a.max(b)));
        }
    }
    let mut base = BTreeSet::new();
    while base.len() < config.base_task_method_edges.min(tasks.len() * methods.len()) {
        base.insert((tasks[rng.random_range(0..tasks.len())], methods[rng.random_range(0..methods.len())]));
    }
    let mut mm = BTreeSet::new();
    while mm.len() < config.method_method_edges.min(methods.len() * (methods.len() - 1) / 2) {
        let (a, b) = (methods[rng.random_range(0..methods.len())], methods[rng.random_range(0..methods.len())]);
        if a != b {
            mm.insert((a.min(b), a.max(b)));
        }
    }
    let mut implied = BTreeSet::new();
    for &(a, b) in &tt {
        for &(t, m) in &base {
            for (t1, t2) in [(a, b), (b, a)] {
                if t2 == t && !base.contains(&(t1, m)) {
                    implied.insert((t1, m));
                }
            }
        }
    }
    let mut implied: Vec<(usize, usize)> = implied.into_iter().collect();
    implied.shuffle(&mut rng);
    let held = (implied.len() as f64 * config.holdout_fraction).round() as usize;
    for &(a, b) in &tt {
        kg.add_triple(a, TASK_TASK, b, 1.0)?;
    }
    for &(a, b) in &mm {
        kg.add_triple(a, METHOD_METHOD, b, 1.0)?;
    }
    for &(t, m) in base.iter().chain(&implied[held..]) {
        kg.add_triple(t, TASK_METHOD, m, 1.0)?;
    }
    let test = implied[..held].iter().map(|&(t, m)| (t, TASK_METHOD, m)).collect();
    Ok(PlantedGraph { train: kg, test })
}
