use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use log::{debug, info};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grad::{score_gradient, Gradient};
use super::model::EmbeddingModel;
use crate::corpus::TermCategory;
use crate::error::{Error, Result};
use crate::kg::{enumerate_paths, KnowledgeGraph, PathMode, RelationPath, TripleKey, CORE_RESOURCE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Step size at epoch t is `learning_rate / (1 + lr_decay * t)`.
    pub lr_decay: f64,
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub l2: f64,
    pub seed: u64,
    pub use_paths: bool,
    pub max_path_len: usize,
    pub path_mode: PathMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            dim: 16,
            epochs: 100,
            learning_rate: 0.05,
            lr_decay: 0.01,
            margin: 1.0,
            negatives_per_positive: 5,
            l2: 1e-5,
            seed: 0,
            use_paths: false,
            max_path_len: 2,
            path_mode: PathMode::Exhaustive,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.dim < 2 {
            problems.push(format!("embed_dim must be at least 2 (got {})", self.dim));
        }
        if !(self.margin > 0.0) {
            problems.push(format!("embed_margin must be positive (got {})", self.margin));
        }
        if self.negatives_per_positive == 0 {
            problems.push("embed_negatives must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) {
            problems.push(format!("embed_learning_rate must be positive (got {})", self.learning_rate));
        }
        if self.lr_decay < 0.0 || self.l2 < 0.0 {
            problems.push("embed_lr_decay and embed_l2 must be non-negative".into());
        }
        if self.use_paths && self.max_path_len == 0 {
            problems.push("embed_max_path_len must be at least 1 when paths are used".into());
        }
        problems
    }

    /// Path settings for scoring, if paths are enabled.
    pub fn path_settings(&self) -> Option<PathSettings> {
        self.use_paths.then_some(PathSettings { max_len: self.max_path_len, mode: self.path_mode })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PathSettings {
    pub max_len: usize,
    pub mode: PathMode,
}

pub fn ranking_loss(pos_score: f64, neg_score: f64, margin: f64) -> f64 {
    (neg_score - pos_score + margin).max(0.0)
}

/// Draws corrupted triples by replacing one argument with an entity of the
/// same category.
pub struct Corrupter<'a> {
    kg: &'a KnowledgeGraph,
    pools: BTreeMap<Option<TermCategory>, Vec<usize>>,
}

impl<'a> Corrupter<'a> {
    pub fn new(kg: &'a KnowledgeGraph) -> Self {
        let mut pools: BTreeMap<Option<TermCategory>, Vec<usize>> = BTreeMap::new();
        for (i, e) in kg.entities().iter().enumerate() {
            pools.entry(e.category).or_default().push(i);
        }
        Corrupter { kg, pools }
    }

    fn valid(&self, (h, r, t): TripleKey) -> bool {
        h != t && !self.kg.has_triple(h, r, t)
    }

    fn candidate(&self, (h, r, t): TripleKey, replace_head: bool, e: usize) -> TripleKey {
        if replace_head {
            (e, r, t)
        } else {
            (h, r, e)
        }
    }

    fn side(&self, triple: TripleKey, replace_head: bool, rng: &mut impl Rng) -> Option<TripleKey> {
        let original = if replace_head { triple.0 } else { triple.2 };
        let pool = &self.pools[&self.kg.entity(original).category];
        for _ in 0..10 {
            let e = pool[rng.random_range(0..pool.len())];
            let c = self.candidate(triple, replace_head, e);
            if e != original && self.valid(c) {
                return Some(c);
            }
        }
        let valid: Vec<TripleKey> = pool
            .iter()
            .filter(|&&e| e != original)
            .map(|&e| self.candidate(triple, replace_head, e))
            .filter(|&c| self.valid(c))
            .collect();
        (!valid.is_empty()).then(|| valid[rng.random_range(0..valid.len())])
    }

    /// Replaces the head or the tail (chosen by a fair coin, falling back to
    /// the other side) so that the result is not a known triple.
    pub fn corrupt(&self, triple: TripleKey, rng: &mut impl Rng) -> Result<TripleKey> {
        let (h, r, t) = triple;
        if h >= self.kg.num_entities() || t >= self.kg.num_entities() {
            return Err(Error::UnknownEntity(format!("#{}", h.max(t))));
        }
        let head_first = rng.random_bool(0.5);
        self.side(triple, head_first, rng)
            .or_else(|| self.side(triple, !head_first, rng))
            .ok_or_else(|| {
                Error::NoCorruption(format!(
                    "({}, {}, {})",
                    self.kg.entity(h).id,
                    self.kg.relation(r).name,
                    self.kg.entity(t).id
                ))
            })
    }
}

pub fn corrupt(kg: &KnowledgeGraph, triple: TripleKey, rng: &mut impl Rng) -> Result<TripleKey> {
    Corrupter::new(kg).corrupt(triple, rng)
}

/// Scores triples against a graph, enumerating (and caching) connecting
/// paths when path features are enabled. A triple's own edge is never one
/// of its paths.
pub struct Scorer<'a> {
    pub model: &'a EmbeddingModel,
    pub kg: &'a KnowledgeGraph,
    pub paths: Option<PathSettings>,
}

impl<'a> Scorer<'a> {
    pub fn new(model: &'a EmbeddingModel, kg: &'a KnowledgeGraph, paths: Option<PathSettings>) -> Result<Self> {
        model.check_compatible(kg)?;
        Ok(Scorer { model, kg, paths })
    }

    pub fn paths_between(&self, x: usize, r: usize, y: usize) -> Result<Vec<RelationPath>> {
        match self.paths {
            None => Ok(Vec::new()),
            Some(s) => enumerate_paths(self.kg, x, y, s.max_len, s.mode, Some(self.kg.canonical(x, r, y))),
        }
    }

    pub fn score(&self, x: usize, r: usize, y: usize) -> Result<f64> {
        if self.paths.is_none() {
            return self.model.bilinear_score(x, r, y);
        }
        let paths = self.paths_between(x, r, y)?;
        self.model.combined_score(x, r, y, &paths)
    }
}

/// Total hinge loss over `(positive, negative)` pairs and its gradient.
pub fn pair_loss_gradient(
    model: &EmbeddingModel,
    pairs: &[(TripleKey, TripleKey)],
    margin: f64,
    paths: &dyn Fn(TripleKey) -> Result<Arc<Vec<RelationPath>>>,
) -> Result<(f64, Gradient)> {
    let mut loss = 0.0;
    let mut grad = Gradient::default();
    for &(pos, neg) in pairs {
        let pos_paths = paths(pos)?;
        let neg_paths = paths(neg)?;
        let (sp, gp) = score_gradient(model, pos.0, pos.1, pos.2, &pos_paths)?;
        let (sn, gn) = score_gradient(model, neg.0, neg.1, neg.2, &neg_paths)?;
        let l = ranking_loss(sp, sn, margin);
        if l > 0.0 {
            loss += l;
            grad.add_scaled(&gn, 1.0);
            grad.add_scaled(&gp, -1.0);
        }
    }
    Ok((loss, grad))
}

/// Loss summed over every positive core triple and every valid corruption
/// of either argument, bilinear scores only. Quadratic in the entity count.
pub fn full_ranking_loss(model: &EmbeddingModel, kg: &KnowledgeGraph, margin: f64) -> Result<f64> {
    let corrupter = Corrupter::new(kg);
    let mut total = 0.0;
    for ((h, r, t), _) in kg.triple_keys() {
        if kg.relation(r).resource != CORE_RESOURCE {
            continue;
        }
        let pos = model.bilinear_score(h, r, t)?;
        for replace_head in [true, false] {
            let original = if replace_head { h } else { t };
            for &e in &corrupter.pools[&kg.entity(original).category] {
                let c = corrupter.candidate((h, r, t), replace_head, e);
                if e != original && corrupter.valid(c) {
                    total += ranking_loss(pos, model.bilinear_score(c.0, c.1, c.2)?, margin);
                }
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean hinge loss per (positive, negative) pair, one entry per epoch.
    pub epoch_loss: Vec<f64>,
    pub positives: usize,
}

const PATH_CACHE_LIMIT: usize = 1 << 20;

/// SGD on the margin ranking loss. Positives are the core triples, drawn in
/// proportion to their weight; symmetric relations are presented in a random
/// orientation.
pub fn train(kg: &KnowledgeGraph, config: &TrainingConfig) -> Result<(EmbeddingModel, TrainingReport)> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let positives: Vec<(TripleKey, f64)> = kg
        .triple_keys()
        .filter(|((_, r, _), _)| kg.relation(*r).resource == CORE_RESOURCE)
        .collect();
    if positives.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let max_len = if config.use_paths { config.max_path_len } else { 0 };
    let mut model = EmbeddingModel::init(kg, config.dim, max_len, &mut rng)?;
    let sampler = WeightedIndex::new(positives.iter().map(|(_, w)| *w))
        .map_err(|e| Error::InvalidRecord(format!("triple weights: {e}")))?;
    let corrupter = Corrupter::new(kg);
    let settings = config.path_settings();
    let cache: std::cell::RefCell<HashMap<TripleKey, Arc<Vec<RelationPath>>>> = Default::default();
    let paths = |key: TripleKey| -> Result<Arc<Vec<RelationPath>>> {
        let Some(s) = settings else {
            return Ok(Arc::new(Vec::new()));
        };
        if let Some(p) = cache.borrow().get(&key) {
            return Ok(Arc::clone(p));
        }
        let (x, r, y) = key;
        let found = Arc::new(enumerate_paths(kg, x, y, s.max_len, s.mode, Some(kg.canonical(x, r, y)))?);
        let mut c = cache.borrow_mut();
        if c.len() >= PATH_CACHE_LIMIT {
            c.clear();
        }
        c.insert(key, Arc::clone(&found));
        Ok(found)
    };

    info!(
        "training embeddings: {} positives, {} entities, dim {}, paths {}",
        positives.len(),
        kg.num_entities(),
        config.dim,
        if config.use_paths { "on" } else { "off" }
    );
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate / (1.0 + config.lr_decay * epoch as f64);
        let mut total = 0.0;
        let mut pairs_seen = 0usize;
        for _ in 0..positives.len() {
            let ((h, r, t), _) = positives[sampler.sample(&mut rng)];
            let pos = if !kg.relation(r).directed && rng.random_bool(0.5) { (t, r, h) } else { (h, r, t) };
            let mut pairs = Vec::with_capacity(config.negatives_per_positive);
            for _ in 0..config.negatives_per_positive {
                pairs.push((pos, corrupter.corrupt(pos, &mut rng)?));
            }
            let (loss, grad) = pair_loss_gradient(&model, &pairs, config.margin, &paths)?;
            total += loss;
            pairs_seen += pairs.len();
            grad.descend(&mut model, lr, config.l2);
        }
        let mean = total / pairs_seen as f64;
        debug!("epoch {epoch}: mean loss {mean:.6}");
        epoch_loss.push(mean);
    }
    if let Some(last) = epoch_loss.last() {
        info!("final epoch loss {last:.6}");
    }
    Ok((model, TrainingReport { epoch_loss, positives: positives.len() }))
}
