use std::ops::Range;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{token_features, EmbeddingTable};
use super::graph::{build_knn_graph, SimilarityGraph};
use super::pca::pca_project;
use super::posterior::graph_interp;
use super::propagate::{propagate, PropagationConfig};
use crate::corpus::{tags_to_spans, LabeledSentence, Sentence, Span, Tag};
use crate::error::{Error, Result};
use crate::tagger::{
    build_lattice, posterior_decode, span_f1, train_crf, train_crf_ulm, ConstrainedLattice, CrfModel,
    CrfTrainConfig, MatchMode, Prediction, TagAlphabet, UlmExample,
};

/// Per-sentence, per-token distributions over the tag alphabet.
pub type SentenceDistributions = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorStrategy {
    #[serde(alias = "graphinterp")]
    GraphInterp,
    #[serde(alias = "graphfeat")]
    GraphFeat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrainObjective {
    /// Self-labeled sentences are fully constrained to their argmax tags.
    Hard,
    /// Only confident positions are constrained; the rest are marginalized.
    Ulm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SslMode {
    Inductive,
    Transductive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelfTrainConfig {
    pub strategy: PosteriorStrategy,
    pub training: RetrainObjective,
    pub mode: SslMode,
    pub rounds: usize,
    pub alpha: f64,
    pub eta: f64,
    pub k: usize,
    pub pca_dim: usize,
    pub propagation: PropagationConfig,
    pub crf: CrfTrainConfig,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            strategy: PosteriorStrategy::GraphInterp,
            training: RetrainObjective::Ulm,
            mode: SslMode::Inductive,
            rounds: 2,
            alpha: 0.5,
            eta: 0.9,
            k: 10,
            pca_dim: 100,
            propagation: PropagationConfig::default(),
            crf: CrfTrainConfig::default(),
        }
    }
}

/// Token graph over a list of sentences, the first `labeled_count` of which
/// carry gold tags.
#[derive(Debug, Clone)]
pub struct TokenGraph {
    pub graph: SimilarityGraph,
    sentences: Vec<Sentence>,
    offsets: Vec<usize>,
    labeled_count: usize,
}

impl TokenGraph {
    pub fn build(
        labeled: &[LabeledSentence],
        alphabet: &TagAlphabet,
        unlabeled: &[Sentence],
        embeddings: &EmbeddingTable,
        k: usize,
        pca_dim: usize,
    ) -> Result<Self> {
        let sentences: Vec<Sentence> =
            labeled.iter().map(|l| l.sentence.clone()).chain(unlabeled.iter().cloned()).collect();
        let mut offsets = vec![0];
        for s in &sentences {
            offsets.push(offsets.last().unwrap() + s.len());
        }
        let features: Vec<_> = sentences
            .par_iter()
            .flat_map_iter(|s| (0..s.len()).map(move |t| token_features(s, t, embeddings)))
            .collect();
        let n = features.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("token graph needs at least 2 tokens, got {n}")));
        }
        let refs: Vec<_> = features.iter().map(|f| Some(f.token_ref.clone())).collect();
        let values: Vec<Vec<f64>> = features.into_iter().map(|f| f.values).collect();
        let projected = pca_project(&values, pca_dim)?;
        let k = k.min(n - 1);
        let mut graph = build_knn_graph(&projected, k)?;
        graph.token_refs = refs;
        let m = alphabet.len();
        for (s, l) in labeled.iter().enumerate() {
            let ids = alphabet.encode(&l.tags)?;
            for (t, id) in ids.into_iter().enumerate() {
                let mut r = vec![0.0; m];
                r[id] = 1.0;
                graph.r[offsets[s] + t] = Some(r);
            }
        }
        info!("token graph: {n} nodes, {} edges, sigma {:.4}", graph.edge_count(), graph.sigma());
        Ok(TokenGraph { graph, sentences, offsets, labeled_count: labeled.len() })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled_count
    }

    pub fn sentence_nodes(&self, s: usize) -> Range<usize> {
        self.offsets[s]..self.offsets[s + 1]
    }

    /// CRF marginals of every sentence become the prior `p̃`.
    pub fn set_prior(&mut self, model: &CrfModel, graph_q: Option<&[Vec<Vec<f64>>]>) -> Result<()> {
        let marginals = sentence_marginals(model, &self.sentences, graph_q)?;
        self.graph.p_tilde = marginals.into_iter().flatten().collect();
        Ok(())
    }

    /// Propagated distributions grouped by sentence.
    pub fn sentence_q(&self) -> SentenceDistributions {
        (0..self.sentences.len())
            .map(|s| self.graph.q[self.sentence_nodes(s)].to_vec())
            .collect()
    }

    /// Similarity-weighted mean of each node's neighbours' propagated
    /// distributions, grouped by sentence. Used as the graph feature so that a
    /// labeled token never sees its own (clamped) label.
    pub fn sentence_neighbour_q(&self) -> SentenceDistributions {
        let g = &self.graph;
        let averaged: Vec<Vec<f64>> = (0..g.len())
            .map(|u| {
                let mut acc = vec![0.0; g.q[u].len()];
                let mut total = 0.0;
                for e in g.neighbours(u) {
                    total += e.similarity;
                    acc.iter_mut().zip(&g.q[e.to]).for_each(|(a, q)| *a += e.similarity * q);
                }
                if total > 0.0 {
                    acc.iter_mut().for_each(|a| *a /= total);
                    acc
                } else {
                    g.q[u].clone()
                }
            })
            .collect();
        (0..self.sentences.len())
            .map(|s| averaged[self.sentence_nodes(s)].to_vec())
            .collect()
    }
}

fn sentence_marginals(
    model: &CrfModel,
    sentences: &[Sentence],
    graph_q: Option<&[Vec<Vec<f64>>]>,
) -> Result<SentenceDistributions> {
    sentences
        .par_iter()
        .enumerate()
        .map(|(i, s)| model.predict(s, graph_q.map(|q| q[i].as_slice())).map(|p| p.marginals))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDiagnostics {
    /// 0 is the supervised starting model.
    pub round: usize,
    pub propagation_objective: Vec<f64>,
    pub crf_objective: f64,
    pub constrained_positions: usize,
    pub self_labeled_positions: usize,
    pub dev_f1: Option<f64>,
}

/// Inputs to [`self_train`]. The evaluation sentences join the graph only
/// in transductive mode; their gold tags, when given, are used for
/// per-round diagnostics and never for training.
#[derive(Debug, Clone, Copy)]
pub struct SelfTrainInput<'a> {
    pub labeled: &'a [LabeledSentence],
    pub unlabeled: &'a [Sentence],
    pub evaluation: &'a [Sentence],
    pub evaluation_gold: Option<&'a [Vec<Tag>]>,
    pub embeddings: &'a EmbeddingTable,
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    pub model: CrfModel,
    pub rounds: Vec<RoundDiagnostics>,
    /// Propagated distributions for the evaluation sentences (transductive
    /// mode only); graph-feature models need them at prediction time.
    pub evaluation_q: Option<SentenceDistributions>,
}

impl SelfTrainOutcome {
    pub fn predict_evaluation(&self, evaluation: &[Sentence]) -> Result<Vec<Prediction>> {
        predict_all(&self.model, evaluation, self.evaluation_q.as_deref())
    }
}

fn predict_all(model: &CrfModel, sentences: &[Sentence], q: Option<&[Vec<Vec<f64>>]>) -> Result<Vec<Prediction>> {
    let q = if model.uses_graph_features() { q } else { None };
    sentences
        .par_iter()
        .enumerate()
        .map(|(i, s)| model.predict(s, q.map(|q| q[i].as_slice())))
        .collect()
}

/// Span F1 (exact boundaries and category) of predictions against gold tags.
pub fn evaluate_predictions(sentences: &[Sentence], gold: &[Vec<Tag>], predictions: &[Prediction]) -> f64 {
    let mut gold_spans: Vec<Span> = Vec::new();
    let mut pred_spans: Vec<Span> = Vec::new();
    for ((s, g), p) in sentences.iter().zip(gold).zip(predictions) {
        gold_spans.extend(tags_to_spans(g, &s.doc_id, s.index).spans);
        pred_spans.extend(p.spans.iter().cloned());
    }
    span_f1(&gold_spans, &pred_spans, MatchMode::Classification).f1
}

/// Graph-based self-training: CRF marginals feed propagation, the
/// resulting posteriors label the unlabeled pool, and the CRF is retrained
/// from scratch on labeled plus self-labeled data, for `rounds` rounds.
pub fn self_train(input: &SelfTrainInput<'_>, config: &SelfTrainConfig) -> Result<SelfTrainOutcome> {
    let graph_feat = config.strategy == PosteriorStrategy::GraphFeat;
    if graph_feat && config.mode == SslMode::Inductive {
        return Err(Error::TransductiveOnly);
    }
    if !(0.0..=1.0).contains(&config.alpha) {
        return Err(Error::InvalidArgument(format!("alpha {} outside [0, 1]", config.alpha)));
    }
    if let Some(gold) = input.evaluation_gold {
        if gold.len() != input.evaluation.len() {
            return Err(Error::Shape("evaluation gold does not match evaluation sentences".into()));
        }
    }
    let labeled = input.labeled;
    let supervised_config = CrfTrainConfig { graph_features: false, ..config.crf.clone() };
    let (mut model, report) = train_crf(labeled, &supervised_config)?;
    let alphabet = model.alphabet().clone();

    let dev_f1 = |model: &CrfModel, q: Option<&[Vec<Vec<f64>>]>| -> Result<Option<f64>> {
        match input.evaluation_gold {
            Some(gold) if !input.evaluation.is_empty() => {
                let preds = predict_all(model, input.evaluation, q)?;
                Ok(Some(evaluate_predictions(input.evaluation, gold, &preds)))
            }
            _ => Ok(None),
        }
    };
    let mut rounds = vec![RoundDiagnostics {
        round: 0,
        propagation_objective: Vec::new(),
        crf_objective: *report.objective.last().unwrap_or(&f64::NAN),
        constrained_positions: 0,
        self_labeled_positions: 0,
        dev_f1: dev_f1(&model, None)?,
    }];

    let mut pool: Vec<Sentence> = input.unlabeled.to_vec();
    if config.mode == SslMode::Transductive {
        pool.extend(input.evaluation.iter().cloned());
    }
    if pool.is_empty() {
        return Ok(SelfTrainOutcome { model, rounds, evaluation_q: None });
    }

    let mut tg = TokenGraph::build(labeled, &alphabet, &pool, input.embeddings, config.k, config.pca_dim)?;
    let n_lab = labeled.len();
    let eval_start = n_lab + input.unlabeled.len();
    let mut current_q: Option<SentenceDistributions> = None;
    let labeled_examples = labeled
        .iter()
        .map(|l| UlmExample::from_labeled(&alphabet, l))
        .collect::<Result<Vec<_>>>()?;
    let graph_config = CrfTrainConfig { graph_features: graph_feat, ..config.crf.clone() };

    for round in 1..=config.rounds {
        tg.set_prior(&model, current_q.as_deref())?;
        let prop = propagate(&mut tg.graph, &config.propagation)?;
        let q_all = if graph_feat { tg.sentence_neighbour_q() } else { tg.sentence_q() };

        let posteriors: SentenceDistributions = match config.strategy {
            PosteriorStrategy::GraphInterp => (0..pool.len())
                .map(|j| {
                    let nodes = tg.sentence_nodes(n_lab + j);
                    nodes
                        .map(|u| graph_interp(&tg.graph.p_tilde[u], &tg.graph.q[u], config.alpha))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?,
            PosteriorStrategy::GraphFeat => {
                let feat_model = if model.uses_graph_features() {
                    model.clone()
                } else {
                    let examples: Vec<UlmExample> = labeled_examples
                        .iter()
                        .zip(&q_all)
                        .map(|(ex, q)| UlmExample { graph_q: Some(q.clone()), ..ex.clone() })
                        .collect();
                    train_crf_ulm(&alphabet, &examples, &graph_config)?.0
                };
                sentence_marginals(&feat_model, &pool, Some(&q_all[n_lab..]))?
            }
        };

        let mut examples: Vec<UlmExample> = labeled_examples
            .iter()
            .zip(&q_all)
            .map(|(ex, q)| UlmExample { graph_q: graph_feat.then(|| q.clone()), ..ex.clone() })
            .collect();
        let mut constrained = 0;
        let mut positions = 0;
        for (j, post) in posteriors.iter().enumerate() {
            let predicted = posterior_decode(post);
            let lattice = match config.training {
                RetrainObjective::Hard => ConstrainedLattice::fully_constrained(alphabet.len(), &predicted)?,
                RetrainObjective::Ulm => build_lattice(post, &predicted, config.eta)?,
            };
            constrained += lattice.constrained_positions();
            positions += lattice.len();
            examples.push(UlmExample {
                sentence: pool[j].clone(),
                lattice,
                graph_q: graph_feat.then(|| q_all[n_lab + j].clone()),
            });
        }
        let (next, report) = train_crf_ulm(&alphabet, &examples, &graph_config)?;
        model = next;
        let eval_q = (config.mode == SslMode::Transductive).then(|| &q_all[eval_start..]);
        let diag = RoundDiagnostics {
            round,
            propagation_objective: prop.objective,
            crf_objective: *report.objective.last().unwrap_or(&f64::NAN),
            constrained_positions: constrained,
            self_labeled_positions: positions,
            dev_f1: dev_f1(&model, eval_q)?,
        };
        info!(
            "self-training round {round}: propagation {:.4} -> {:.4}, {constrained}/{positions} positions constrained, dev F1 {:?}",
            diag.propagation_objective.first().unwrap_or(&f64::NAN),
            diag.propagation_objective.last().unwrap_or(&f64::NAN),
            diag.dev_f1
        );
        rounds.push(diag);
        current_q = Some(q_all);
    }
    let evaluation_q = match (config.mode, current_q) {
        (SslMode::Transductive, Some(q)) => Some(q[eval_start..].to_vec()),
        _ => None,
    };
    Ok(SelfTrainOutcome { model, rounds, evaluation_q })
}
