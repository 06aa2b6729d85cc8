//! File-mediated pipeline stages. Each command reads its declared inputs
//! (paths from [`PipelineConfig`] or artifacts under `work_dir`) and writes
//! its outputs under `work_dir`, so every stage can be run on its own.
//!
//! Artifacts, relative to `work_dir`:
//!
//! | file | written by |
//! |------|------------|
//! | `tagger.json`, `tagger_report.json` | `train-tagger`, `self-train` |
//! | `self_train.json`, `self_train_dev.conll` | `self-train` |
//! | `tagged.conll` | `tag` |
//! | `propagated.tsv`, `graph.txt`, `propagation.json` | `propagate` |
//! | `clusters.tsv` | `link` |
//! | `kg/`, `paper_triples.jsonl` | `build-kg`, `ingest-aux` (updates `kg/`) |
//! | `split/{train,dev,test}.tsv`, `kg_train/` | `split` |
//! | `embedding/`, `embedding_training.json` | `train-embed` |
//! | `evaluation.json` | `evaluate` |

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    conll::{read_conll, write_conll}, load_papers, sentences_from_text, CategoryMap, LabeledSentence, Sentence, Span, TermCategory,
};
use crate::embed::{train, EmbeddingModel, Scorer, TrainingConfig, TrainingReport};
use crate::error::{Error, Result};
use crate::graph_ssl::{
    evaluate_predictions, propagate as run_propagation, self_train as run_self_train, EmbeddingTable,
    PosteriorStrategy, PropagationConfig, RetrainObjective, RoundDiagnostics, SelfTrainConfig, SelfTrainInput,
    SslMode, TokenGraph,
};
use crate::kg::{
    extract_cooccurrence, ingest_auxiliary, read_triples, temporal_split, write_triples, Entity, EntityMention,
    KnowledgeGraph, PaperTriples, PathMode, SectionMap, SplitConfig, Window, CORE_RESOURCE,
};
use crate::linker::{link_sentences, read_cluster_table, write_cluster_table, ClusterIndex, EntityCluster};
use crate::rank::{evaluate as run_evaluation, recommend as run_recommend, resolve_triples, RankMode, RankingReport, Recommendation};
use crate::tagger::{train_crf, CrfModel, CrfTrainConfig};

/// Every setting of a pipeline run. Loaded from a flat TOML file; keys
/// absent from the file take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub work_dir: PathBuf,

    // inputs
    pub corpus: Option<PathBuf>,
    pub labeled: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub section_map: Option<PathBuf>,
    /// `resource=path` entries.
    pub aux_files: Vec<String>,

    // tagger and self-training
    pub crf_epochs: usize,
    pub crf_l2: f64,
    pub strategy: PosteriorStrategy,
    pub training: RetrainObjective,
    pub mode: SslMode,
    pub rounds: usize,
    pub alpha: f64,
    pub eta: f64,
    pub k: usize,
    pub mu: f64,
    pub nu: f64,
    pub pca_dim: usize,
    pub propagation_iterations: usize,
    pub propagation_tolerance: f64,

    // graph construction and split
    pub window: Window,
    pub cutoff_year: Option<i32>,
    pub dev_venue: Option<String>,
    pub holdout: Vec<String>,

    // embeddings
    /// Graph directory under `work_dir` that embeddings are trained and
    /// evaluated on (`kg`, or `kg_train` after `split`).
    pub embed_graph: String,
    pub embed_dim: usize,
    pub embed_epochs: usize,
    pub embed_learning_rate: f64,
    pub embed_lr_decay: f64,
    pub embed_margin: f64,
    pub embed_negatives: usize,
    pub embed_l2: f64,
    pub embed_use_paths: bool,
    pub embed_max_path_len: usize,
    /// 0 enumerates every simple path; otherwise this many random walks.
    pub embed_path_walks: usize,

    // evaluation and recommendation
    pub rank_mode: RankMode,
    pub hits_at: Vec<usize>,
    pub top: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let ssl = SelfTrainConfig::default();
        let crf = CrfTrainConfig::default();
        let embed = TrainingConfig::default();
        PipelineConfig {
            seed: 0,
            work_dir: PathBuf::from("work"),
            corpus: None,
            labeled: None,
            unlabeled: None,
            dev: None,
            embeddings: None,
            categories: None,
            section_map: None,
            aux_files: Vec::new(),
            crf_epochs: crf.epochs,
            crf_l2: crf.l2,
            strategy: ssl.strategy,
            training: ssl.training,
            mode: ssl.mode,
            rounds: ssl.rounds,
            alpha: ssl.alpha,
            eta: ssl.eta,
            k: ssl.k,
            mu: ssl.propagation.mu,
            nu: ssl.propagation.nu,
            pca_dim: ssl.pca_dim,
            propagation_iterations: ssl.propagation.max_iterations,
            propagation_tolerance: ssl.propagation.tolerance,
            window: Window::Sentence,
            cutoff_year: None,
            dev_venue: None,
            holdout: Vec::new(),
            embed_graph: "kg".into(),
            embed_dim: embed.dim,
            embed_epochs: embed.epochs,
            embed_learning_rate: embed.learning_rate,
            embed_lr_decay: embed.lr_decay,
            embed_margin: embed.margin,
            embed_negatives: embed.negatives_per_positive,
            embed_l2: embed.l2,
            embed_use_paths: embed.use_paths,
            embed_max_path_len: embed.max_path_len,
            embed_path_walks: 0,
            rank_mode: RankMode::Filtered,
            hits_at: vec![1, 3, 10],
            top: 30,
        }
    }
}

const PATH_KEYS: [&str; 8] = ["work_dir", "corpus", "labeled", "unlabeled", "dev", "embeddings", "categories", "section_map"];

fn parse_override(raw: &str) -> Result<(String, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(vec![format!("override `{raw}` is not of the form key=value")]))?;
    let key = key.trim().to_string();
    let value = value.trim();
    // Bare words are taken as strings so `--set mode=transductive` works.
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

impl PipelineConfig {
    /// Parses a config file's text. Relative paths are taken relative to
    /// `base`. Overrides are `key=value` strings applied on top.
    pub fn from_toml(text: &str, base: &Path, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(vec![format!("config syntax: {e}")]))?;
        for key in PATH_KEYS {
            if let Some(toml::Value::String(s)) = table.get_mut(key) {
                *s = base.join(&*s).to_string_lossy().into_owned();
            }
        }
        if let Some(toml::Value::Array(items)) = table.get_mut("aux_files") {
            for item in items {
                if let toml::Value::String(s) = item {
                    if let Some((res, p)) = s.split_once('=') {
                        *s = format!("{res}={}", base.join(p).to_string_lossy());
                    }
                }
            }
        }
        let mut problems = Vec::new();
        for raw in overrides {
            match parse_override(raw) {
                Ok((key, value)) => {
                    table.insert(key, value);
                }
                Err(Error::Config(p)) => problems.extend(p),
                Err(e) => problems.push(e.to_string()),
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))
    }

    /// Loads `path` (or defaults when `None`) and applies overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                let base = p.parent().unwrap_or(Path::new(""));
                Self::from_toml(&text, base, overrides)
            }
            None => Self::from_toml("", Path::new(""), overrides),
        }
    }

    /// The resolved configuration as TOML, for logging.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_else(|e| format!("<unprintable config: {e}>"))
    }

    /// Every problem with the settings and the referenced input files.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        for (key, path) in [
            ("corpus", &self.corpus),
            ("labeled", &self.labeled),
            ("unlabeled", &self.unlabeled),
            ("dev", &self.dev),
            ("embeddings", &self.embeddings),
            ("categories", &self.categories),
            ("section_map", &self.section_map),
        ] {
            if let Some(p) = path {
                if !p.is_file() {
                    problems.push(format!("{key}: file {} does not exist", p.display()));
                }
            }
        }
        match self.aux_entries() {
            Ok(entries) => {
                for (res, p) in entries {
                    if res == "core" {
                        problems.push("aux_files: `core` cannot name an auxiliary resource".into());
                    }
                    if !p.is_file() {
                        problems.push(format!("aux_files: file {} does not exist", p.display()));
                    }
                }
            }
            Err(p) => problems.extend(p),
        }
        if self.strategy == PosteriorStrategy::GraphFeat && self.mode == SslMode::Inductive {
            problems.push(
                "strategy = graph-feat requires mode = transductive: GraphFeat can only be used transductively, \
                 because graph posteriors are needed for the evaluation sentences"
                    .into(),
            );
        }
        if self.crf_epochs == 0 {
            problems.push("crf_epochs must be at least 1".into());
        }
        if !(self.crf_l2 >= 0.0) {
            problems.push(format!("crf_l2 must be non-negative (got {})", self.crf_l2));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            problems.push(format!("alpha must lie in [0, 1] (got {})", self.alpha));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            problems.push(format!("eta must lie in (0, 1] (got {})", self.eta));
        }
        if self.k == 0 {
            problems.push("k must be at least 1".into());
        }
        if !(self.mu >= 0.0) || !(self.nu >= 0.0) {
            problems.push(format!("mu and nu must be non-negative (got {}, {})", self.mu, self.nu));
        }
        if self.pca_dim == 0 {
            problems.push("pca_dim must be at least 1".into());
        }
        if self.propagation_iterations == 0 {
            problems.push("propagation_iterations must be at least 1".into());
        }
        if !(self.propagation_tolerance >= 0.0) {
            problems.push("propagation_tolerance must be non-negative".into());
        }
        if self.embed_graph.is_empty() || self.embed_graph.contains(['/', '\\']) {
            problems.push(format!("embed_graph must name a directory under work_dir (got `{}`)", self.embed_graph));
        }
        if self.embed_epochs == 0 {
            problems.push("embed_epochs must be at least 1".into());
        }
        problems.extend(self.embed_config().validate());
        if self.hits_at.contains(&0) {
            problems.push("hits_at entries must be at least 1".into());
        }
        if self.top == 0 {
            problems.push("top must be at least 1".into());
        }
        problems
    }

    fn aux_entries(&self) -> std::result::Result<Vec<(String, PathBuf)>, Vec<String>> {
        let mut out = Vec::new();
        let mut problems = Vec::new();
        for entry in &self.aux_files {
            match entry.split_once('=') {
                Some((res, p)) if !res.trim().is_empty() && !p.trim().is_empty() => {
                    out.push((res.trim().to_string(), PathBuf::from(p.trim())))
                }
                _ => problems.push(format!("aux_files: `{entry}` is not of the form resource=path")),
            }
        }
        if problems.is_empty() {
            Ok(out)
        } else {
            Err(problems)
        }
    }

    pub fn crf_config(&self) -> CrfTrainConfig {
        CrfTrainConfig { epochs: self.crf_epochs, l2: self.crf_l2, ..Default::default() }
    }

    pub fn self_train_config(&self) -> SelfTrainConfig {
        SelfTrainConfig {
            strategy: self.strategy,
            training: self.training,
            mode: self.mode,
            rounds: self.rounds,
            alpha: self.alpha,
            eta: self.eta,
            k: self.k,
            pca_dim: self.pca_dim,
            propagation: PropagationConfig {
                mu: self.mu,
                nu: self.nu,
                max_iterations: self.propagation_iterations,
                tolerance: self.propagation_tolerance,
            },
            crf: self.crf_config(),
        }
    }

    pub fn embed_config(&self) -> TrainingConfig {
        TrainingConfig {
            dim: self.embed_dim,
            epochs: self.embed_epochs,
            learning_rate: self.embed_learning_rate,
            lr_decay: self.embed_lr_decay,
            margin: self.embed_margin,
            negatives_per_positive: self.embed_negatives,
            l2: self.embed_l2,
            seed: self.seed,
            use_paths: self.embed_use_paths,
            max_path_len: self.embed_max_path_len,
            path_mode: match self.embed_path_walks {
                0 => PathMode::Exhaustive,
                walks => PathMode::Sampled { walks, seed: self.seed },
            },
        }
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.work_dir.join(name)
    }
}

/// Collects missing requirements of one command on top of the general
/// validation, and fails with all of them at once.
struct Check<'a> {
    config: &'a PipelineConfig,
    problems: Vec<String>,
}

impl<'a> Check<'a> {
    fn new(config: &'a PipelineConfig) -> Self {
        Check { config, problems: config.validate() }
    }

    fn input(&mut self, key: &str, value: &'a Option<PathBuf>) -> PathBuf {
        match value {
            Some(p) => p.clone(),
            None => {
                self.problems.push(format!("{key} must be set"));
                PathBuf::new()
            }
        }
    }

    fn artifact(&mut self, name: &str, producer: &str) -> PathBuf {
        let p = self.config.artifact(name);
        if !p.exists() {
            self.problems.push(format!("{} does not exist; run `{producer}` first", p.display()));
        }
        p
    }

    fn file(&mut self, what: &str, p: &Path) {
        if !p.exists() {
            self.problems.push(format!("{what}: {} does not exist", p.display()));
        }
    }

    fn problem(&mut self, message: String) {
        self.problems.push(message);
    }

    fn finish(self) -> Result<()> {
        if self.problems.is_empty() {
            std::fs::create_dir_all(&self.config.work_dir).map_err(|e| Error::io(&self.config.work_dir, e))
        } else {
            Err(Error::Config(self.problems))
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn corpus_sentences(path: &Path) -> Result<Vec<Sentence>> {
    Ok(load_papers(path)?
        .iter()
        .flat_map(|p| sentences_from_text(&p.abstract_text, &p.id))
        .collect())
}

/// The unlabeled pool: the `unlabeled` CoNLL file if set, else the corpus
/// abstracts.
fn unlabeled_pool(config: &PipelineConfig) -> Result<Vec<Sentence>> {
    match (&config.unlabeled, &config.corpus) {
        (Some(p), _) => Ok(read_conll(p)?.into_iter().map(|l| l.sentence).collect()),
        (None, Some(c)) => corpus_sentences(c),
        (None, None) => Err(Error::Config(vec!["one of unlabeled or corpus must be set".into()])),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerReport {
    pub sentences: usize,
    pub iterations: usize,
    pub objective: f64,
    pub dev_f1: Option<f64>,
}

fn dev_f1(model: &CrfModel, dev: &[LabeledSentence]) -> Result<Option<f64>> {
    if dev.is_empty() || model.uses_graph_features() {
        return Ok(None);
    }
    let sentences: Vec<Sentence> = dev.iter().map(|l| l.sentence.clone()).collect();
    let gold: Vec<_> = dev.iter().map(|l| l.tags.clone()).collect();
    let preds = sentences.iter().map(|s| model.predict(s, None)).collect::<Result<Vec<_>>>()?;
    Ok(Some(evaluate_predictions(&sentences, &gold, &preds)))
}

/// Supervised CRF on the labeled file.
pub fn train_tagger(config: &PipelineConfig) -> Result<TaggerReport> {
    let mut check = Check::new(config);
    let labeled_path = check.input("labeled", &config.labeled);
    check.finish()?;
    let labeled = read_conll(&labeled_path)?;
    let (model, report) = train_crf(&labeled, &config.crf_config())?;
    let dev = match &config.dev {
        Some(p) => read_conll(p)?,
        None => Vec::new(),
    };
    let summary = TaggerReport {
        sentences: labeled.len(),
        iterations: report.objective.len().saturating_sub(1),
        objective: *report.objective.last().unwrap_or(&f64::NAN),
        dev_f1: dev_f1(&model, &dev)?,
    };
    model.save(config.artifact("tagger.json"))?;
    write_json(&config.artifact("tagger_report.json"), &summary)?;
    info!("tagger trained on {} sentences, dev F1 {:?}", summary.sentences, summary.dev_f1);
    Ok(summary)
}

/// Tags every corpus abstract with the trained tagger.
pub fn tag(config: &PipelineConfig) -> Result<usize> {
    let mut check = Check::new(config);
    let corpus = check.input("corpus", &config.corpus);
    let model_path = check.artifact("tagger.json", "train-tagger");
    check.finish()?;
    let model = CrfModel::load(&model_path)?;
    if model.uses_graph_features() {
        return Err(Error::InvalidArgument(
            "the tagger uses graph features, which exist only for sentences in the propagation graph; \
             use the predictions written by transductive self-training"
                .into(),
        ));
    }
    let sentences = corpus_sentences(&corpus)?;
    let tagged = sentences
        .into_iter()
        .map(|s| {
            let p = model.predict(&s, None)?;
            LabeledSentence::new(s, p.tags)
        })
        .collect::<Result<Vec<_>>>()?;
    write_conll(config.artifact("tagged.conll"), &tagged)?;
    let spans: usize = tagged.iter().map(|l| l.spans().len()).sum();
    info!("tagged {} sentences, {spans} term spans", tagged.len());
    Ok(tagged.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationSummary {
    pub nodes: usize,
    pub edges: usize,
    pub sigma: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective: Vec<f64>,
}

/// One propagation pass over the labeled + unlabeled token graph, with the
/// trained tagger's marginals as prior.
pub fn propagate(config: &PipelineConfig) -> Result<PropagationSummary> {
    let mut check = Check::new(config);
    let labeled_path = check.input("labeled", &config.labeled);
    let embeddings_path = check.input("embeddings", &config.embeddings);
    if config.unlabeled.is_none() && config.corpus.is_none() {
        check.problem("one of unlabeled or corpus must be set".into());
    }
    let model_path = check.artifact("tagger.json", "train-tagger");
    check.finish()?;
    let labeled = read_conll(&labeled_path)?;
    let pool = unlabeled_pool(config)?;
    let embeddings = EmbeddingTable::load(&embeddings_path)?;
    let model = CrfModel::load(&model_path)?;
    if model.uses_graph_features() {
        return Err(Error::InvalidArgument("propagate needs a tagger without graph features".into()));
    }
    let alphabet = model.alphabet().clone();
    let mut tg = TokenGraph::build(&labeled, &alphabet, &pool, &embeddings, config.k, config.pca_dim)?;
    tg.set_prior(&model, None)?;
    let report = run_propagation(&mut tg.graph, &config.self_train_config().propagation)?;

    let mut out = String::from("doc_id\tsentence\tposition\ttoken");
    for t in alphabet.tags() {
        let _ = write!(out, "\t{t}");
    }
    out.push('\n');
    for (s, sentence) in tg.sentences().iter().enumerate() {
        for (t, u) in tg.sentence_nodes(s).enumerate() {
            let _ = write!(out, "{}\t{}\t{t}\t{}", sentence.doc_id, sentence.index, sentence.tokens[t]);
            for v in &tg.graph.q[u] {
                let _ = write!(out, "\t{v:.6}");
            }
            out.push('\n');
        }
    }
    write_file(&config.artifact("propagated.tsv"), out)?;
    let mut dump = Vec::new();
    tg.graph.dump(&mut dump).map_err(|e| Error::io(config.artifact("graph.txt"), e))?;
    write_file(&config.artifact("graph.txt"), dump)?;
    let summary = PropagationSummary {
        nodes: tg.graph.len(),
        edges: tg.graph.edge_count(),
        sigma: tg.graph.sigma(),
        iterations: report.iterations,
        converged: report.converged,
        objective: report.objective,
    };
    write_json(&config.artifact("propagation.json"), &summary)?;
    info!("propagation: {} sweeps, converged {}", summary.iterations, summary.converged);
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainSummary {
    pub strategy: PosteriorStrategy,
    pub training: RetrainObjective,
    pub mode: SslMode,
    pub rounds: Vec<RoundDiagnostics>,
    pub dev_f1: Option<f64>,
}

/// Graph-based self-training; the final tagger replaces `tagger.json`.
/// With a dev file its predictions are written to `self_train_dev.conll`.
pub fn self_train(config: &PipelineConfig) -> Result<SelfTrainSummary> {
    let mut check = Check::new(config);
    let labeled_path = check.input("labeled", &config.labeled);
    let embeddings_path = check.input("embeddings", &config.embeddings);
    if config.unlabeled.is_none() && config.corpus.is_none() {
        check.problem("one of unlabeled or corpus must be set".into());
    }
    if config.mode == SslMode::Transductive && config.dev.is_none() {
        check.problem("mode = transductive needs dev sentences to include in the graph".into());
    }
    check.finish()?;
    let labeled = read_conll(&labeled_path)?;
    let pool = unlabeled_pool(config)?;
    let embeddings = EmbeddingTable::load(&embeddings_path)?;
    let dev = match &config.dev {
        Some(p) => read_conll(p)?,
        None => Vec::new(),
    };
    let evaluation: Vec<Sentence> = dev.iter().map(|l| l.sentence.clone()).collect();
    let gold: Vec<_> = dev.iter().map(|l| l.tags.clone()).collect();
    let input = SelfTrainInput {
        labeled: &labeled,
        unlabeled: &pool,
        evaluation: &evaluation,
        evaluation_gold: (!dev.is_empty()).then_some(gold.as_slice()),
        embeddings: &embeddings,
    };
    let outcome = run_self_train(&input, &config.self_train_config())?;
    outcome.model.save(config.artifact("tagger.json"))?;
    if !evaluation.is_empty() {
        let preds = outcome.predict_evaluation(&evaluation)?;
        let tagged = evaluation
            .iter()
            .zip(preds)
            .map(|(s, p)| LabeledSentence::new(s.clone(), p.tags))
            .collect::<Result<Vec<_>>>()?;
        write_conll(config.artifact("self_train_dev.conll"), &tagged)?;
    }
    let summary = SelfTrainSummary {
        strategy: config.strategy,
        training: config.training,
        mode: config.mode,
        dev_f1: outcome.rounds.last().and_then(|r| r.dev_f1),
        rounds: outcome.rounds,
    };
    write_json(&config.artifact("self_train.json"), &summary)?;
    Ok(summary)
}

fn category_map(config: &PipelineConfig) -> Result<Option<CategoryMap>> {
    config.categories.as_ref().map(CategoryMap::load).transpose()
}

/// Sentences of a tagged CoNLL file with their spans, categories mapped to
/// term categories. Spans of unmapped labels are dropped.
fn tagged_spans(path: &Path, categories: Option<&CategoryMap>) -> Result<Vec<(Sentence, Vec<Span>)>> {
    let mut dropped = 0usize;
    let out = read_conll(path)?
        .into_iter()
        .map(|l| {
            let spans = l
                .spans()
                .into_iter()
                .filter_map(|mut s| {
                    let cat = match categories {
                        Some(map) => map.map(&s.category),
                        None => s.category.parse::<TermCategory>().ok(),
                    };
                    match cat {
                        Some(c) => {
                            s.category = c.to_string();
                            Some(s)
                        }
                        None => {
                            dropped += 1;
                            None
                        }
                    }
                })
                .collect();
            (l.sentence, spans)
        })
        .collect();
    if dropped > 0 {
        warn!("{dropped} spans with labels outside the term categories were ignored");
    }
    Ok(out)
}

/// Links the tagged spans into entity clusters.
pub fn link(config: &PipelineConfig) -> Result<Vec<EntityCluster>> {
    let mut check = Check::new(config);
    let tagged_path = check.artifact("tagged.conll", "tag");
    check.finish()?;
    let tagged = tagged_spans(&tagged_path, category_map(config)?.as_ref())?;
    let clusters = link_sentences(&tagged);
    let mut buf = Vec::new();
    write_cluster_table(&clusters, &mut buf)?;
    write_file(&config.artifact("clusters.tsv"), buf)?;
    info!("linked {} entities", clusters.len());
    Ok(clusters)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub entities: usize,
    pub triples: usize,
    pub papers: usize,
}

/// Builds the co-occurrence graph from the tagged corpus and the linked
/// clusters. Per-paper triples (with year and venue from the corpus) go to
/// `paper_triples.jsonl` for the temporal split.
pub fn build_kg(config: &PipelineConfig) -> Result<GraphSummary> {
    let mut check = Check::new(config);
    let corpus = check.input("corpus", &config.corpus);
    let tagged_path = check.artifact("tagged.conll", "tag");
    let clusters_path = check.artifact("clusters.tsv", "link");
    check.finish()?;
    let tagged = tagged_spans(&tagged_path, category_map(config)?.as_ref())?;
    let index = ClusterIndex::new(read_cluster_table(&clusters_path)?);
    let papers = load_papers(&corpus)?;

    let mut mentions: BTreeMap<String, Vec<EntityMention>> = BTreeMap::new();
    let mut unlinked = 0usize;
    for (sentence, spans) in &tagged {
        for span in spans {
            match index.lookup(&sentence.surface(span.start, span.end)) {
                Some(c) => mentions.entry(sentence.doc_id.clone()).or_default().push(EntityMention {
                    doc_id: sentence.doc_id.clone(),
                    sentence_index: sentence.index,
                    entity: c.canonical_id.clone(),
                    category: c.category,
                    confidence: span.confidence,
                }),
                None => unlinked += 1,
            }
        }
    }
    if unlinked > 0 {
        warn!("{unlinked} spans are not covered by the cluster table");
    }

    let mut kg = KnowledgeGraph::new();
    for c in index.clusters() {
        kg.add_entity(Entity {
            id: c.canonical_id.clone(),
            name: c.canonical_form.clone(),
            category: Some(c.category),
            external: false,
        });
    }
    let all: Vec<EntityMention> = mentions.values().flatten().cloned().collect();
    for t in extract_cooccurrence(&all, config.window, 0.0) {
        kg.insert_triple(&t)?;
    }
    kg.save(config.artifact("kg"))?;

    let mut lines = String::new();
    let mut missing = 0usize;
    let by_id: BTreeMap<&str, _> = papers.iter().map(|p| (p.id.as_str(), p)).collect();
    for (doc, ms) in &mentions {
        let Some(paper) = by_id.get(doc.as_str()) else {
            missing += 1;
            continue;
        };
        let record = PaperTriples {
            paper_id: doc.clone(),
            year: paper.year,
            venue: paper.venue.clone(),
            triples: extract_cooccurrence(ms, config.window, 0.0),
        };
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    if missing > 0 {
        warn!("{missing} tagged documents are not in the corpus and have no paper triples");
    }
    write_file(&config.artifact("paper_triples.jsonl"), lines)?;
    let summary = GraphSummary { entities: kg.num_entities(), triples: kg.num_triples(), papers: mentions.len() };
    info!("graph: {} entities, {} triples from {} papers", summary.entities, summary.triples, summary.papers);
    Ok(summary)
}

/// Merges the configured auxiliary relation files into `kg/`.
pub fn ingest_aux(config: &PipelineConfig) -> Result<GraphSummary> {
    let mut check = Check::new(config);
    let kg_path = check.artifact("kg", "build-kg");
    if config.aux_files.is_empty() {
        check.problem("aux_files is empty".into());
    }
    check.finish()?;
    let entries = config.aux_entries().map_err(Error::Config)?;
    let mut kg = KnowledgeGraph::load(&kg_path)?;
    let clusters_path = config.artifact("clusters.tsv");
    let index = if clusters_path.exists() { Some(ClusterIndex::new(read_cluster_table(&clusters_path)?)) } else { None };
    let sections = match &config.section_map {
        Some(p) => SectionMap::load(p)?,
        None => SectionMap::default(),
    };
    for (resource, path) in &entries {
        let report = ingest_auxiliary(&mut kg, path, resource, index.as_ref(), &sections)?;
        info!(
            "{resource}: {} rows, {} new entities, {} new triples, {} self-loops skipped",
            report.rows, report.new_entities, report.new_triples, report.skipped_self_loops
        );
    }
    kg.save(&kg_path)?;
    Ok(GraphSummary { entities: kg.num_entities(), triples: kg.num_triples(), papers: 0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub warnings: Vec<String>,
}

/// Temporal split of the per-paper triples. Besides the three triple
/// files it writes `kg_train/`: the full graph's entities and auxiliary
/// triples with only the training core triples.
pub fn split(config: &PipelineConfig) -> Result<SplitSummary> {
    let mut check = Check::new(config);
    let papers_path = check.artifact("paper_triples.jsonl", "build-kg");
    let kg_path = check.artifact("kg", "build-kg");
    if config.cutoff_year.is_none() {
        check.problem("cutoff_year must be set".into());
    }
    check.finish()?;
    let text = std::fs::read_to_string(&papers_path).map_err(|e| Error::io(&papers_path, e))?;
    let papers = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str::<PaperTriples>(l).map_err(|e| Error::parse(&papers_path, i + 1, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let split_config = SplitConfig {
        cutoff_year: config.cutoff_year.unwrap_or_default(),
        dev_venue: config.dev_venue.clone(),
        holdout: config.holdout.clone(),
    };
    let split = temporal_split(&papers, &split_config);
    for w in &split.warnings {
        warn!("{w}");
    }
    let dir = config.artifact("split");
    for (name, triples) in [("train.tsv", &split.train), ("dev.tsv", &split.dev), ("test.tsv", &split.test)] {
        let mut buf = Vec::new();
        write_triples(triples, &mut buf)?;
        write_file(&dir.join(name), buf)?;
    }
    let full = KnowledgeGraph::load(&kg_path)?;
    let mut train_kg = full.empty_like();
    for t in full.triples().iter().filter(|t| t.resource != "core") {
        train_kg.insert_triple(t)?;
    }
    for t in &split.train {
        train_kg.insert_triple(t)?;
    }
    train_kg.save(config.artifact("kg_train"))?;
    let summary = SplitSummary {
        train: split.train.len(),
        dev: split.dev.len(),
        test: split.test.len(),
        warnings: split.warnings,
    };
    info!("split: {} train, {} dev, {} test triples", summary.train, summary.dev, summary.test);
    Ok(summary)
}

fn embed_graph(check: &mut Check<'_>) -> PathBuf {
    let name = check.config.embed_graph.clone();
    let producer = if name == "kg_train" { "split" } else { "build-kg" };
    check.artifact(&name, producer)
}

/// Trains embeddings on the `embed_graph` graph.
pub fn train_embed(config: &PipelineConfig) -> Result<TrainingReport> {
    let mut check = Check::new(config);
    let graph = embed_graph(&mut check);
    check.finish()?;
    let kg = KnowledgeGraph::load(&graph)?;
    let (model, report) = train(&kg, &config.embed_config())?;
    model.save(config.artifact("embedding"))?;
    write_json(&config.artifact("embedding_training.json"), &report)?;
    Ok(report)
}

fn load_scoring(config: &PipelineConfig, check: Check<'_>, graph: PathBuf) -> Result<(KnowledgeGraph, EmbeddingModel)> {
    check.finish()?;
    let kg = KnowledgeGraph::load(&graph)?;
    let model = EmbeddingModel::load(config.artifact("embedding"))?;
    model.check_compatible(&kg)?;
    Ok((kg, model))
}

fn path_settings(config: &PipelineConfig, model: &EmbeddingModel) -> Option<crate::embed::PathSettings> {
    (model.max_path_len() > 0).then(|| crate::embed::PathSettings {
        max_len: model.max_path_len(),
        mode: config.embed_config().path_mode,
    })
}

/// Ranks every test triple (both slots); `test` defaults to
/// `split/test.tsv`. Writes `evaluation.json`.
pub fn evaluate(config: &PipelineConfig, test: Option<&Path>) -> Result<RankingReport> {
    let mut check = Check::new(config);
    let graph = embed_graph(&mut check);
    check.artifact("embedding", "train-embed");
    let test_path = match test {
        Some(p) => {
            check.file("test", p);
            p.to_path_buf()
        }
        None => check.artifact("split/test.tsv", "split"),
    };
    let (kg, model) = load_scoring(config, check, graph)?;
    let triples: Vec<_> = read_triples(&test_path)?
        .into_iter()
        .filter(|t| t.resource == kg.resources()[CORE_RESOURCE])
        .collect();
    let keys = resolve_triples(&kg, &triples);
    let scorer = Scorer::new(&model, &kg, path_settings(config, &model))?;
    let report = run_evaluation(&scorer, &keys, &config.hits_at, config.rank_mode)?;
    write_json(&config.artifact("evaluation.json"), &report)?;
    info!("evaluation over {} queries:\n{}", report.query_count, report.table());
    Ok(report)
}

/// Top-`config.top` partners of `term` under `relation`.
pub fn recommend(config: &PipelineConfig, term: &str, relation: &str, exclude_known: bool) -> Result<Vec<Recommendation>> {
    let mut check = Check::new(config);
    let graph = embed_graph(&mut check);
    check.artifact("embedding", "train-embed");
    let (kg, model) = load_scoring(config, check, graph)?;
    let clusters_path = config.artifact("clusters.tsv");
    let index = if clusters_path.exists() { Some(ClusterIndex::new(read_cluster_table(&clusters_path)?)) } else { None };
    let scorer = Scorer::new(&model, &kg, path_settings(config, &model))?;
    run_recommend(&scorer, index.as_ref(), term, relation, config.top, exclude_known)
}

/// Writes recommendations as TSV.
pub fn write_recommendation_tsv(rows: &[Recommendation], out: impl Write) -> Result<()> {
    crate::rank::write_recommendations(rows, out).map_err(|e| Error::io("<recommendations>", e))
}

/// Runs every stage in order: supervised tagger, tagging, linking, graph
/// construction, auxiliary ingestion (when configured), split (when
/// `cutoff_year` is set), embedding training and evaluation (when a test
/// split exists).
pub fn run_all(config: &PipelineConfig) -> Result<Option<RankingReport>> {
    train_tagger(config)?;
    tag(config)?;
    link(config)?;
    build_kg(config)?;
    if !config.aux_files.is_empty() {
        ingest_aux(config)?;
    }
    if config.cutoff_year.is_some() {
        split(config)?;
    }
    train_embed(config)?;
    if config.artifact("split/test.tsv").exists() {
        return evaluate(config, None).map(Some);
    }
    Ok(None)
}

/// Every file under `dir`, as relative paths, sorted.
pub fn list_artifacts(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = BTreeSet::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))? {
            let path = entry.map_err(|e| Error::io(&d, e))?.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(dir) {
                out.insert(rel.to_path_buf());
            }
        }
    }
    Ok(out.into_iter().collect())
}
