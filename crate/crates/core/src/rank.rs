//! Link-prediction ranking, MRR / Hits@k, and recommendation lists.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Write;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TermCategory;
use crate::embed::Scorer;
use crate::error::{Error, Result};
use crate::kg::{Direction, KnowledgeGraph, PaperTriples, Triple, TripleKey, CORE_RESOURCE, TASK_METHOD, TASK_TASK};
use crate::linker::{canonical_id, normalize, ClusterIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    Raw,
    #[default]
    Filtered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingQuery {
    pub known: usize,
    pub relation: usize,
    pub target_slot: Slot,
    /// Candidates are restricted to this category (`None` = uncategorized
    /// entities).
    pub candidate_category: Option<TermCategory>,
    pub mode: RankMode,
}

impl RankingQuery {
    fn triple(&self, candidate: usize) -> TripleKey {
        match self.target_slot {
            Slot::Tail => (self.known, self.relation, candidate),
            Slot::Head => (candidate, self.relation, self.known),
        }
    }
}

/// Candidates in descending score order, ties broken by entity id. Filtered
/// mode drops candidates that form a known triple with the query, except
/// `gold`.
pub fn rank_candidates(scorer: &Scorer<'_>, query: &RankingQuery, gold: Option<usize>) -> Result<Vec<(usize, f64)>> {
    let kg = scorer.kg;
    if query.relation >= kg.relations().len() {
        return Err(Error::UnknownRelation(format!("#{}", query.relation)));
    }
    let mut scored = Vec::new();
    for (c, e) in kg.entities().iter().enumerate() {
        if c == query.known || e.category != query.candidate_category {
            continue;
        }
        let (h, r, t) = query.triple(c);
        if query.mode == RankMode::Filtered && Some(c) != gold && kg.has_triple(h, r, t) {
            continue;
        }
        scored.push((c, scorer.score(h, r, t)?));
    }
    if scored.is_empty() {
        return Err(Error::EmptyCandidates(format!(
            "no {} candidates for {}",
            query.candidate_category.map_or("uncategorized".to_string(), |c| c.to_string()),
            kg.entity(query.known).id
        )));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| kg.entity(a.0).id.cmp(&kg.entity(b.0).id)));
    Ok(scored)
}

/// One plus the number of candidates scored strictly higher than the gold.
pub fn rank_of(ranked: &[(usize, f64)], gold: usize) -> Option<usize> {
    let score = ranked.iter().find(|(c, _)| *c == gold)?.1;
    Some(1 + ranked.iter().filter(|(_, s)| *s > score).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub per_query_ranks: Vec<usize>,
    pub mrr: f64,
    #[serde(rename = "hits")]
    pub hits_at_k: BTreeMap<usize, f64>,
    pub query_count: usize,
    /// Number of candidates ranked per query, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidate_counts: Vec<usize>,
    /// MRR expected from a uniformly random ordering of the same candidates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_mrr: Option<f64>,
}

/// Expected reciprocal rank of the gold under a uniformly random ordering of
/// `n` candidates: H_n / n.
pub fn random_reciprocal_rank(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum::<f64>() / n.max(1) as f64
}

impl RankingReport {
    pub fn from_ranks(ranks: Vec<usize>, ks: &[usize]) -> Self {
        let n = ranks.len();
        let mean = |f: &dyn Fn(usize) -> f64| if n == 0 { 0.0 } else { ranks.iter().map(|&r| f(r)).sum::<f64>() / n as f64 };
        let mrr = mean(&|r| 1.0 / r as f64);
        let hits_at_k = ks
            .iter()
            .map(|&k| (k, mean(&|r| if r <= k { 1.0 } else { 0.0 })))
            .collect();
        RankingReport { per_query_ranks: ranks, mrr, hits_at_k, query_count: n, candidate_counts: Vec::new(), random_mrr: None }
    }

    pub fn with_candidates(ranks: Vec<usize>, counts: Vec<usize>, ks: &[usize]) -> Self {
        let mut report = RankingReport::from_ranks(ranks, ks);
        if !counts.is_empty() {
            report.random_mrr = Some(counts.iter().map(|&n| random_reciprocal_rank(n)).sum::<f64>() / counts.len() as f64);
        }
        report.candidate_counts = counts;
        report
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "queries   {}", self.query_count);
        let _ = writeln!(out, "MRR       {:.4}", self.mrr);
        for (k, h) in &self.hits_at_k {
            let _ = writeln!(out, "Hits@{k:<4} {h:.4}");
        }
        if let Some(r) = self.random_mrr {
            let _ = writeln!(out, "random    {r:.4}");
        }
        out
    }
}

/// Ranks the gold entity for both slots of every test triple. Candidates
/// share the gold entity's category.
pub fn evaluate(scorer: &Scorer<'_>, test: &[TripleKey], ks: &[usize], mode: RankMode) -> Result<RankingReport> {
    let kg = scorer.kg;
    let queries: Vec<(RankingQuery, usize)> = test
        .iter()
        .flat_map(|&(h, r, t)| {
            [
                (RankingQuery { known: h, relation: r, target_slot: Slot::Tail, candidate_category: kg.entity(t).category, mode }, t),
                (RankingQuery { known: t, relation: r, target_slot: Slot::Head, candidate_category: kg.entity(h).category, mode }, h),
            ]
        })
        .collect();
    let ranks = queries
        .par_iter()
        .map(|(q, gold)| {
            let ranked = rank_candidates(scorer, q, Some(*gold))?;
            Ok((rank_of(&ranked, *gold).expect("gold is always a candidate"), ranked.len()))
        })
        .collect::<Result<Vec<(usize, usize)>>>()?;
    let (ranks, counts) = ranks.into_iter().unzip();
    Ok(RankingReport::with_candidates(ranks, counts, ks))
}

/// Maps test triples onto graph indices, skipping (with a warning) those
/// whose entities or relation the graph does not know.
pub fn resolve_triples(kg: &KnowledgeGraph, triples: &[Triple]) -> Vec<TripleKey> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for t in triples {
        let rel = kg.resource_id(&t.resource).and_then(|res| kg.relation_id(&t.relation, res));
        match (kg.entity_idx(&t.head), rel, kg.entity_idx(&t.tail)) {
            (Some(h), Some(r), Some(tl)) if h != tl => out.push((h, r, tl)),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{skipped} test triples mention entities or relations unknown to the graph and were skipped");
    }
    out
}

/// Finds the graph entity for a surface form: through the linker's clusters
/// first, then by id or normalized name.
pub fn resolve_entity(kg: &KnowledgeGraph, index: Option<&ClusterIndex>, surface: &str) -> Result<usize> {
    if let Some(cluster) = index.and_then(|i| i.lookup(surface)) {
        if let Some(e) = kg.entity_idx(&cluster.canonical_id) {
            return Ok(e);
        }
    }
    if let Some(e) = kg.entity_idx(surface).or_else(|| kg.entity_idx(&canonical_id(surface))) {
        return Ok(e);
    }
    let key = normalize(surface);
    kg.entities()
        .iter()
        .position(|e| normalize(&e.name) == key)
        .ok_or_else(|| Error::Unresolved(surface.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub rank: usize,
    pub entity: String,
    pub score: f64,
    pub evidence: String,
}

fn step_label(kg: &KnowledgeGraph, relation: usize, direction: Direction) -> String {
    let name = &kg.relation(relation).name;
    match direction {
        Direction::Forward => name.clone(),
        Direction::Inverse => format!("{name}^-1"),
    }
}

/// Top-`top_n` partners for a query term under a relation. For Task-Method a
/// Method query returns Tasks and vice versa; symmetric relations return the
/// query's own category. Evidence lists the most probable connecting paths
/// when path features are on.
pub fn recommend(
    scorer: &Scorer<'_>,
    index: Option<&ClusterIndex>,
    surface: &str,
    relation: &str,
    top_n: usize,
    exclude_known: bool,
) -> Result<Vec<Recommendation>> {
    let kg = scorer.kg;
    let query = resolve_entity(kg, index, surface)?;
    let r = kg
        .relation_id(relation, CORE_RESOURCE)
        .ok_or_else(|| Error::UnknownRelation(relation.to_string()))?;
    let category = kg.entity(query).category;
    let (slot, candidate_category) = match (r, category) {
        (TASK_METHOD, Some(TermCategory::Method)) => (Slot::Head, Some(TermCategory::Task)),
        (TASK_METHOD, _) => (Slot::Tail, Some(TermCategory::Method)),
        (TASK_TASK, _) => (Slot::Tail, Some(TermCategory::Task)),
        _ => (Slot::Tail, Some(TermCategory::Method)),
    };
    let candidate_category = if category.is_none() { None } else { candidate_category };
    let q = RankingQuery {
        known: query,
        relation: r,
        target_slot: slot,
        candidate_category,
        mode: if exclude_known { RankMode::Filtered } else { RankMode::Raw },
    };
    let ranked = rank_candidates(scorer, &q, None)?;
    ranked
        .into_iter()
        .take(top_n)
        .enumerate()
        .map(|(i, (c, score))| {
            let (h, rel, t) = q.triple(c);
            let mut evidence = Vec::new();
            if kg.has_triple(h, rel, t) {
                evidence.push("known".to_string());
            }
            let mut paths = scorer.paths_between(h, rel, t)?;
            paths.sort_by(|a, b| b.walk_probability.total_cmp(&a.walk_probability));
            for p in paths.iter().take(3) {
                let steps: Vec<String> = p.steps.iter().map(|s| step_label(kg, s.relation, s.direction)).collect();
                evidence.push(format!("{}({:.3})", steps.join(">"), p.walk_probability));
            }
            Ok(Recommendation {
                rank: i + 1,
                entity: kg.entity(c).id.clone(),
                score,
                evidence: if evidence.is_empty() { "-".into() } else { evidence.join(";") },
            })
        })
        .collect()
}

/// One `rank\tentity\tscore\tevidence` line per recommendation.
pub fn write_recommendations<W: Write>(rows: &[Recommendation], mut out: W) -> std::io::Result<()> {
    for r in rows {
        writeln!(out, "{}\t{}\t{:.6}\t{}", r.rank, r.entity, r.score, r.evidence)?;
    }
    Ok(())
}

/// Reference ranking: candidates ordered by the number of papers in which
/// they appear with the query under `relation`, ties by id. Pass only
/// test-period papers.
pub fn ground_truth_from_frequency(papers: &[PaperTriples], query: &str, relation: &str) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for paper in papers {
        let partners: BTreeSet<&str> = paper
            .triples
            .iter()
            .filter(|t| t.relation == relation && t.head != t.tail)
            .filter_map(|t| {
                if t.head == query {
                    Some(t.tail.as_str())
                } else if t.tail == query {
                    Some(t.head.as_str())
                } else {
                    None
                }
            })
            .collect();
        for p in partners {
            *counts.entry(p.to_string()).or_default() += 1;
        }
    }
    let mut out: Vec<(String, usize)> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation between a predicted ranking and a frequency
/// reference, over the reference's items. Items missing from the prediction
/// share the position after its end. `None` with fewer than two items or no
/// variation.
pub fn rank_correlation(predicted: &[String], reference: &[(String, usize)]) -> Option<f64> {
    if reference.len() < 2 {
        return None;
    }
    let position: BTreeMap<&str, usize> = predicted.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
    let pred: Vec<f64> = reference
        .iter()
        .map(|(e, _)| position.get(e.as_str()).copied().unwrap_or(predicted.len()) as f64)
        .collect();
    let freq: Vec<f64> = reference.iter().map(|(_, c)| -(*c as f64)).collect();
    let (a, b) = (average_ranks(&pred), average_ranks(&freq));
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}
