use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;

use super::features::TokenRef;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub to: usize,
    pub distance: f64,
    pub similarity: f64,
}

/// Symmetric kNN graph over tokens plus the three per-node distributions
/// used by propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    adjacency: Vec<Vec<Edge>>,
    sigma: f64,
    pub token_refs: Vec<Option<TokenRef>>,
    /// Empirical label distribution; `Some` exactly on labeled nodes.
    pub r: Vec<Option<Vec<f64>>>,
    pub p_tilde: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other points to `u`, ties broken by index.
fn nearest(vectors: &[Vec<f64>], u: usize, k: usize) -> Vec<(usize, f64)> {
    let mut cand: Vec<(usize, f64)> = (0..vectors.len())
        .filter(|&v| v != u)
        .map(|v| (v, sq_dist(&vectors[u], &vectors[v])))
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if cand.len() > k {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand
}

/// Exact kNN graph: `u–v` is an edge iff `v ∈ K(u)` or `u ∈ K(v)`.
/// Edges keep the Euclidean distance and the kernel similarity
/// `exp(-d²/σ²)`, with σ the median edge distance.
pub fn build_knn_graph(vectors: &[Vec<f64>], k: usize) -> Result<SimilarityGraph> {
    let n = vectors.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k must be in 1..{n}, got {k}")));
    }
    if vectors.iter().any(|v| v.len() != vectors[0].len()) {
        return Err(Error::Shape("graph vectors differ in length".into()));
    }
    let neighbours: Vec<Vec<(usize, f64)>> = (0..n).into_par_iter().map(|u| nearest(vectors, u, k)).collect();
    let mut pairs = BTreeSet::new();
    for (u, list) in neighbours.iter().enumerate() {
        for &(v, d2) in list {
            pairs.insert((u.min(v), u.max(v), d2.sqrt().to_bits()));
        }
    }
    let mut distances: Vec<f64> = pairs.iter().map(|&(_, _, d)| f64::from_bits(d)).collect();
    distances.sort_by(f64::total_cmp);
    let median = distances[distances.len() / 2];
    let sigma = if median > 0.0 {
        median
    } else {
        let positive: Vec<f64> = distances.iter().copied().filter(|&d| d > 0.0).collect();
        if positive.is_empty() {
            1.0
        } else {
            positive.iter().sum::<f64>() / positive.len() as f64
        }
    };
    let mut adjacency = vec![Vec::new(); n];
    for &(u, v, bits) in &pairs {
        let distance = f64::from_bits(bits);
        let similarity = (-(distance * distance) / (sigma * sigma)).exp();
        adjacency[u].push(Edge { to: v, distance, similarity });
        adjacency[v].push(Edge { to: u, distance, similarity });
    }
    Ok(SimilarityGraph::from_adjacency(adjacency, sigma))
}

impl SimilarityGraph {
    fn from_adjacency(adjacency: Vec<Vec<Edge>>, sigma: f64) -> Self {
        let n = adjacency.len();
        SimilarityGraph {
            adjacency,
            sigma,
            token_refs: vec![None; n],
            r: vec![None; n],
            p_tilde: Vec::new(),
            q: Vec::new(),
        }
    }

    /// Graph with explicit undirected weighted edges `(u, v, similarity)`;
    /// distances are recorded as zero.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(u, v, w) in edges {
            if u >= n || v >= n || u == v {
                return Err(Error::InvalidArgument(format!("bad edge {u}-{v} in a {n}-node graph")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("edge weight {w} must be finite and non-negative")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidArgument(format!("duplicate edge {u}-{v}")));
            }
            adjacency[u].push(Edge { to: v, distance: 0.0, similarity: w });
            adjacency[v].push(Edge { to: u, distance: 0.0, similarity: w });
        }
        Ok(Self::from_adjacency(adjacency, 1.0))
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn neighbours(&self, u: usize) -> &[Edge] {
        &self.adjacency[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adjacency[u].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].iter().any(|e| e.to == v)
    }

    pub fn is_labeled(&self, u: usize) -> bool {
        self.r[u].is_some()
    }

    /// Writes the node list (with partition) and the edge list
    /// `u v distance similarity`, each edge once.
    pub fn dump<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# nodes: id partition doc sentence position")?;
        for u in 0..self.len() {
            let part = if self.is_labeled(u) { "labeled" } else { "unlabeled" };
            match &self.token_refs[u] {
                Some(t) => writeln!(out, "{u} {part} {} {} {}", t.doc_id, t.sentence_index, t.position)?,
                None => writeln!(out, "{u} {part} - - -")?,
            }
        }
        writeln!(out, "# edges: u v distance similarity")?;
        for (u, list) in self.adjacency.iter().enumerate() {
            for e in list.iter().filter(|e| e.to > u) {
                writeln!(out, "{u} {} {} {}", e.to, e.distance, e.similarity)?;
            }
        }
        Ok(())
    }
}
