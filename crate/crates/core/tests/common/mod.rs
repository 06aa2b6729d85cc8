//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use scigraph::corpus::{Sentence, TermCategory};
use scigraph::kg::{Entity, KnowledgeGraph, TASK_METHOD, TASK_TASK};
use scigraph::tagger::{ConstrainedLattice, ScoreLattice, TransitionMatrix};

/// Every tag sequence of length `n` over `m` tags, in lexicographic order.
pub fn all_sequences(n: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..m).map(move |i| {
                    let mut y = prefix.clone();
                    y.push(i);
                    y
                })
            })
            .collect();
    }
    out
}

/// Emission plus transition score, virtual start and end included.
pub fn score(lattice: &ScoreLattice, trans: &TransitionMatrix, y: &[usize]) -> f64 {
    let mut s = trans.get(trans.start(), y[0]) + trans.get(*y.last().unwrap(), trans.end());
    for (t, &i) in y.iter().enumerate() {
        s += lattice.get(t, i);
        if t > 0 {
            s += trans.get(y[t - 1], i);
        }
    }
    s
}

pub struct Enumeration {
    pub log_z: f64,
    pub probabilities: Vec<(Vec<usize>, f64)>,
}

pub fn enumerate(lattice: &ScoreLattice, trans: &TransitionMatrix) -> Enumeration {
    let seqs = all_sequences(lattice.len(), lattice.num_tags());
    let scores: Vec<f64> = seqs.iter().map(|y| score(lattice, trans, y)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    let probabilities = seqs.into_iter().zip(scores).map(|(y, s)| (y, (s - log_z).exp())).collect();
    Enumeration { log_z, probabilities }
}

impl Enumeration {
    pub fn marginals(&self, n: usize, m: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; m]; n];
        for (y, p) in &self.probabilities {
            for (t, &i) in y.iter().enumerate() {
                out[t][i] += p;
            }
        }
        out
    }

    /// Highest-probability sequence; the first in lexicographic order wins ties.
    pub fn argmax(&self) -> Vec<usize> {
        let mut best = &self.probabilities[0];
        for entry in &self.probabilities[1..] {
            if entry.1 > best.1 {
                best = entry;
            }
        }
        best.0.clone()
    }

    pub fn probability(&self, y: &[usize]) -> f64 {
        self.probabilities.iter().find(|(s, _)| s == y).map(|(_, p)| *p).unwrap()
    }

    pub fn constrained_mass(&self, c: &ConstrainedLattice) -> f64 {
        self.probabilities
            .iter()
            .filter(|(y, _)| y.iter().enumerate().all(|(t, &i)| c.is_allowed(t, i)))
            .map(|(_, p)| p)
            .sum()
    }
}

pub fn random_lattice(rng: &mut impl Rng, n: usize, m: usize, range: f64) -> (ScoreLattice, TransitionMatrix) {
    let scores = (0..n * m).map(|_| rng.random_range(-range..range)).collect();
    let k = m + 2;
    let trans = (0..k * k).map(|_| rng.random_range(-range..range)).collect();
    (ScoreLattice::new(n, m, scores).unwrap(), TransitionMatrix::from_row_major(m, trans).unwrap())
}

/// Random allowed-tag sets, each non-empty.
pub fn random_constraints(rng: &mut impl Rng, n: usize, m: usize) -> ConstrainedLattice {
    let allowed = (0..n)
        .map(|_| {
            let mut set: Vec<usize> = (0..m).filter(|_| rng.random_bool(0.5)).collect();
            if set.is_empty() {
                set.push(rng.random_range(0..m));
            }
            set
        })
        .collect();
    ConstrainedLattice::new(m, allowed).unwrap()
}

/// Central finite differences of `f` at `theta`.
pub fn numeric_gradient(theta: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            t[i] = theta[i] + h;
            let up = f(&t);
            t[i] = theta[i] - h;
            let down = f(&t);
            t[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// ‖a − b‖ / max(‖a‖, ‖b‖).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-12)
}

pub fn sentence(words: &[&str], doc: &str) -> Sentence {
    Sentence::from_tokens(words.iter().map(|w| w.to_string()).collect(), doc, 0).unwrap()
}

pub fn entity(id: &str, category: Option<TermCategory>) -> Entity {
    Entity { id: id.into(), name: id.into(), category, external: false }
}

/// Five Tasks, five Methods, random core edges and one auxiliary resource.
pub fn random_kg(rng: &mut impl Rng) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new();
    for i in 0..5 {
        kg.add_entity(entity(&format!("t{i}"), Some(TermCategory::Task)));
    }
    for i in 0..5 {
        kg.add_entity(entity(&format!("m{i}"), Some(TermCategory::Method)));
    }
    let wiki = kg.add_resource("wiki");
    let aux = kg.add_relation("See also", wiki, true).unwrap();
    for _ in 0..14 {
        let (a, b) = (rng.random_range(0..5), rng.random_range(0..5));
        if a != b {
            kg.add_triple(a, TASK_TASK, b, 1.0).unwrap();
        }
        kg.add_triple(rng.random_range(0..5), TASK_METHOD, 5 + rng.random_range(0..5), 1.0).unwrap();
        let (c, d) = (5 + rng.random_range(0..5), 5 + rng.random_range(0..5));
        if c != d {
            kg.add_triple(c, aux, d, 1.0).unwrap();
        }
    }
    kg
}

pub fn toy_config_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/toy/config.toml")
}
