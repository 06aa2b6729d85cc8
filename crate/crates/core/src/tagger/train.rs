//! Maximum-likelihood training of the CRF, on fully labeled sentences or on
//! constrained lattices that marginalize over uncertain positions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features;
use super::lattice::{forward_backward, ConstrainedLattice, ScoreLattice, TransitionMatrix};
use super::model::{CrfModel, TagAlphabet};
use crate::corpus::{LabeledSentence, Sentence};
use crate::error::{Error, Result};

/// Examples per gradient partial sum. Partial sums are reduced in example
/// order, so results do not depend on the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrfTrainConfig {
    pub epochs: usize,
    pub l2: f64,
    pub initial_step: f64,
    /// Stop when the relative objective decrease falls below this.
    pub tolerance: f64,
    /// Learn graph-posterior weights `M` (every example must carry `graph_q`).
    pub graph_features: bool,
}

impl Default for CrfTrainConfig {
    fn default() -> Self {
        CrfTrainConfig {
            epochs: 200,
            l2: 1e-4,
            initial_step: 0.1,
            tolerance: 1e-9,
            graph_features: false,
        }
    }
}

/// A sentence with its allowed tags per position and, for graph-feature
/// models, the propagated distributions of its tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct UlmExample {
    pub sentence: Sentence,
    pub lattice: ConstrainedLattice,
    pub graph_q: Option<Vec<Vec<f64>>>,
}

impl UlmExample {
    pub fn from_labeled(alphabet: &TagAlphabet, ls: &LabeledSentence) -> Result<Self> {
        let ids = alphabet.encode(&ls.tags)?;
        Ok(UlmExample {
            sentence: ls.sentence.clone(),
            lattice: ConstrainedLattice::fully_constrained(alphabet.len(), &ids)?,
            graph_q: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Objective after each accepted epoch; index 0 is the starting point.
    pub objective: Vec<f64>,
    pub converged: bool,
}

struct Encoded {
    feats: Vec<Vec<usize>>,
    lattice: ConstrainedLattice,
    graph_q: Option<Vec<Vec<f64>>>,
}

/// Regularized negative log-likelihood over a fixed set of examples, as a
/// function of the flat parameter vector
/// `[emission weights | transitions | graph weights]`.
pub struct CrfObjective {
    template: CrfModel,
    examples: Vec<Encoded>,
    l2: f64,
    graph: bool,
}

impl CrfObjective {
    pub fn new(alphabet: &TagAlphabet, examples: &[UlmExample], graph_features: bool, l2: f64) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::EmptyData);
        }
        let m = alphabet.len();
        let mut template = CrfModel::new(alphabet.clone());
        for ex in examples {
            if ex.lattice.len() != ex.sentence.len() || ex.lattice.num_tags() != m {
                return Err(Error::Shape(format!(
                    "lattice {}x{} for sentence of {} tokens and {m} tags",
                    ex.lattice.len(),
                    ex.lattice.num_tags(),
                    ex.sentence.len()
                )));
            }
            if graph_features {
                match &ex.graph_q {
                    Some(q) if q.len() == ex.sentence.len() && q.iter().all(|r| r.len() == m) => {}
                    _ => return Err(Error::Shape("graph features need an n x m graph_q per example".into())),
                }
            }
            for t in 0..ex.sentence.len() {
                for f in features::extract(&ex.sentence, t) {
                    template.add_feature(&f);
                }
            }
        }
        if graph_features {
            template.set_graph_weights(Some(vec![0.0; m * m]))?;
        }
        let encoded = examples
            .iter()
            .map(|ex| Encoded {
                feats: template.feature_ids(&ex.sentence),
                lattice: ex.lattice.clone(),
                graph_q: if graph_features { ex.graph_q.clone() } else { None },
            })
            .collect();
        Ok(CrfObjective { template, examples: encoded, l2, graph: graph_features })
    }

    fn m(&self) -> usize {
        self.template.alphabet().len()
    }

    fn trans_offset(&self) -> usize {
        self.template.num_features() * self.m()
    }

    fn graph_offset(&self) -> usize {
        self.trans_offset() + (self.m() + 2) * (self.m() + 2)
    }

    pub fn num_parameters(&self) -> usize {
        self.graph_offset() + if self.graph { self.m() * self.m() } else { 0 }
    }

    pub fn initial_parameters(&self) -> Vec<f64> {
        vec![0.0; self.num_parameters()]
    }

    /// Flattens a model built over the same feature table.
    pub fn parameters_of(&self, model: &CrfModel) -> Vec<f64> {
        let mut theta = model.weights().to_vec();
        theta.extend_from_slice(model.transitions().row_major());
        if self.graph {
            theta.extend_from_slice(model.graph_weights().unwrap_or(&vec![0.0; self.m() * self.m()]));
        }
        theta
    }

    pub fn model(&self, theta: &[f64]) -> CrfModel {
        let m = self.m();
        let mut model = self.template.clone();
        let trans = TransitionMatrix::from_row_major(m, theta[self.trans_offset()..self.graph_offset()].to_vec())
            .expect("finite parameters");
        let graph = self.graph.then(|| theta[self.graph_offset()..].to_vec());
        model.set_parameters(theta[..self.trans_offset()].to_vec(), trans, graph);
        model
    }

    fn lattice(&self, theta: &[f64], ex: &Encoded) -> ScoreLattice {
        let m = self.m();
        let n = ex.feats.len();
        let mut scores = vec![0.0; n * m];
        for (t, ids) in ex.feats.iter().enumerate() {
            let row = &mut scores[t * m..(t + 1) * m];
            for &f in ids {
                for (i, r) in row.iter_mut().enumerate() {
                    *r += theta[f * m + i];
                }
            }
            if let Some(q) = &ex.graph_q {
                let g = &theta[self.graph_offset()..];
                for (j, &qj) in q[t].iter().enumerate() {
                    for (i, r) in row.iter_mut().enumerate() {
                        *r += qj * g[j * m + i];
                    }
                }
            }
        }
        ScoreLattice::new(n, m, scores).expect("finite scores")
    }

    /// Adds this example's NLL gradient into `grad`; returns its NLL.
    fn accumulate(&self, theta: &[f64], trans: &TransitionMatrix, ex: &Encoded, grad: &mut [f64]) -> f64 {
        if ex.lattice.is_fully_unconstrained() {
            // likelihood is identically 1
            return 0.0;
        }
        let m = self.m();
        let p = self.lattice(theta, ex);
        let full = forward_backward(&p, trans, None).expect("shapes checked");
        let inside = forward_backward(&p, trans, Some(&ex.lattice)).expect("shapes checked");
        for (t, ids) in ex.feats.iter().enumerate() {
            let diff: Vec<f64> = (0..m).map(|i| full.unary[t * m + i] - inside.unary[t * m + i]).collect();
            for &f in ids {
                for (i, d) in diff.iter().enumerate() {
                    grad[f * m + i] += d;
                }
            }
            if let Some(q) = &ex.graph_q {
                let off = self.graph_offset();
                for (j, &qj) in q[t].iter().enumerate() {
                    for (i, d) in diff.iter().enumerate() {
                        grad[off + j * m + i] += qj * d;
                    }
                }
            }
        }
        let off = self.trans_offset();
        for (k, (a, b)) in full.transitions.iter().zip(&inside.transitions).enumerate() {
            grad[off + k] += a - b;
        }
        full.log_z - inside.log_z
    }

    pub fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let n = self.num_parameters();
        let trans = TransitionMatrix::from_row_major(self.m(), theta[self.trans_offset()..self.graph_offset()].to_vec())
            .expect("finite parameters");
        let partials: Vec<(f64, Vec<f64>)> = self
            .examples
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grad = vec![0.0; n];
                let mut nll = 0.0;
                for ex in chunk {
                    nll += self.accumulate(theta, &trans, ex, &mut grad);
                }
                (nll, grad)
            })
            .collect();
        let mut value = 0.5 * self.l2 * theta.iter().map(|w| w * w).sum::<f64>();
        let mut grad: Vec<f64> = theta.iter().map(|w| self.l2 * w).collect();
        for (nll, g) in partials {
            value += nll;
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        (value, grad)
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        self.value_and_gradient(theta).0
    }

    /// Unregularized NLL per token.
    pub fn nll_per_token(&self, theta: &[f64]) -> f64 {
        let reg = 0.5 * self.l2 * theta.iter().map(|w| w * w).sum::<f64>();
        let tokens: usize = self.examples.iter().map(|e| e.feats.len()).sum();
        (self.value(theta) - reg) / tokens.max(1) as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Batch gradient descent. Each epoch tries a Barzilai-Borwein step and
/// halves it until the objective does not increase.
pub fn minimize(objective: &CrfObjective, config: &CrfTrainConfig) -> (Vec<f64>, TrainReport) {
    let mut theta = objective.initial_parameters();
    let (mut value, mut grad) = objective.value_and_gradient(&theta);
    let mut trace = vec![value];
    let mut step = config.initial_step;
    let mut converged = false;
    for _ in 0..config.epochs {
        if dot(&grad, &grad).sqrt() < 1e-12 {
            converged = true;
            break;
        }
        let mut accepted = None;
        while step > 1e-16 {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(w, g)| w - step * g).collect();
            let (v, g) = objective.value_and_gradient(&cand);
            if v <= value {
                accepted = Some((cand, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, v, g)) = accepted else {
            converged = true;
            break;
        };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let decrease = value - v;
        let scale = value.abs().max(1.0);
        theta = cand;
        value = v;
        grad = g;
        trace.push(value);
        let sy = dot(&s, &y);
        step = if sy > 0.0 { dot(&s, &s) / sy } else { step * 2.0 };
        if decrease <= config.tolerance * scale {
            converged = true;
            break;
        }
    }
    (theta, TrainReport { objective: trace, converged })
}

/// Standard CRF training on fully labeled sentences.
pub fn train_crf(data: &[LabeledSentence], config: &CrfTrainConfig) -> Result<(CrfModel, TrainReport)> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let alphabet = TagAlphabet::from_data(data);
    let examples = data
        .iter()
        .map(|ls| UlmExample::from_labeled(&alphabet, ls))
        .collect::<Result<Vec<_>>>()?;
    train_crf_ulm(&alphabet, &examples, config)
}

/// Maximizes the summed log mass of each example's constrained lattice.
/// Fully constrained lattices reduce this to [`train_crf`].
pub fn train_crf_ulm(
    alphabet: &TagAlphabet,
    data: &[UlmExample],
    config: &CrfTrainConfig,
) -> Result<(CrfModel, TrainReport)> {
    let objective = CrfObjective::new(alphabet, data, config.graph_features, config.l2)?;
    let (theta, report) = minimize(&objective, config);
    Ok((objective.model(&theta), report))
}
