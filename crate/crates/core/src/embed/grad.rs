use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::model::EmbeddingModel;
use crate::error::Result;
use crate::kg::{Direction, RelationPath};

/// Sparse gradient over the parameters touched by a handful of triples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradient {
    pub entities: BTreeMap<usize, DVector<f64>>,
    pub relations: BTreeMap<usize, DMatrix<f64>>,
    /// Keyed by (resource, path length).
    pub path_weights: BTreeMap<(usize, usize), f64>,
}

impl Gradient {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty() && self.relations.is_empty() && self.path_weights.is_empty()
    }

    fn add_entity(&mut self, e: usize, g: DVector<f64>) {
        match self.entities.get_mut(&e) {
            Some(acc) => *acc += g,
            None => {
                self.entities.insert(e, g);
            }
        }
    }

    fn add_relation(&mut self, r: usize, g: DMatrix<f64>) {
        match self.relations.get_mut(&r) {
            Some(acc) => *acc += g,
            None => {
                self.relations.insert(r, g);
            }
        }
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (&e, g) in &other.entities {
            self.add_entity(e, g * scale);
        }
        for (&r, g) in &other.relations {
            self.add_relation(r, g * scale);
        }
        for (&k, &g) in &other.path_weights {
            *self.path_weights.entry(k).or_default() += g * scale;
        }
    }

    /// Dense vector in the order of [`EmbeddingModel::parameters`].
    pub fn to_dense(&self, model: &EmbeddingModel) -> Vec<f64> {
        let d = model.dim();
        let n = model.num_entities();
        let r = model.num_relations();
        let l = model.max_path_len();
        let mut out = vec![0.0; n * d + r * d * d + model.path_weights.len() * l];
        for (&e, g) in &self.entities {
            out[e * d..(e + 1) * d].copy_from_slice(g.as_slice());
        }
        for (&rel, g) in &self.relations {
            let base = n * d + rel * d * d;
            for i in 0..d {
                for j in 0..d {
                    out[base + i * d + j] = g[(i, j)];
                }
            }
        }
        for (&(k, len), &g) in &self.path_weights {
            out[n * d + r * d * d + k * l + len - 1] = g;
        }
        out
    }

    /// Gradient step `θ -= lr * (g + l2 * θ)` on the touched parameters.
    pub fn descend(&self, model: &mut EmbeddingModel, lr: f64, l2: f64) {
        for (&e, g) in &self.entities {
            let v = &mut model.entities[e];
            *v -= (g + &*v * l2) * lr;
        }
        for (&r, g) in &self.relations {
            let q = &mut model.relations[r];
            *q -= (g + &*q * l2) * lr;
        }
        for (&(k, len), &g) in &self.path_weights {
            let w = &mut model.path_weights[k][len - 1];
            *w -= lr * (g + l2 * *w);
        }
    }
}

/// Combined score of `(x, r, y)` given its paths, with the gradient of that
/// score with respect to every parameter it touches.
pub fn score_gradient(
    model: &EmbeddingModel,
    x: usize,
    r: usize,
    y: usize,
    paths: &[RelationPath],
) -> Result<(f64, Gradient)> {
    let mut score = model.bilinear_score(x, r, y)?;
    let q = model.relation_matrix(r);
    let vx = model.entity_vector(x);
    let vy = model.entity_vector(y);
    let mut grad = Gradient::default();
    grad.add_entity(x, q * vy);
    grad.add_entity(y, q.transpose() * vx);
    grad.add_relation(r, vx * vy.transpose());

    for p in paths {
        let len = p.steps.len();
        if len == 0 || len > model.max_path_len() {
            continue;
        }
        let w = model.path_weight(p.resource, len);
        let factors: Vec<DMatrix<f64>> = p.steps.iter().map(|&s| model.step_matrix(s)).collect();
        let d = model.dim();
        // prefix[i] = A_1 ... A_i, suffix[i] = A_{i+1} ... A_n
        let mut prefix = vec![DMatrix::identity(d, d)];
        for a in &factors {
            let next = prefix.last().expect("non-empty") * a;
            prefix.push(next);
        }
        let mut suffix = vec![DMatrix::identity(d, d); len + 1];
        for i in (0..len).rev() {
            suffix[i] = &factors[i] * &suffix[i + 1];
        }
        let phi = &prefix[len];
        let inner = phi.dot(q);
        score += w * p.walk_probability * inner;
        *grad.path_weights.entry((p.resource, len)).or_default() += p.walk_probability * inner;
        let c = w * p.walk_probability;
        if c == 0.0 {
            continue;
        }
        grad.add_relation(r, phi * c);
        let outer = q * c;
        for (i, step) in p.steps.iter().enumerate() {
            let g = prefix[i].transpose() * &outer * suffix[i + 1].transpose();
            let g = match step.direction {
                Direction::Forward => g,
                Direction::Inverse => g.transpose(),
            };
            grad.add_relation(step.relation, g);
        }
    }
    Ok((score, grad))
}
