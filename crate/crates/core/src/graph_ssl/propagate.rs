use serde::{Deserialize, Serialize};

use super::graph::SimilarityGraph;
use crate::error::{Error, Result};

/// Floor applied to CRF prior probabilities before taking logs.
const PRIOR_FLOOR: f64 = 1e-10;
const Q_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    /// Weight of the pairwise smoothness term.
    pub mu: f64,
    /// Weight of the CRF prior term.
    pub nu: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        PropagationConfig { mu: 1.0, nu: 0.1, max_iterations: 100, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropagationReport {
    /// Objective before the first sweep followed by one value per sweep.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

fn floored_prior(p: &[f64]) -> Vec<f64> {
    let z = 1.0 + PRIOR_FLOOR * p.len() as f64;
    p.iter().map(|&x| (x + PRIOR_FLOOR) / z).collect()
}

fn check_distribution(p: &[f64], m: usize, what: &str, u: usize) -> Result<()> {
    if p.len() != m {
        return Err(Error::Shape(format!("{what} of node {u} has {} entries, expected {m}", p.len())));
    }
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!("{what} of node {u} is not a distribution")));
    }
    Ok(())
}

/// Solves `e^y + y = s` for y by Newton's method from the right of the root.
fn solve_lambert_log(s: f64) -> f64 {
    let mut y = if s > 1.0 { s.ln() } else { s };
    for _ in 0..100 {
        let e = y.exp();
        let step = (e + y - s) / (e + 1.0);
        y -= step;
        if step.abs() <= 1e-15 * (1.0 + y.abs()) {
            break;
        }
    }
    y
}

/// Minimizes `-Σ a_i ln q_i + b Σ q_i ln q_i - Σ c_i q_i` over the simplex.
fn solve_node(a: &[f64], b: f64, c: &[f64], out: &mut [f64]) {
    let m = a.len();
    if b <= 0.0 {
        let total: f64 = a.iter().sum();
        for (o, &x) in out.iter_mut().zip(a) {
            *o = if total > 0.0 { x / total } else { 1.0 / m as f64 };
        }
        return;
    }
    let cmax = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = c.iter().map(|&x| x - cmax).collect();
    let ln_b = b.ln();
    let eval = |kappa: f64, q: &mut [f64]| -> (f64, f64) {
        let mut sum = 0.0;
        let mut slope = 0.0;
        for i in 0..m {
            let qi = if a[i] > 0.0 {
                let s = a[i].ln() - ln_b - (shifted[i] - kappa) / b;
                (a[i].ln() - ln_b - solve_lambert_log(s)).exp()
            } else {
                ((shifted[i] - kappa) / b).exp()
            };
            q[i] = qi;
            sum += qi;
            slope -= qi * qi / (b * qi + a[i]);
        }
        (sum - 1.0, slope)
    };
    // Without the `a` terms the root is available in closed form; the `a`
    // terms only raise each q_i, so this starts Newton left of the root.
    let mut kappa = b * shifted.iter().map(|&x| (x / b).exp()).sum::<f64>().ln();
    for _ in 0..200 {
        let (g, slope) = eval(kappa, out);
        if g.abs() < 1e-15 || slope == 0.0 {
            break;
        }
        let step = g / slope;
        kappa -= step;
        if step.abs() <= 1e-15 * (1.0 + kappa.abs()) {
            break;
        }
    }
    eval(kappa, out);
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x = (*x / total).max(Q_FLOOR));
}

struct Problem<'g> {
    graph: &'g SimilarityGraph,
    prior: Vec<Vec<f64>>,
    log_prior: Vec<Vec<f64>>,
    mu: f64,
    nu: f64,
    m: usize,
}

impl<'g> Problem<'g> {
    fn new(graph: &'g SimilarityGraph, config: &PropagationConfig) -> Result<Self> {
        let n = graph.len();
        if !(config.mu >= 0.0 && config.nu >= 0.0) {
            return Err(Error::InvalidArgument("mu and nu must be non-negative".into()));
        }
        if graph.p_tilde.len() != n {
            return Err(Error::Shape(format!("{} prior rows for {n} nodes", graph.p_tilde.len())));
        }
        if graph.r.len() != n {
            return Err(Error::Shape(format!("{} label rows for {n} nodes", graph.r.len())));
        }
        let m = graph.p_tilde.first().map_or(0, Vec::len);
        for u in 0..n {
            check_distribution(&graph.p_tilde[u], m, "prior", u)?;
            if let Some(r) = &graph.r[u] {
                check_distribution(r, m, "label distribution", u)?;
            }
        }
        if config.nu == 0.0 {
            Self::check_anchored(graph, config.mu > 0.0)?;
        }
        let prior: Vec<Vec<f64>> = graph.p_tilde.iter().map(|p| floored_prior(p)).collect();
        let log_prior = prior.iter().map(|p| p.iter().map(|x| x.ln()).collect()).collect();
        Ok(Problem { graph, prior, log_prior, mu: config.mu, nu: config.nu, m })
    }

    /// With no prior term, every connected component needs a labeled node.
    fn check_anchored(graph: &SimilarityGraph, use_edges: bool) -> Result<()> {
        let n = graph.len();
        let mut component = vec![usize::MAX; n];
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            let mut members = Vec::new();
            component[start] = start;
            while let Some(u) = stack.pop() {
                members.push(u);
                if !use_edges {
                    continue;
                }
                for e in graph.neighbours(u).iter().filter(|e| e.similarity > 0.0) {
                    if component[e.to] == usize::MAX {
                        component[e.to] = start;
                        stack.push(e.to);
                    }
                }
            }
            if !members.iter().any(|&u| graph.is_labeled(u)) {
                return Err(Error::Underdetermined(format!(
                    "node {start} is not connected to any labeled node and the prior weight is zero"
                )));
            }
        }
        Ok(())
    }

    fn objective(&self, q: &[Vec<f64>]) -> f64 {
        let mut total = 0.0;
        for u in 0..q.len() {
            if let Some(r) = &self.graph.r[u] {
                total += kl(r, &q[u]);
            }
            if self.mu > 0.0 {
                for e in self.graph.neighbours(u) {
                    total += self.mu * e.similarity * kl(&q[u], &q[e.to]);
                }
            }
            if self.nu > 0.0 {
                total += self.nu * kl(&q[u], &self.prior[u]);
            }
        }
        total
    }

    fn update(&self, q: &mut [Vec<f64>], u: usize, a: &mut [f64], c: &mut [f64]) {
        a.iter_mut().for_each(|x| *x = 0.0);
        c.iter_mut().for_each(|x| *x = 0.0);
        if let Some(r) = &self.graph.r[u] {
            a.copy_from_slice(r);
        }
        let mut b = self.nu;
        if self.mu > 0.0 {
            for e in self.graph.neighbours(u) {
                let w = self.mu * e.similarity;
                if w == 0.0 {
                    continue;
                }
                b += w;
                for i in 0..self.m {
                    a[i] += w * q[e.to][i];
                    c[i] += w * q[e.to][i].ln();
                }
            }
        }
        if self.nu > 0.0 {
            for i in 0..self.m {
                c[i] += self.nu * self.log_prior[u][i];
            }
        }
        let mut out = vec![0.0; self.m];
        solve_node(a, b, c, &mut out);
        q[u] = out;
    }
}

/// Minimizes the propagation objective
/// `Σ_l KL(r_u‖q_u) + μ Σ_u Σ_{v∈N(u)} w_uv KL(q_u‖q_v) + ν Σ_u KL(q_u‖p̃_u)`
/// by exact block-coordinate descent, one node at a time. Each node update
/// is the exact minimizer given its neighbours, so the objective never
/// increases. `q` starts from the (floored) prior.
pub fn propagate(graph: &mut SimilarityGraph, config: &PropagationConfig) -> Result<PropagationReport> {
    propagate_observed(graph, config, |_, _| {})
}

/// As [`propagate`], calling `observer(q, objective)` after every sweep.
pub fn propagate_observed(
    graph: &mut SimilarityGraph,
    config: &PropagationConfig,
    mut observer: impl FnMut(&[Vec<f64>], f64),
) -> Result<PropagationReport> {
    let problem = Problem::new(graph, config)?;
    let m = problem.m;
    let mut q = problem.prior.clone();
    let mut objective = vec![problem.objective(&q)];
    let mut converged = false;
    let mut a = vec![0.0; m];
    let mut c = vec![0.0; m];
    let mut iterations = 0;
    while iterations < config.max_iterations {
        for u in 0..q.len() {
            problem.update(&mut q, u, &mut a, &mut c);
        }
        iterations += 1;
        let value = problem.objective(&q);
        observer(&q, value);
        let previous = *objective.last().expect("objective trace is never empty");
        objective.push(value);
        if (previous - value).abs() <= config.tolerance * previous.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    graph.q = q;
    Ok(PropagationReport { objective, iterations, converged })
}

/// Value of the propagation objective at the graph's current `q`.
pub fn propagation_objective(graph: &SimilarityGraph, config: &PropagationConfig) -> Result<f64> {
    let problem = Problem::new(graph, config)?;
    if graph.q.len() != graph.len() {
        return Err(Error::Shape("graph has no propagated distributions".into()));
    }
    Ok(problem.objective(&graph.q))
}
