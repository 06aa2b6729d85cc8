use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Direction, KnowledgeGraph, TripleKey, CORE_RESOURCE};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathStep {
    pub relation: usize,
    pub direction: Direction,
}

/// A relation path between two entities. Intermediate entities are not
/// part of the path; `walk_probability` sums over all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationPath {
    pub start: usize,
    pub end: usize,
    pub steps: Vec<PathStep>,
    pub resource: usize,
    pub walk_probability: f64,
}

/// A concrete walk: the start entity and each step with the entity it reaches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    pub start: usize,
    pub hops: Vec<(PathStep, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum PathMode {
    /// Every simple path up to the length limit.
    Exhaustive,
    /// `walks` random walks per resource; revisits allowed.
    Sampled { walks: usize, seed: u64 },
}

struct View<'a> {
    kg: &'a KnowledgeGraph,
    excluded: Option<TripleKey>,
}

impl View<'_> {
    fn targets(&self, u: usize, step: PathStep) -> Vec<usize> {
        self.kg
            .step_targets(u, step.relation, step.direction)
            .filter(|&v| Some(self.kg.step_key(u, step.relation, step.direction, v)) != self.excluded)
            .collect()
    }

    fn steps(&self, u: usize, resource: usize) -> Vec<(PathStep, usize)> {
        self.kg
            .steps(u)
            .filter(|&(r, d, v)| {
                let res = self.kg.relation(r).resource;
                (res == CORE_RESOURCE || res == resource) && Some(self.kg.step_key(u, r, d, v)) != self.excluded
            })
            .map(|(relation, direction, v)| (PathStep { relation, direction }, v))
            .collect()
    }
}

/// Product over hops of 1 / (number of neighbours reachable from the
/// current entity by that hop's relation and direction).
pub fn walk_probability(kg: &KnowledgeGraph, walk: &Walk) -> Result<f64> {
    let view = View { kg, excluded: None };
    let mut p = 1.0;
    let mut at = walk.start;
    for &(step, next) in &walk.hops {
        let targets = view.targets(at, step);
        if !targets.contains(&next) {
            return Err(Error::CorruptStore(format!(
                "no {} edge of relation {} from entity {at} to {next}",
                step.direction, step.relation
            )));
        }
        p /= targets.len() as f64;
        at = next;
    }
    Ok(p)
}

/// Probability that a random walk from `x` following `steps` ends at `y`,
/// summed over all intermediate entities (revisits included). The edge
/// `excluded`, if any, is treated as absent.
pub fn path_probability(kg: &KnowledgeGraph, x: usize, y: usize, steps: &[PathStep], excluded: Option<TripleKey>) -> f64 {
    let view = View { kg, excluded };
    let mut mass: BTreeMap<usize, f64> = BTreeMap::from([(x, 1.0)]);
    for &step in steps {
        let mut next: BTreeMap<usize, f64> = BTreeMap::new();
        for (&u, &p) in &mass {
            let targets = view.targets(u, step);
            let share = p / targets.len().max(1) as f64;
            for v in targets {
                *next.entry(v).or_default() += share;
            }
        }
        mass = next;
    }
    mass.get(&y).copied().unwrap_or(0.0)
}

/// Relation paths of length 1..=`max_len` from `x` to `y`, grouped per
/// resource: resource 0 uses core edges only; resource k uses its own edges
/// plus core edges and keeps only paths with at least one resource-k edge.
/// The edge `excluded` (typically the queried triple itself) is ignored.
/// Output is sorted by resource, then steps.
pub fn enumerate_paths(
    kg: &KnowledgeGraph,
    x: usize,
    y: usize,
    max_len: usize,
    mode: PathMode,
    excluded: Option<TripleKey>,
) -> Result<Vec<RelationPath>> {
    if max_len == 0 {
        return Err(Error::InvalidArgument("maximum path length must be at least 1".into()));
    }
    if x >= kg.num_entities() || y >= kg.num_entities() {
        return Err(Error::UnknownEntity(format!("#{}", x.max(y))));
    }
    let view = View { kg, excluded };
    let mut found: BTreeMap<(usize, Vec<PathStep>), ()> = BTreeMap::new();
    for resource in 0..kg.resources().len() {
        let keep = |steps: &[PathStep]| {
            resource == CORE_RESOURCE || steps.iter().any(|s| kg.relation(s.relation).resource == resource)
        };
        match mode {
            PathMode::Exhaustive => {
                let mut on_path = vec![false; kg.num_entities()];
                on_path[x] = true;
                let mut steps = Vec::new();
                dfs(&view, x, y, max_len, resource, &mut on_path, &mut steps, &mut |s| {
                    if keep(s) {
                        found.insert((resource, s.to_vec()), ());
                    }
                });
            }
            PathMode::Sampled { walks, seed } => {
                let mix = seed ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (y as u64).rotate_left(32) ^ resource as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(mix);
                for _ in 0..walks {
                    let mut at = x;
                    let mut steps = Vec::new();
                    for _ in 0..max_len {
                        let options = view.steps(at, resource);
                        if options.is_empty() {
                            break;
                        }
                        let (step, next) = options[rng.random_range(0..options.len())];
                        steps.push(step);
                        at = next;
                        if at == y {
                            if keep(&steps) {
                                found.insert((resource, steps.clone()), ());
                            }
                            break;
                        }
                    }
                }
            }
        }
    }
    Ok(found
        .into_keys()
        .map(|(resource, steps)| RelationPath {
            start: x,
            end: y,
            walk_probability: path_probability(kg, x, y, &steps, excluded),
            steps,
            resource,
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    view: &View<'_>,
    at: usize,
    y: usize,
    remaining: usize,
    resource: usize,
    on_path: &mut [bool],
    steps: &mut Vec<PathStep>,
    emit: &mut dyn FnMut(&[PathStep]),
) {
    if remaining == 0 {
        return;
    }
    for (step, v) in view.steps(at, resource) {
        if on_path[v] {
            continue;
        }
        steps.push(step);
        if v == y {
            emit(steps);
        } else {
            on_path[v] = true;
            dfs(view, v, y, remaining - 1, resource, on_path, steps, emit);
            on_path[v] = false;
        }
        steps.pop();
    }
}
