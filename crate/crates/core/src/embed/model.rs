use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::io::{read_array, write_array};
use crate::error::{Error, Result};
use crate::kg::{Direction, KnowledgeGraph, PathStep, RelationPath};

/// Entity vectors, one matrix per relation (core and auxiliary), and one
/// weight per (resource, path length).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    dim: usize,
    max_path_len: usize,
    entity_ids: Vec<String>,
    relation_keys: Vec<(String, String)>,
    resources: Vec<String>,
    pub(crate) entities: Vec<DVector<f64>>,
    pub(crate) relations: Vec<DMatrix<f64>>,
    /// `path_weights[resource][len - 1]`.
    pub(crate) path_weights: Vec<Vec<f64>>,
}

impl EmbeddingModel {
    /// Entity vectors drawn from N(0, 1/dim); relation matrices start at the
    /// identity plus N(0, 0.01²) noise; path weights start at zero.
    pub fn init(kg: &KnowledgeGraph, dim: usize, max_path_len: usize, rng: &mut impl Rng) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidArgument(format!("embedding dimension must be at least 2, got {dim}")));
        }
        if dim > 512 {
            warn!("embedding dimension {dim} is large; training will be slow");
        }
        let entity_dist = Normal::new(0.0, 1.0 / (dim as f64).sqrt()).expect("valid normal");
        let noise = Normal::new(0.0, 0.01).expect("valid normal");
        let entities = (0..kg.num_entities())
            .map(|_| DVector::from_fn(dim, |_, _| entity_dist.sample(rng)))
            .collect();
        let relations = (0..kg.relations().len())
            .map(|_| DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { 0.0 } + noise.sample(rng)))
            .collect();
        Ok(EmbeddingModel {
            dim,
            max_path_len,
            entity_ids: kg.entities().iter().map(|e| e.id.clone()).collect(),
            relation_keys: kg
                .relations()
                .iter()
                .map(|r| (r.name.clone(), kg.resources()[r.resource].clone()))
                .collect(),
            resources: kg.resources().to_vec(),
            entities,
            relations,
            path_weights: vec![vec![0.0; max_path_len]; kg.resources().len()],
        })
    }

    /// Model with explicit parameters; mainly for tests and tooling.
    pub fn from_parts(
        entities: Vec<DVector<f64>>,
        relations: Vec<DMatrix<f64>>,
        path_weights: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let dim = entities.first().map(|v| v.len()).or_else(|| relations.first().map(|m| m.nrows())).unwrap_or(0);
        if dim < 2
            || entities.iter().any(|v| v.len() != dim)
            || relations.iter().any(|m| m.nrows() != dim || m.ncols() != dim)
        {
            return Err(Error::Shape("inconsistent embedding dimensions".into()));
        }
        let max_path_len = path_weights.first().map_or(0, Vec::len);
        if path_weights.iter().any(|w| w.len() != max_path_len) {
            return Err(Error::Shape("ragged path weights".into()));
        }
        Ok(EmbeddingModel {
            dim,
            max_path_len,
            entity_ids: (0..entities.len()).map(|i| format!("e{i}")).collect(),
            relation_keys: (0..relations.len()).map(|i| (format!("r{i}"), "core".to_string())).collect(),
            resources: (0..path_weights.len().max(1)).map(|k| if k == 0 { "core".into() } else { format!("res{k}") }).collect(),
            entities,
            relations,
            path_weights,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_path_len(&self) -> usize {
        self.max_path_len
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn entity_ids(&self) -> &[String] {
        &self.entity_ids
    }

    pub fn entity_vector(&self, e: usize) -> &DVector<f64> {
        &self.entities[e]
    }

    pub fn relation_matrix(&self, r: usize) -> &DMatrix<f64> {
        &self.relations[r]
    }

    pub fn path_weight(&self, resource: usize, len: usize) -> f64 {
        self.path_weights
            .get(resource)
            .and_then(|w| w.get(len.wrapping_sub(1)))
            .copied()
            .unwrap_or(0.0)
    }

    /// Multiplies every entity vector by `c`.
    pub fn scale_entities(&mut self, c: f64) {
        self.entities.iter_mut().for_each(|v| *v *= c);
    }

    /// Checks that the model was trained on a graph with this entity and
    /// relation layout.
    pub fn check_compatible(&self, kg: &KnowledgeGraph) -> Result<()> {
        let same_entities = kg.num_entities() == self.entity_ids.len()
            && kg.entities().iter().zip(&self.entity_ids).all(|(e, id)| &e.id == id);
        let same_relations = kg.relations().len() == self.relation_keys.len()
            && kg
                .relations()
                .iter()
                .zip(&self.relation_keys)
                .all(|(r, (name, res))| &r.name == name && &kg.resources()[r.resource] == res);
        if same_entities && same_relations {
            Ok(())
        } else {
            Err(Error::Shape("embedding model does not match the graph's entities and relations".into()))
        }
    }

    fn check(&self, e: usize, r: usize) -> Result<()> {
        if e >= self.entities.len() {
            return Err(Error::UnknownEntity(format!("#{e}")));
        }
        if r >= self.relations.len() {
            return Err(Error::UnknownRelation(format!("#{r}")));
        }
        Ok(())
    }

    /// `v_xᵀ Q_r v_y`.
    pub fn bilinear_score(&self, x: usize, r: usize, y: usize) -> Result<f64> {
        self.check(x.max(y), r)?;
        Ok(self.entities[x].dot(&(&self.relations[r] * &self.entities[y])))
    }

    pub(crate) fn step_matrix(&self, step: PathStep) -> DMatrix<f64> {
        match step.direction {
            Direction::Forward => self.relations[step.relation].clone(),
            Direction::Inverse => self.relations[step.relation].transpose(),
        }
    }

    /// Ordered product of the step matrices; inverse steps use `Qᵀ`.
    pub fn path_embedding(&self, steps: &[PathStep]) -> Result<DMatrix<f64>> {
        if let Some(s) = steps.iter().find(|s| s.relation >= self.relations.len()) {
            return Err(Error::UnknownRelation(format!("#{}", s.relation)));
        }
        let mut out = DMatrix::identity(self.dim, self.dim);
        for &s in steps {
            out = match s.direction {
                Direction::Forward => &out * &self.relations[s.relation],
                Direction::Inverse => &out * self.relations[s.relation].transpose(),
            };
        }
        Ok(out)
    }

    /// `Σ_π w_{resource,|π|} P(π) φ(π)`; zero when there are no paths.
    pub fn path_feature(&self, paths: &[RelationPath]) -> Result<DMatrix<f64>> {
        let mut f = DMatrix::zeros(self.dim, self.dim);
        for p in paths {
            let c = self.path_weight(p.resource, p.steps.len()) * p.walk_probability;
            if c != 0.0 {
                f += self.path_embedding(&p.steps)? * c;
            }
        }
        Ok(f)
    }

    /// Bilinear score plus `⟨vec F, vec Q_r⟩` for the given paths between
    /// `x` and `y`.
    pub fn combined_score(&self, x: usize, r: usize, y: usize, paths: &[RelationPath]) -> Result<f64> {
        let base = self.bilinear_score(x, r, y)?;
        if paths.is_empty() {
            return Ok(base);
        }
        Ok(base + self.path_feature(paths)?.dot(&self.relations[r]))
    }

    /// Flat parameter vector: entity vectors, relation matrices (row-major),
    /// then path weights.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for v in &self.entities {
            out.extend(v.iter());
        }
        for m in &self.relations {
            out.extend(m.transpose().iter());
        }
        for w in &self.path_weights {
            out.extend(w.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, theta: &[f64]) -> Result<()> {
        let d = self.dim;
        let total = self.entities.len() * d + self.relations.len() * d * d + self.path_weights.len() * self.max_path_len;
        if theta.len() != total {
            return Err(Error::Shape(format!("{} parameters for a model with {total}", theta.len())));
        }
        let mut it = theta.iter().copied();
        for v in &mut self.entities {
            v.iter_mut().for_each(|x| *x = it.next().expect("length checked"));
        }
        for m in &mut self.relations {
            *m = DMatrix::from_row_iterator(d, d, it.by_ref().take(d * d));
        }
        for w in &mut self.path_weights {
            w.iter_mut().for_each(|x| *x = it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let d = self.dim;
        let entities: Vec<f64> = self.entities.iter().flat_map(|v| v.iter().copied()).collect();
        let relations: Vec<f64> = self.relations.iter().flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>()).collect();
        let weights: Vec<f64> = self.path_weights.iter().flatten().copied().collect();
        let arrays = vec![
            ArrayEntry { name: "entities".into(), file: "entities.bin".into(), shape: vec![self.entities.len(), d] },
            ArrayEntry { name: "relations".into(), file: "relations.bin".into(), shape: vec![self.relations.len(), d, d] },
            ArrayEntry {
                name: "path_weights".into(),
                file: "path_weights.bin".into(),
                shape: vec![self.path_weights.len(), self.max_path_len],
            },
        ];
        for (entry, data) in arrays.iter().zip([&entities, &relations, &weights]) {
            write_array(&dir.join(&entry.file), &entry.shape, data)?;
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            dim: d,
            max_path_len: self.max_path_len,
            entities: self.entity_ids.clone(),
            relations: self
                .relation_keys
                .iter()
                .map(|(name, resource)| RelationEntry { name: name.clone(), resource: resource.clone() })
                .collect(),
            resources: self.resources.clone(),
            arrays,
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format != FORMAT || m.version != VERSION {
            return Err(Error::Format(format!("unsupported embedding model {} v{}", m.format, m.version)));
        }
        let d = m.dim;
        let mut arrays: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for entry in &m.arrays {
            let (shape, data) = read_array(&dir.join(&entry.file))?;
            if shape != entry.shape {
                return Err(Error::Format(format!("{} has shape {shape:?}, manifest says {:?}", entry.file, entry.shape)));
            }
            arrays.insert(entry.name.clone(), data);
        }
        let take = |name: &str, len: usize| -> Result<Vec<f64>> {
            match arrays.get(name) {
                Some(a) if a.len() == len => Ok(a.clone()),
                _ => Err(Error::Format(format!("array `{name}` missing or of the wrong size"))),
            }
        };
        let n = m.entities.len();
        let r = m.relations.len();
        let entities = take("entities", n * d)?;
        let relations = take("relations", r * d * d)?;
        let weights = take("path_weights", m.resources.len() * m.max_path_len)?;
        let resource_count = m.resources.len();
        Ok(EmbeddingModel {
            dim: d,
            max_path_len: m.max_path_len,
            entity_ids: m.entities,
            relation_keys: m.relations.into_iter().map(|e| (e.name, e.resource)).collect(),
            resources: m.resources,
            entities: entities.chunks(d.max(1)).map(DVector::from_column_slice).collect(),
            relations: relations.chunks((d * d).max(1)).map(|c| DMatrix::from_row_slice(d, d, c)).collect(),
            path_weights: if m.max_path_len == 0 {
                vec![Vec::new(); resource_count]
            } else {
                weights.chunks(m.max_path_len).map(<[f64]>::to_vec).collect()
            },
        })
    }
}

const FORMAT: &str = "scigraph-embedding";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    file: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RelationEntry {
    name: String,
    resource: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    dim: usize,
    max_path_len: usize,
    entities: Vec<String>,
    relations: Vec<RelationEntry>,
    resources: Vec<String>,
    arrays: Vec<ArrayEntry>,
}
