//! Knowledge graph of scientific terms: entities, typed relations grouped
//! by resource, weighted triples, relation paths and dataset splits.

mod aux;
mod cooccur;
mod paths;
mod split;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::TermCategory;
use crate::error::{Error, Result};

pub use aux::{ingest_auxiliary, IngestReport, SectionMap};
pub use cooccur::{extract_cooccurrence, EntityMention, Window};
pub use paths::{enumerate_paths, path_probability, walk_probability, PathMode, PathStep, RelationPath, Walk};
pub use split::{temporal_split, PaperTriples, SplitConfig, TripleSplit};

pub const CORE_RESOURCE: usize = 0;
pub const TASK_TASK: usize = 0;
pub const TASK_METHOD: usize = 1;
pub const METHOD_METHOD: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub name: String,
    pub category: Option<TermCategory>,
    /// Created while ingesting an auxiliary resource rather than from the corpus.
    pub external: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationType {
    pub name: String,
    pub resource: usize,
    pub directed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Inverse,
}

/// A triple with entity and relation ids resolved to strings, as in the
/// triple TSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub resource: String,
    pub weight: f64,
}

/// Index-level triple key: `(head, relation, tail)`.
pub type TripleKey = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeGraph {
    resources: Vec<String>,
    relations: Vec<RelationType>,
    relation_index: HashMap<(usize, String), usize>,
    entities: Vec<Entity>,
    entity_index: HashMap<String, usize>,
    triples: BTreeMap<TripleKey, f64>,
    adjacency: Vec<BTreeSet<(usize, Direction, usize)>>,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Inverse => "inverse",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Direction::Forward),
            "inverse" => Ok(Direction::Inverse),
            other => Err(Error::InvalidArgument(format!("unknown direction `{other}`"))),
        }
    }
}

/// Core relation between two categories, head first.
pub fn core_relation(a: TermCategory, b: TermCategory) -> (usize, bool) {
    match (a, b) {
        (TermCategory::Task, TermCategory::Task) => (TASK_TASK, false),
        (TermCategory::Method, TermCategory::Method) => (METHOD_METHOD, false),
        (TermCategory::Task, TermCategory::Method) => (TASK_METHOD, false),
        (TermCategory::Method, TermCategory::Task) => (TASK_METHOD, true),
    }
}

impl KnowledgeGraph {
    /// Empty graph holding the core resource and its three relations.
    pub fn new() -> Self {
        let mut kg = KnowledgeGraph::default();
        kg.resources.push("core".into());
        for (name, directed) in [("Task-Task", false), ("Task-Method", true), ("Method-Method", false)] {
            kg.add_relation(name, CORE_RESOURCE, directed).expect("core relations are distinct");
        }
        kg
    }

    pub fn resources(&self) -> &[String] {
        &self.resources
    }

    pub fn resource_id(&self, name: &str) -> Option<usize> {
        self.resources.iter().position(|r| r == name)
    }

    pub fn add_resource(&mut self, name: &str) -> usize {
        self.resource_id(name).unwrap_or_else(|| {
            self.resources.push(name.to_string());
            self.resources.len() - 1
        })
    }

    pub fn relations(&self) -> &[RelationType] {
        &self.relations
    }

    pub fn relation(&self, id: usize) -> &RelationType {
        &self.relations[id]
    }

    pub fn relation_id(&self, name: &str, resource: usize) -> Option<usize> {
        self.relation_index.get(&(resource, name.to_string())).copied()
    }

    /// Core relation id by name (`Task-Task`, `Task-Method`, `Method-Method`).
    pub fn core_relation_id(&self, name: &str) -> Result<usize> {
        self.relation_id(name, CORE_RESOURCE).ok_or_else(|| Error::UnknownRelation(name.to_string()))
    }

    pub fn add_relation(&mut self, name: &str, resource: usize, directed: bool) -> Result<usize> {
        if resource >= self.resources.len() {
            return Err(Error::InvalidArgument(format!("unknown resource {resource}")));
        }
        if let Some(id) = self.relation_id(name, resource) {
            if self.relations[id].directed != directed {
                return Err(Error::InvalidArgument(format!("relation {name} redeclared with another direction")));
            }
            return Ok(id);
        }
        self.relations.push(RelationType { name: name.to_string(), resource, directed });
        self.relation_index.insert((resource, name.to_string()), self.relations.len() - 1);
        Ok(self.relations.len() - 1)
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn entity(&self, idx: usize) -> &Entity {
        &self.entities[idx]
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn entity_idx(&self, id: &str) -> Option<usize> {
        self.entity_index.get(id).copied()
    }

    /// Adds an entity, or returns the existing index for its id.
    pub fn add_entity(&mut self, entity: Entity) -> usize {
        if let Some(&idx) = self.entity_index.get(&entity.id) {
            return idx;
        }
        self.entity_index.insert(entity.id.clone(), self.entities.len());
        self.entities.push(entity);
        self.adjacency.push(BTreeSet::new());
        self.entities.len() - 1
    }

    pub fn entities_in_category(&self, category: TermCategory) -> Vec<usize> {
        (0..self.entities.len()).filter(|&i| self.entities[i].category == Some(category)).collect()
    }

    /// Stored orientation of a triple: symmetric relations keep the
    /// lexicographically smaller entity id as head.
    pub fn canonical(&self, head: usize, relation: usize, tail: usize) -> TripleKey {
        if !self.relations[relation].directed && self.entities[tail].id < self.entities[head].id {
            (tail, relation, head)
        } else {
            (head, relation, tail)
        }
    }

    /// Adds `weight` to the triple, creating it if needed.
    pub fn add_triple(&mut self, head: usize, relation: usize, tail: usize, weight: f64) -> Result<()> {
        if head >= self.entities.len() || tail >= self.entities.len() {
            return Err(Error::UnknownEntity(format!("#{}", head.max(tail))));
        }
        if relation >= self.relations.len() {
            return Err(Error::UnknownRelation(format!("#{relation}")));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidRecord(format!("triple weight {weight} must be positive")));
        }
        let rel = &self.relations[relation];
        if rel.resource == CORE_RESOURCE {
            if head == tail {
                return Err(Error::InvalidRecord(format!("self-loop on {}", self.entities[head].id)));
            }
            let expected = match relation {
                TASK_TASK => (TermCategory::Task, TermCategory::Task),
                TASK_METHOD => (TermCategory::Task, TermCategory::Method),
                _ => (TermCategory::Method, TermCategory::Method),
            };
            let (hc, tc) = (self.entities[head].category, self.entities[tail].category);
            if hc.is_some_and(|c| c != expected.0) || tc.is_some_and(|c| c != expected.1) {
                return Err(Error::InvalidRecord(format!(
                    "{} {} {} does not match the relation's categories",
                    self.entities[head].id, rel.name, self.entities[tail].id
                )));
            }
        }
        let key = self.canonical(head, relation, tail);
        let entry = self.triples.entry(key).or_insert(0.0);
        if *entry == 0.0 {
            let (h, r, t) = key;
            if self.relations[r].directed {
                self.adjacency[h].insert((r, Direction::Forward, t));
                self.adjacency[t].insert((r, Direction::Inverse, h));
            } else {
                self.adjacency[h].insert((r, Direction::Forward, t));
                self.adjacency[t].insert((r, Direction::Forward, h));
            }
        }
        *entry += weight;
        Ok(())
    }

    /// Weight of a triple in either orientation for symmetric relations.
    pub fn weight(&self, head: usize, relation: usize, tail: usize) -> Option<f64> {
        self.triples.get(&self.canonical(head, relation, tail)).copied()
    }

    pub fn has_triple(&self, head: usize, relation: usize, tail: usize) -> bool {
        self.weight(head, relation, tail).is_some()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    /// Stored triples in key order.
    pub fn triple_keys(&self) -> impl Iterator<Item = (TripleKey, f64)> + '_ {
        self.triples.iter().map(|(&k, &w)| (k, w))
    }

    /// Stored triples of one relation in key order.
    pub fn triples_of(&self, relation: usize) -> Vec<(TripleKey, f64)> {
        self.triple_keys().filter(|((_, r, _), _)| *r == relation).collect()
    }

    /// Outgoing steps `(relation, direction, neighbour)` of a node.
    pub fn steps(&self, node: usize) -> impl Iterator<Item = (usize, Direction, usize)> + '_ {
        self.adjacency[node].iter().copied()
    }

    /// Neighbours reached from `node` by one `(relation, direction)` step.
    pub fn step_targets(&self, node: usize, relation: usize, direction: Direction) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[node]
            .range((relation, direction, 0)..=(relation, direction, usize::MAX))
            .map(|&(_, _, v)| v)
    }

    /// Stored key of the edge traversed by a step from `u` to `v`.
    pub fn step_key(&self, u: usize, relation: usize, direction: Direction, v: usize) -> TripleKey {
        match direction {
            Direction::Forward => self.canonical(u, relation, v),
            Direction::Inverse => (v, relation, u),
        }
    }

    pub fn to_triple(&self, key: TripleKey, weight: f64) -> Triple {
        let (h, r, t) = key;
        let rel = &self.relations[r];
        Triple {
            head: self.entities[h].id.clone(),
            relation: rel.name.clone(),
            tail: self.entities[t].id.clone(),
            resource: self.resources[rel.resource].clone(),
            weight,
        }
    }

    /// All triples with string ids, in key order.
    pub fn triples(&self) -> Vec<Triple> {
        self.triple_keys().map(|(k, w)| self.to_triple(k, w)).collect()
    }

    /// Adds a string-level triple whose entities and relation already exist.
    pub fn insert_triple(&mut self, triple: &Triple) -> Result<TripleKey> {
        let h = self.entity_idx(&triple.head).ok_or_else(|| Error::UnknownEntity(triple.head.clone()))?;
        let t = self.entity_idx(&triple.tail).ok_or_else(|| Error::UnknownEntity(triple.tail.clone()))?;
        let unknown = || Error::UnknownRelation(format!("{}/{}", triple.resource, triple.relation));
        let res = self.resource_id(&triple.resource).ok_or_else(unknown)?;
        let r = self.relation_id(&triple.relation, res).ok_or_else(unknown)?;
        self.add_triple(h, r, t, triple.weight)?;
        Ok(self.canonical(h, r, t))
    }

    /// Graph with the same entities, resources and relations but no triples.
    pub fn empty_like(&self) -> Self {
        KnowledgeGraph {
            triples: BTreeMap::new(),
            adjacency: vec![BTreeSet::new(); self.entities.len()],
            ..self.clone()
        }
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            resources: self.resources.clone(),
            relations: self.relations.clone(),
            entities: self.entities.clone(),
            triple_files: vec![TRIPLE_FILE.into()],
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
        let path = dir.join(TRIPLE_FILE);
        let mut buf = Vec::new();
        write_triples(&self.triples(), &mut buf)?;
        std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != MANIFEST_FORMAT || manifest.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported graph store {} v{}",
                manifest.format, manifest.version
            )));
        }
        if manifest.resources.first().map(String::as_str) != Some("core") {
            return Err(Error::CorruptStore("first resource must be `core`".into()));
        }
        let mut kg = KnowledgeGraph { resources: manifest.resources, ..Default::default() };
        for rel in &manifest.relations {
            kg.add_relation(&rel.name, rel.resource, rel.directed)?;
        }
        if kg.relations.len() < 3 || kg.relations[..3] != KnowledgeGraph::new().relations[..] {
            return Err(Error::CorruptStore("core relations missing or altered".into()));
        }
        for e in manifest.entities {
            kg.add_entity(e);
        }
        for file in &manifest.triple_files {
            for t in read_triples(dir.join(file))? {
                kg.insert_triple(&t)?;
            }
        }
        Ok(kg)
    }
}

const MANIFEST_FORMAT: &str = "scigraph-kg";
const MANIFEST_VERSION: u32 = 1;
const TRIPLE_FILE: &str = "triples.tsv";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    resources: Vec<String>,
    relations: Vec<RelationType>,
    entities: Vec<Entity>,
    triple_files: Vec<String>,
}

/// `head_id  relation  tail_id  resource  weight`, one triple per line.
pub fn write_triples<W: Write>(triples: &[Triple], mut out: W) -> Result<()> {
    for t in triples {
        writeln!(out, "{}\t{}\t{}\t{}\t{}", t.head, t.relation, t.tail, t.resource, t.weight)
            .map_err(|e| Error::io("<triples>", e))?;
    }
    Ok(())
}

pub fn parse_triples(text: &str, origin: &Path) -> Result<Vec<Triple>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::parse(origin, i + 1, format!("expected 5 columns, found {}", f.len())));
        }
        let weight: f64 = f[4].parse().map_err(|_| Error::parse(origin, i + 1, format!("bad weight `{}`", f[4])))?;
        out.push(Triple {
            head: f[0].into(),
            relation: f[1].into(),
            tail: f[2].into(),
            resource: f[3].into(),
            weight,
        });
    }
    Ok(out)
}

pub fn read_triples(path: impl AsRef<Path>) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_triples(&text, path)
}
