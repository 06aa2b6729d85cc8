use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Entity, KnowledgeGraph};
use crate::error::{Error, Result};
use crate::linker::{canonical_id, normalize, ClusterIndex};

/// Relation-label rewrites for auxiliary resources, e.g. plural
/// encyclopedia section headings onto one label. Labels without an entry
/// are kept as they are.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SectionMap {
    map: BTreeMap<String, String>,
}

const DEFAULT_SECTIONS: &[(&str, &str)] = &[
    ("Overview", "Description"),
    ("Definition", "Description"),
    ("Extensions", "Extension"),
    ("Examples", "Example"),
    ("Applications", "Application"),
    ("Uses", "Application"),
    ("Models", "Models and Methods"),
    ("Methods", "Models and Methods"),
    ("Algorithms", "Models and Methods"),
    ("Implementations", "Tools"),
    ("Approaches", "Approach"),
    ("See Also", "See also"),
    ("Related", "See also"),
];

impl Default for SectionMap {
    fn default() -> Self {
        SectionMap {
            map: DEFAULT_SECTIONS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        }
    }
}

impl SectionMap {
    /// Lines of `Label = Target`; `#` starts a comment.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (from, to) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `Label = Target`"))?;
            let (from, to) = (from.trim(), to.trim());
            if from.is_empty() || to.is_empty() {
                return Err(Error::parse(origin, i + 1, "empty label"));
            }
            map.insert(from.to_string(), to.to_string());
        }
        Ok(SectionMap { map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn map<'a>(&'a self, label: &'a str) -> &'a str {
        self.map.get(label).map_or(label, String::as_str)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub new_entities: usize,
    pub new_triples: usize,
    pub skipped_self_loops: usize,
}

struct Row {
    head: String,
    label: String,
    tail: String,
    weight: f64,
}

fn parse_rows(text: &str, origin: &Path) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::parse(origin, i + 1, format!("expected 4 tab-separated columns, found {}", f.len())));
        }
        if f[..3].iter().any(|x| x.is_empty()) {
            return Err(Error::parse(origin, i + 1, "empty field"));
        }
        let weight: f64 = f[3]
            .parse()
            .map_err(|_| Error::parse(origin, i + 1, format!("bad weight `{}`", f[3])))?;
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::parse(origin, i + 1, format!("weight {weight} must be positive")));
        }
        rows.push(Row { head: f[0].into(), label: f[1].into(), tail: f[2].into(), weight });
    }
    Ok(rows)
}

/// Merges an auxiliary relation file (`head<TAB>label<TAB>tail<TAB>weight`)
/// into the graph under resource `resource_name`. Surfaces are resolved
/// through the cluster index, then by normalized entity name; anything
/// unresolved becomes a new external entity. The whole file is validated
/// before the graph is touched.
pub fn ingest_auxiliary(
    kg: &mut KnowledgeGraph,
    path: impl AsRef<Path>,
    resource_name: &str,
    clusters: Option<&ClusterIndex>,
    sections: &SectionMap,
) -> Result<IngestReport> {
    let path = path.as_ref();
    if resource_name == "core" || resource_name.is_empty() {
        return Err(Error::InvalidArgument(format!("`{resource_name}` cannot name an auxiliary resource")));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rows = parse_rows(&text, path)?;
    let mut report = IngestReport { rows: rows.len(), ..Default::default() };
    if rows.is_empty() {
        return Ok(report);
    }
    let resource = kg.add_resource(resource_name);
    let mut by_name: HashMap<String, usize> = HashMap::new();
    for (i, e) in kg.entities().iter().enumerate() {
        by_name.entry(normalize(&e.name)).or_insert(i);
    }
    let mut resolve = |kg: &mut KnowledgeGraph, surface: &str, report: &mut IngestReport| -> usize {
        if let Some(idx) = clusters
            .and_then(|c| c.lookup(surface))
            .and_then(|c| kg.entity_idx(&c.canonical_id))
        {
            return idx;
        }
        let key = normalize(surface);
        if let Some(&idx) = by_name.get(&key) {
            return idx;
        }
        let id = canonical_id(surface);
        if let Some(idx) = kg.entity_idx(&id) {
            return idx;
        }
        report.new_entities += 1;
        let idx = kg.add_entity(Entity { id, name: surface.to_string(), category: None, external: true });
        by_name.insert(key, idx);
        idx
    };
    for row in &rows {
        let h = resolve(kg, &row.head, &mut report);
        let t = resolve(kg, &row.tail, &mut report);
        if h == t {
            report.skipped_self_loops += 1;
            continue;
        }
        let r = kg.add_relation(sections.map(&row.label), resource, true)?;
        if !kg.has_triple(h, r, t) {
            report.new_triples += 1;
        }
        kg.add_triple(h, r, t, row.weight)?;
    }
    Ok(report)
}
