use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The two term categories of the knowledge graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermCategory {
    Task,
    Method,
}

impl fmt::Display for TermCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermCategory::Task => "Task",
            TermCategory::Method => "Method",
        })
    }
}

impl FromStr for TermCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Task" => Ok(TermCategory::Task),
            "Method" => Ok(TermCategory::Method),
            other => Err(Error::InvalidArgument(format!("unknown term category `{other}`"))),
        }
    }
}

/// Collapses dataset-specific span labels onto [`TermCategory`].
///
/// The file format is one `Label = Target` mapping per line, where target is
/// `Task`, `Method` or `-` (drop). `#` starts a comment. Labels absent from
/// the table are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMap {
    table: BTreeMap<String, Option<TermCategory>>,
}

impl Default for CategoryMap {
    fn default() -> Self {
        use TermCategory::*;
        let table = [
            ("Task", Some(Task)),
            ("Method", Some(Method)),
            ("Process", Some(Method)),
            ("Technique", Some(Method)),
            ("Domain", Some(Task)),
            ("Focus", None),
            ("Material", None),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        CategoryMap { table }
    }
}

impl CategoryMap {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (label, target) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, "expected `Label = Target`"))?;
            let target = match target.trim() {
                "-" => None,
                t => Some(t.parse().map_err(|e: Error| Error::parse(origin, i + 1, e.to_string()))?),
            };
            table.insert(label.trim().to_string(), target);
        }
        Ok(CategoryMap { table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn map(&self, label: &str) -> Option<TermCategory> {
        self.table.get(label).copied().flatten()
    }
}
