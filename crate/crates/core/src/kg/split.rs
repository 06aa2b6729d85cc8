use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use super::Triple;

/// Triples extracted from one paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperTriples {
    pub paper_id: String,
    pub year: i32,
    pub venue: String,
    pub triples: Vec<Triple>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub cutoff_year: i32,
    /// Venue of the development papers; `None` takes every cutoff-year paper.
    pub dev_venue: Option<String>,
    /// Entity ids whose papers are held out.
    pub holdout: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TripleSplit {
    pub train: Vec<Triple>,
    pub dev: Vec<Triple>,
    pub test: Vec<Triple>,
    pub warnings: Vec<String>,
}

type Key = (String, String, String, String);

fn key(t: &Triple) -> Key {
    (t.head.clone(), t.relation.clone(), t.tail.clone(), t.resource.clone())
}

fn collect(map: BTreeMap<Key, f64>) -> Vec<Triple> {
    map.into_iter()
        .map(|((head, relation, tail, resource), weight)| Triple { head, relation, tail, resource, weight })
        .collect()
}

/// Time-based split. Papers mentioning a held-out entity never reach train
/// or dev; from those published after the cutoff, the triples involving a
/// held-out entity form the test set. Train takes earlier papers, dev the
/// cutoff-year papers of the dev venue. Test triples already in train are
/// dropped. Weights of repeated triples are summed.
pub fn temporal_split(papers: &[PaperTriples], config: &SplitConfig) -> TripleSplit {
    let holdout: BTreeSet<&str> = config.holdout.iter().map(String::as_str).collect();
    let involves = |t: &Triple| holdout.contains(t.head.as_str()) || holdout.contains(t.tail.as_str());
    let mut train: BTreeMap<Key, f64> = BTreeMap::new();
    let mut dev: BTreeMap<Key, f64> = BTreeMap::new();
    let mut test: BTreeMap<Key, f64> = BTreeMap::new();
    for paper in papers {
        let about_holdout = paper.triples.iter().any(&involves);
        if about_holdout {
            if paper.year > config.cutoff_year {
                for t in paper.triples.iter().filter(|t| involves(t)) {
                    *test.entry(key(t)).or_default() += t.weight;
                }
            }
            continue;
        }
        let target = if paper.year < config.cutoff_year {
            Some(&mut train)
        } else if paper.year == config.cutoff_year
            && config.dev_venue.as_ref().is_none_or(|v| v.eq_ignore_ascii_case(&paper.venue))
        {
            Some(&mut dev)
        } else {
            None
        };
        if let Some(map) = target {
            for t in &paper.triples {
                *map.entry(key(t)).or_default() += t.weight;
            }
        }
    }
    test.retain(|k, _| !train.contains_key(k));
    let mut warnings = Vec::new();
    for h in &config.holdout {
        if !test.keys().any(|(a, _, b, _)| a == h || b == h) {
            let msg = format!("held-out entity `{h}` has no triples after {}", config.cutoff_year);
            warn!("{msg}");
            warnings.push(msg);
        }
    }
    TripleSplit { train: collect(train), dev: collect(dev), test: collect(test), warnings }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(h: &str, r: &str, tail: &str) -> Triple {
        Triple { head: h.into(), relation: r.into(), tail: tail.into(), resource: "core".into(), weight: 1.0 }
    }

    fn paper(id: &str, year: i32, venue: &str, triples: Vec<Triple>) -> PaperTriples {
        PaperTriples { paper_id: id.into(), year, venue: venue.into(), triples }
    }

    fn config() -> SplitConfig {
        SplitConfig { cutoff_year: 2016, dev_venue: Some("ACL".into()), holdout: vec!["gan".into()] }
    }

    #[test]
    fn periods_and_holdout() {
        let papers = vec![
            paper("p2014", 2014, "NIPS", vec![t("image_generation", "Task-Method", "vae")]),
            paper("p2016acl", 2016, "ACL", vec![t("parsing", "Task-Method", "crf")]),
            paper("p2016other", 2016, "ICML", vec![t("parsing", "Task-Method", "svm")]),
            paper("gan2015", 2015, "NIPS", vec![t("image_generation", "Task-Method", "gan")]),
            paper(
                "gan2017",
                2017,
                "ICLR",
                vec![t("image_generation", "Task-Method", "gan"), t("image_generation", "Task-Method", "vae")],
            ),
        ];
        let split = temporal_split(&papers, &config());
        assert_eq!(split.train, vec![t("image_generation", "Task-Method", "vae")]);
        assert_eq!(split.dev, vec![t("parsing", "Task-Method", "crf")]);
        assert_eq!(split.test, vec![t("image_generation", "Task-Method", "gan")]);
        assert!(split.warnings.is_empty());
    }

    #[test]
    fn earlier_holdout_papers_excluded() {
        let papers = vec![
            paper("old", 2015, "ACL", vec![t("a", "Task-Method", "gan")]),
            paper("new", 2017, "ACL", vec![t("a", "Task-Method", "gan")]),
        ];
        // the old paper mentions the held-out entity, so it is excluded
        let split = temporal_split(&papers, &config());
        assert_eq!(split.test.len(), 1);
        assert!(split.train.is_empty());
    }

    #[test]
    fn filter_drops_train_overlap() {
        let papers = vec![
            paper("old", 2014, "ACL", vec![t("x", "Task-Task", "y")]),
            paper("new", 2017, "ACL", vec![t("x", "Task-Task", "y"), t("x", "Task-Method", "gan")]),
        ];
        let split = temporal_split(&papers, &config());
        assert_eq!(split.test, vec![t("x", "Task-Method", "gan")]);
        let papers = vec![
            paper("old", 2014, "ACL", vec![t("gan", "Task-Task", "y")]),
            paper("mid", 2014, "ACL", vec![t("z", "Task-Task", "y")]),
        ];
        let split = temporal_split(&papers, &config());
        assert_eq!(split.warnings.len(), 1);
    }
}
