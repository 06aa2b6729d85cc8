use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{core_relation, Triple, TASK_METHOD};
use crate::corpus::TermCategory;

/// A linked term occurrence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub doc_id: String,
    pub sentence_index: usize,
    pub entity: String,
    pub category: TermCategory,
    pub confidence: f64,
}

/// Co-occurrence context. Paragraph and section windows fall back to the
/// whole document because abstracts carry no finer structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Sentence,
    Paragraph,
    Section,
    Document,
}

/// Core triples for every pair of distinct entities sharing a window, typed
/// by their categories (Task-Method triples always have the task as head).
/// Each window contributes at most 1 to a pair's weight. Mentions below
/// `min_confidence` are ignored. Output is sorted by head, relation, tail.
pub fn extract_cooccurrence(mentions: &[EntityMention], window: Window, min_confidence: f64) -> Vec<Triple> {
    let mut windows: BTreeMap<(String, Option<usize>), BTreeMap<String, TermCategory>> = BTreeMap::new();
    for m in mentions.iter().filter(|m| m.confidence >= min_confidence) {
        let sentence = (window == Window::Sentence).then_some(m.sentence_index);
        windows.entry((m.doc_id.clone(), sentence)).or_default().insert(m.entity.clone(), m.category);
    }
    let names = ["Task-Task", "Task-Method", "Method-Method"];
    let mut counts: BTreeMap<(String, usize, String), f64> = BTreeMap::new();
    for members in windows.values() {
        let list: Vec<(&String, &TermCategory)> = members.iter().collect();
        for i in 0..list.len() {
            for j in i + 1..list.len() {
                let (a, ca) = list[i];
                let (b, cb) = list[j];
                let (rel, swap) = core_relation(*ca, *cb);
                let (head, tail) = if swap || (rel != TASK_METHOD && b < a) { (b, a) } else { (a, b) };
                *counts.entry((head.clone(), rel, tail.clone())).or_default() += 1.0;
            }
        }
    }
    let mut triples: Vec<Triple> = counts
        .into_iter()
        .map(|((head, rel, tail), weight)| Triple {
            head,
            relation: names[rel].to_string(),
            tail,
            resource: "core".into(),
            weight,
        })
        .collect();
    triples.sort_by(|a, b| (&a.head, &a.relation, &a.tail).cmp(&(&b.head, &b.relation, &b.tail)));
    triples
}
