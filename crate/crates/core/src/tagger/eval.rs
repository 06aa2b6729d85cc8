use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Exact boundaries; category ignored.
    Identification,
    /// Exact boundaries and category.
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// Precision is 0 with no predictions and recall 0 with no gold items.
    pub fn from_counts(true_pos: usize, predicted: usize, gold: usize) -> Self {
        let precision = if predicted == 0 { 0.0 } else { true_pos as f64 / predicted as f64 };
        let recall = if gold == 0 { 0.0 } else { true_pos as f64 / gold as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Prf { precision, recall, f1 }
    }
}

/// Span-level precision, recall and F1.
pub fn span_f1(gold: &[Span], predicted: &[Span], mode: MatchMode) -> Prf {
    let key = |s: &Span| {
        let cat = match mode {
            MatchMode::Identification => String::new(),
            MatchMode::Classification => s.category.clone(),
        };
        (s.doc_id.clone(), s.sentence_index, s.start, s.end, cat)
    };
    let gold_set: HashSet<_> = gold.iter().map(key).collect();
    let pred_set: HashSet<_> = predicted.iter().map(key).collect();
    let tp = pred_set.intersection(&gold_set).count();
    Prf::from_counts(tp, pred_set.len(), gold_set.len())
}
