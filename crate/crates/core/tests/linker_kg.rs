mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scigraph::corpus::TermCategory;
use scigraph::kg::{extract_cooccurrence, parse_triples, write_triples, EntityMention, KnowledgeGraph, Window};
use scigraph::linker::{canonical_id, normalize};

use common::*;

fn phrase() -> impl Strategy<Value = String> {
    proptest::collection::vec("[A-Za-z]{1,8}", 1..4).prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn normalize_is_idempotent(s in phrase()) {
        let once = normalize(&s);
        prop_assert_eq!(normalize(&once), once);
    }

    #[test]
    fn canonical_id_is_idempotent_and_case_blind(s in phrase()) {
        let id = canonical_id(&s);
        prop_assert_eq!(canonical_id(&id), id.clone());
        prop_assert_eq!(canonical_id(&s.to_uppercase()), id.clone());
        prop_assert!(!id.contains(' '));
    }

    #[test]
    fn cooccurrence_counts_each_sentence_once(seed in any::<u64>(), n in 1usize..30) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mentions: Vec<EntityMention> = (0..n)
            .map(|_| {
                let method = rng.random_bool(0.5);
                EntityMention {
                    doc_id: format!("d{}", rng.random_range(0..3)),
                    sentence_index: rng.random_range(0..2),
                    entity: format!("{}{}", if method { "m" } else { "t" }, rng.random_range(0..4)),
                    category: if method { TermCategory::Method } else { TermCategory::Task },
                    confidence: 1.0,
                }
            })
            .collect();
        let triples = extract_cooccurrence(&mentions, Window::Sentence, 0.0);
        for t in &triples {
            let oracle = (0..3)
                .flat_map(|d| (0..2).map(move |s| (format!("d{d}"), s)))
                .filter(|(d, s)| {
                    let has = |e: &str| mentions.iter().any(|m| &m.doc_id == d && m.sentence_index == *s && m.entity == e);
                    has(&t.head) && has(&t.tail)
                })
                .count();
            prop_assert_eq!(t.weight, oracle as f64);
            prop_assert!(t.head != t.tail);
            if t.relation == "Task-Method" {
                prop_assert!(t.head.starts_with('t') && t.tail.starts_with('m'));
            }
        }
    }

    #[test]
    fn triple_table_round_trips(seed in any::<u64>()) {
        let kg = random_kg(&mut ChaCha8Rng::seed_from_u64(seed));
        let triples = kg.triples();
        let mut buf = Vec::new();
        write_triples(&triples, &mut buf).unwrap();
        let back = parse_triples(std::str::from_utf8(&buf).unwrap(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, triples);
    }
}

#[test]
fn graph_directory_round_trips() {
    let kg = random_kg(&mut ChaCha8Rng::seed_from_u64(1));
    let dir = tempfile::tempdir().unwrap();
    kg.save(dir.path()).unwrap();
    assert_eq!(KnowledgeGraph::load(dir.path()).unwrap(), kg);
}
