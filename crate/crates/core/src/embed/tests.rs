use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::corpus::TermCategory;
use crate::kg::tests::entity;
use crate::kg::{enumerate_paths, Direction, KnowledgeGraph, PathMode, PathStep, RelationPath, TripleKey, TASK_METHOD, TASK_TASK};

fn random_graph(rng: &mut impl Rng) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new();
    for i in 0..5 {
        kg.add_entity(entity(&format!("t{i}"), Some(TermCategory::Task)));
    }
    for i in 0..5 {
        kg.add_entity(entity(&format!("m{i}"), Some(TermCategory::Method)));
    }
    let wiki = kg.add_resource("wiki");
    let aux = kg.add_relation("See also", wiki, true).unwrap();
    for _ in 0..14 {
        let (a, b) = (rng.random_range(0..5), rng.random_range(0..5));
        if a != b {
            kg.add_triple(a, TASK_TASK, b, 1.0).unwrap();
        }
        kg.add_triple(rng.random_range(0..5), TASK_METHOD, 5 + rng.random_range(0..5), 1.0).unwrap();
        let (c, d) = (5 + rng.random_range(0..5), 5 + rng.random_range(0..5));
        if c != d {
            kg.add_triple(c, aux, d, 1.0).unwrap();
        }
    }
    kg
}

fn randomize(model: &mut EmbeddingModel, rng: &mut impl Rng) {
    let theta: Vec<f64> = model.parameters().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    model.set_parameters(&theta).unwrap();
}

#[test]
fn ranking_loss_examples() {
    assert_eq!(ranking_loss(3.0, 1.0, 1.0), 0.0);
    assert_eq!(ranking_loss(0.7, 0.7, 1.0), 1.0);
    assert!((ranking_loss(0.2, 0.5, 1.0) - 1.3).abs() < 1e-15);
}

#[test]
fn corruption_replaces_one_argument() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kg = random_graph(&mut rng);
    let corrupter = Corrupter::new(&kg);
    for ((h, r, t), _) in kg.triple_keys() {
        if kg.relation(r).resource != 0 {
            continue;
        }
        for _ in 0..20 {
            let (h2, r2, t2) = corrupter.corrupt((h, r, t), &mut rng).unwrap();
            assert_eq!(r2, r);
            assert!((h2 == h) != (t2 == t));
            assert!(!kg.has_triple(h2, r2, t2));
            assert_eq!(kg.entity(h2).category, kg.entity(h).category);
            assert_eq!(kg.entity(t2).category, kg.entity(t).category);
        }
    }
}

#[test]
fn saturated_universe_cannot_be_corrupted() {
    let mut kg = KnowledgeGraph::new();
    for id in ["a", "b", "c"] {
        kg.add_entity(entity(id, Some(TermCategory::Task)));
    }
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        kg.add_triple(a, TASK_TASK, b, 1.0).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(corrupt(&kg, (0, TASK_TASK, 1), &mut rng), Err(crate::Error::NoCorruption(_))));
}

#[test]
fn corruption_is_reproducible() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let kg = random_graph(&mut rng);
    let key = kg.triples_of(TASK_METHOD)[0].0;
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..10).map(|_| corrupt(&kg, key, &mut rng).unwrap()).collect::<Vec<_>>()
    };
    assert_eq!(draw(7), draw(7));
}

#[test]
fn path_feature_matches_hand_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kg = random_graph(&mut rng);
    let mut model = EmbeddingModel::init(&kg, 3, 2, &mut rng).unwrap();
    randomize(&mut model, &mut rng);
    let q = |r: usize| model.relation_matrix(r).clone();
    let paths = vec![
        RelationPath {
            start: 0,
            end: 5,
            steps: vec![PathStep { relation: TASK_METHOD, direction: Direction::Forward }],
            resource: 0,
            walk_probability: 0.25,
        },
        RelationPath {
            start: 0,
            end: 5,
            steps: vec![
                PathStep { relation: TASK_TASK, direction: Direction::Forward },
                PathStep { relation: 3, direction: Direction::Inverse },
            ],
            resource: 1,
            walk_probability: 0.5,
        },
    ];
    let expected = q(TASK_METHOD) * (model.path_weight(0, 1) * 0.25)
        + q(TASK_TASK) * q(3).transpose() * (model.path_weight(1, 2) * 0.5);
    let f = model.path_feature(&paths).unwrap();
    assert!((f - &expected).abs().max() < 1e-12);
    let combined = model.combined_score(0, TASK_METHOD, 5, &paths).unwrap();
    let mut oracle = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            oracle += model.entity_vector(0)[i] * q(TASK_METHOD)[(i, j)] * model.entity_vector(5)[j]
                + expected[(i, j)] * q(TASK_METHOD)[(i, j)];
        }
    }
    assert!((combined - oracle).abs() < 1e-12);
}

#[test]
fn zero_relation_matrix_scores_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let kg = random_graph(&mut rng);
    let mut model = EmbeddingModel::init(&kg, 3, 2, &mut rng).unwrap();
    randomize(&mut model, &mut rng);
    model.relations[TASK_METHOD] = DMatrix::zeros(3, 3);
    let paths = enumerate_paths(&kg, 0, 6, 2, PathMode::Exhaustive, None).unwrap();
    assert_eq!(model.combined_score(0, TASK_METHOD, 6, &paths).unwrap(), 0.0);
}

#[test]
fn composition_is_associative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let kg = random_graph(&mut rng);
    let mut model = EmbeddingModel::init(&kg, 4, 3, &mut rng).unwrap();
    randomize(&mut model, &mut rng);
    for _ in 0..50 {
        let steps: Vec<PathStep> = (0..rng.random_range(2..6))
            .map(|_| PathStep {
                relation: rng.random_range(0..4),
                direction: if rng.random_bool(0.5) { Direction::Forward } else { Direction::Inverse },
            })
            .collect();
        let cut = rng.random_range(1..steps.len());
        let whole = model.path_embedding(&steps).unwrap();
        let split = model.path_embedding(&steps[..cut]).unwrap() * model.path_embedding(&steps[cut..]).unwrap();
        assert!((whole - split).abs().max() < 1e-12);
    }
    let id = EmbeddingModel::from_parts(vec![DVector::zeros(2)], vec![DMatrix::identity(2, 2)], vec![vec![1.0]]).unwrap();
    let two = [PathStep { relation: 0, direction: Direction::Forward }; 2];
    assert_eq!(id.path_embedding(&two).unwrap(), DMatrix::identity(2, 2));
}

fn finite_difference_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kg = random_graph(&mut rng);
    let mut model = EmbeddingModel::init(&kg, 3, 2, &mut rng).unwrap();
    randomize(&mut model, &mut rng);
    let corrupter = Corrupter::new(&kg);
    let positives: Vec<TripleKey> = kg.triple_keys().map(|(k, _)| k).filter(|k| kg.relation(k.1).resource == 0).collect();
    let pairs: Vec<(TripleKey, TripleKey)> = (0..4)
        .map(|_| loop {
            let pos = positives[rng.random_range(0..positives.len())];
            if let Ok(neg) = corrupter.corrupt(pos, &mut rng) {
                break (pos, neg);
            }
        })
        .collect();
    let kg_ref = &kg;
    let paths = |(x, r, y): TripleKey| -> crate::Result<Arc<Vec<RelationPath>>> {
        Ok(Arc::new(enumerate_paths(kg_ref, x, y, 2, PathMode::Exhaustive, Some(kg_ref.canonical(x, r, y)))?))
    };
    // A large margin keeps every hinge strictly active.
    let margin = 1e3;
    let (_, grad) = pair_loss_gradient(&model, &pairs, margin, &paths).unwrap();
    let analytic = grad.to_dense(&model);
    let theta = model.parameters();
    let h = 1e-5;
    let mut numeric = vec![0.0; theta.len()];
    let mut probe = model.clone();
    for i in 0..theta.len() {
        let mut t = theta.clone();
        t[i] = theta[i] + h;
        probe.set_parameters(&t).unwrap();
        let up = pair_loss_gradient(&probe, &pairs, margin, &paths).unwrap().0;
        t[i] = theta[i] - h;
        probe.set_parameters(&t).unwrap();
        let down = pair_loss_gradient(&probe, &pairs, margin, &paths).unwrap().0;
        numeric[i] = (up - down) / (2.0 * h);
    }
    let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
    diff / scale
}

#[test]
fn subgradient_matches_finite_differences() {
    for seed in 0..20 {
        let err = finite_difference_check(seed);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn single_positive_is_learned() {
    let mut kg = KnowledgeGraph::new();
    for i in 0..4 {
        kg.add_entity(entity(&format!("t{i}"), Some(TermCategory::Task)));
    }
    kg.add_triple(0, TASK_TASK, 1, 1.0).unwrap();
    let config = TrainingConfig { dim: 4, epochs: 200, learning_rate: 0.1, ..Default::default() };
    let (_, report) = train(&kg, &config).unwrap();
    let last = *report.epoch_loss.last().unwrap();
    assert!(last < 0.05, "final loss {last}");
    let early: f64 = report.epoch_loss[..20].iter().sum::<f64>() / 20.0;
    let late: f64 = report.epoch_loss[180..].iter().sum::<f64>() / 20.0;
    assert!(late < early);
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let kg = random_graph(&mut rng);
    let config = TrainingConfig { dim: 4, epochs: 5, use_paths: true, seed: 11, ..Default::default() };
    let (a, ra) = train(&kg, &config).unwrap();
    let (b, rb) = train(&kg, &config).unwrap();
    assert_eq!(a.parameters(), b.parameters());
    assert_eq!(ra, rb);
}

#[test]
fn empty_store_rejected() {
    let kg = KnowledgeGraph::new();
    assert!(matches!(train(&kg, &TrainingConfig::default()), Err(crate::Error::EmptyData)));
}

#[test]
fn scaling_preserves_candidate_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let kg = random_graph(&mut rng);
    let mut model = EmbeddingModel::init(&kg, 4, 0, &mut rng).unwrap();
    randomize(&mut model, &mut rng);
    let order = |m: &EmbeddingModel, x: usize| {
        let mut c: Vec<(f64, usize)> = (5..10).map(|y| (m.bilinear_score(x, TASK_METHOD, y).unwrap(), y)).collect();
        c.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        c.into_iter().map(|(_, y)| y).collect::<Vec<_>>()
    };
    let before: Vec<_> = (0..5).map(|x| order(&model, x)).collect();
    let s = model.bilinear_score(0, TASK_METHOD, 5).unwrap();
    model.scale_entities(2.5);
    assert!((model.bilinear_score(0, TASK_METHOD, 5).unwrap() - 6.25 * s).abs() < 1e-12);
    assert_eq!(before, (0..5).map(|x| order(&model, x)).collect::<Vec<_>>());
}

#[test]
fn full_loss_is_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let kg = random_graph(&mut rng);
    let model = EmbeddingModel::init(&kg, 4, 0, &mut rng).unwrap();
    assert!(full_ranking_loss(&model, &kg, 1.0).unwrap() >= 0.0);
}
