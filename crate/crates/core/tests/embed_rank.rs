mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scigraph::embed::io::{decode_array, encode_array};
use scigraph::embed::EmbeddingModel;
use scigraph::kg::TASK_METHOD;
use scigraph::rank::{random_reciprocal_rank, rank_of, RankingReport};

use common::*;

proptest! {
    #[test]
    fn mrr_and_hits_are_bounded_and_hits_grow_with_k(ranks in proptest::collection::vec(1usize..50, 1..40)) {
        let report = RankingReport::from_ranks(ranks.clone(), &[1, 3, 10, 50]);
        prop_assert!(report.mrr > 0.0 && report.mrr <= 1.0);
        let hits: Vec<f64> = report.hits_at_k.values().copied().collect();
        for w in hits.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert_eq!(hits[3], 1.0);
        prop_assert!(hits[0] <= report.mrr);
        let oracle = ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64;
        prop_assert!((report.mrr - oracle).abs() < 1e-12);
    }

    #[test]
    fn random_reciprocal_rank_is_the_mean_over_positions(n in 1usize..200) {
        let oracle = (1..=n).map(|r| 1.0 / r as f64).sum::<f64>() / n as f64;
        prop_assert!((random_reciprocal_rank(n) - oracle).abs() < 1e-12);
    }

    #[test]
    fn rank_counts_strictly_better_candidates(scores in proptest::collection::vec(-5i32..5, 1..20), pick in any::<prop::sample::Index>()) {
        let ranked: Vec<(usize, f64)> = scores.iter().enumerate().map(|(i, &s)| (i, s as f64)).collect();
        let gold = pick.index(scores.len());
        let better = scores.iter().filter(|&&s| s > scores[gold]).count();
        prop_assert_eq!(rank_of(&ranked, gold), Some(better + 1));
    }

    #[test]
    fn sgem_arrays_round_trip_through_f32(rows in 1usize..5, cols in 1usize..5, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-3.0..3.0)).collect();
        let bytes = encode_array(&[rows, cols], &data).unwrap();
        let (shape, back) = decode_array(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(shape, vec![rows, cols]);
        for (a, b) in data.iter().zip(&back) {
            prop_assert_eq!(*a as f32 as f64, *b);
        }
    }
}

#[test]
fn saved_model_reloads_with_identical_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let kg = random_kg(&mut rng);
    let model = EmbeddingModel::init(&kg, 6, 2, &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    model.save(dir.path().join("a")).unwrap();
    let loaded = EmbeddingModel::load(dir.path().join("a")).unwrap();
    loaded.check_compatible(&kg).unwrap();
    loaded.save(dir.path().join("b")).unwrap();
    assert_eq!(EmbeddingModel::load(dir.path().join("b")).unwrap(), loaded);
    for x in 0..5 {
        for y in 5..10 {
            let a = model.bilinear_score(x, TASK_METHOD, y).unwrap();
            let b = loaded.bilinear_score(x, TASK_METHOD, y).unwrap();
            assert!((a - b).abs() < 1e-5 * a.abs().max(1.0));
        }
    }
}

#[test]
fn scaling_entities_scales_bilinear_scores_quadratically() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let kg = random_kg(&mut rng);
    let mut model = EmbeddingModel::init(&kg, 4, 1, &mut rng).unwrap();
    let before = model.bilinear_score(1, TASK_METHOD, 7).unwrap();
    model.scale_entities(3.0);
    let after = model.bilinear_score(1, TASK_METHOD, 7).unwrap();
    assert!((after - 9.0 * before).abs() < 1e-12 * after.abs().max(1.0));
}
