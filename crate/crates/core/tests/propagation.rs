use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scigraph::graph_ssl::{
    build_knn_graph, pca_project, propagate, propagation_objective, PropagationConfig, SimilarityGraph,
};

fn graph(seed: u64, n: usize, m: usize) -> SimilarityGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut g = build_knn_graph(&points, 3.min(n - 1)).unwrap();
    for u in 0..n {
        if u % 4 == 0 {
            let mut r = vec![0.0; m];
            r[rng.random_range(0..m)] = 1.0;
            g.r[u] = Some(r);
        }
    }
    g.p_tilde = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        })
        .collect();
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn objective_never_increases_and_q_stays_stochastic(seed in any::<u64>(), n in 2usize..30, m in 2usize..4, nu in 0.01f64..2.0) {
        let mut g = graph(seed, n, m);
        let config = PropagationConfig { nu, max_iterations: 40, ..Default::default() };
        let report = propagate(&mut g, &config).unwrap();
        for w in report.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
        for q in &g.q {
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(q.iter().all(|&p| p >= 0.0));
        }
        let j = propagation_objective(&g, &config).unwrap();
        prop_assert!((j - report.objective.last().unwrap()).abs() < 1e-9 * j.abs().max(1.0));
    }

    #[test]
    fn knn_graph_is_symmetric_with_unit_similarities(seed in any::<u64>(), n in 2usize..25, k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let g = build_knn_graph(&points, k.min(n - 1)).unwrap();
        for u in 0..n {
            prop_assert!(g.degree(u) >= k.min(n - 1));
            for e in g.neighbours(u) {
                prop_assert!(g.has_edge(e.to, u));
                prop_assert!(e.similarity > 0.0 && e.similarity <= 1.0);
            }
        }
    }
}

#[test]
fn pca_keeps_pairwise_distances_at_full_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<Vec<f64>> = (0..20).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let projected = pca_project(&points, 4).unwrap();
    let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    for i in 0..20 {
        for j in 0..20 {
            assert!((d(&points[i], &points[j]) - d(&projected[i], &projected[j])).abs() < 1e-9);
        }
    }
}
