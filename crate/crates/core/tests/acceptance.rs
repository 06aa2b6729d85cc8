//! Acceptance suite: one pass/fail line per criterion. Runs sequentially
//! (custom harness) so the timings are not distorted by parallel tests.

mod common;

use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scigraph::corpus::{Sentence, Tag, TermCategory};
use scigraph::embed::{pair_loss_gradient, train, Corrupter, EmbeddingModel, Scorer, TrainingConfig};
use scigraph::graph_ssl::{
    evaluate_predictions, propagate, propagate_observed, self_train, PosteriorStrategy, PropagationConfig,
    SelfTrainConfig, SelfTrainInput, SimilarityGraph, SslMode,
};
use scigraph::kg::{enumerate_paths, Direction, PathMode, PathStep, RelationPath, TripleKey};
use scigraph::pipeline::{self, PipelineConfig};
use scigraph::rank::{evaluate, rank_candidates, rank_of, RankMode, RankingQuery, RankingReport, Slot};
use scigraph::synthetic::{
    bilinear_graph, composition_graph, tagging_corpus, BilinearGraphConfig, CompositionGraphConfig, TaggingCorpusConfig,
};
use scigraph::tagger::{
    log_partition, sequence_probability, token_marginals, ulm_likelihood, ulm_log_likelihood, viterbi_decode,
    ConstrainedLattice, CrfObjective, CrfTrainConfig, TagAlphabet, UlmExample,
};

use common::*;

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn crf_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..500 {
        let n = rng.random_range(1..=5);
        let m = rng.random_range(1..=3);
        let (lat, trans) = random_lattice(&mut rng, n, m, 3.0);
        let oracle = enumerate(&lat, &trans);
        let err = |what: &str, got: f64, want: f64| -> Result<f64, String> {
            let e = (got - want).abs();
            if e < 1e-9 {
                Ok(e)
            } else {
                Err(format!("case {case}: {what} off by {e:e}"))
            }
        };
        worst = worst.max(err("log_partition", log_partition(&lat, &trans).unwrap(), oracle.log_z)?);
        let marg = token_marginals(&lat, &trans).unwrap();
        for (row, want) in marg.iter().zip(oracle.marginals(n, m)) {
            for (g, w) in row.iter().zip(want) {
                worst = worst.max(err("token_marginals", *g, w)?);
            }
        }
        let best = oracle.argmax();
        if viterbi_decode(&lat, &trans).unwrap() != best {
            return Err(format!("case {case}: viterbi_decode differs from the enumerated argmax"));
        }
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        worst = worst.max(err("sequence_probability", sequence_probability(&lat, &trans, &y).unwrap(), oracle.probability(&y))?);
        let c = random_constraints(&mut rng, n, m);
        worst = worst.max(err("ulm_likelihood", ulm_likelihood(&lat, &trans, &c).unwrap(), oracle.constrained_mass(&c))?);
    }
    Ok(format!("500 lattices, max abs error {worst:.1e}"))
}

fn ulm_extremes() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_log = 0.0f64;
    let mut worst_full = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..=6);
        let m = rng.random_range(1..=4);
        let (lat, trans) = random_lattice(&mut rng, n, m, 3.0);
        let free = ConstrainedLattice::unconstrained(n, m);
        worst_log = worst_log.max(ulm_log_likelihood(&lat, &trans, &free).unwrap().abs());
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        let full = ConstrainedLattice::fully_constrained(m, &y).unwrap();
        let p = sequence_probability(&lat, &trans, &y).unwrap();
        let oracle = (score(&lat, &trans, &y) - enumerate(&lat, &trans).log_z).exp();
        let u = ulm_likelihood(&lat, &trans, &full).unwrap();
        worst_full = worst_full.max(((u - p) / p).abs()).max(((u - oracle) / oracle).abs());
    }
    ensure(
        worst_log < 1e-12 && worst_full < 1e-12,
        format!("unconstrained |log L| max {worst_log:.1e}; fully constrained relative error max {worst_full:.1e}"),
    )
}

const WORDS: [&str; 8] = ["we", "use", "crf", "for", "parsing", "tagging", "lstm", "models"];

fn crf_gradient_error(rng: &mut ChaCha8Rng, ulm: bool, graph: bool) -> f64 {
    let alphabet = TagAlphabet::from_categories(&["Task", "Method"]);
    let m = alphabet.len();
    let examples: Vec<UlmExample> = (0..3)
        .map(|i| {
            let n = rng.random_range(2..=5);
            let words: Vec<&str> = (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect();
            let lattice = if ulm {
                random_constraints(rng, n, m)
            } else {
                let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
                ConstrainedLattice::fully_constrained(m, &y).unwrap()
            };
            let graph_q = graph.then(|| {
                (0..n)
                    .map(|_| {
                        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
                        let s: f64 = raw.iter().sum();
                        raw.iter().map(|x| x / s).collect()
                    })
                    .collect()
            });
            UlmExample { sentence: sentence(&words, &format!("d{i}")), lattice, graph_q }
        })
        .collect();
    let objective = CrfObjective::new(&alphabet, &examples, graph, 0.01).unwrap();
    let theta: Vec<f64> = (0..objective.num_parameters()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, analytic) = objective.value_and_gradient(&theta);
    let numeric = numeric_gradient(&theta, 1e-5, |t| objective.value(t));
    relative_error(&analytic, &numeric)
}

fn embedding_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kg = random_kg(&mut rng);
    let mut model = EmbeddingModel::init(&kg, 3, 2, &mut rng).unwrap();
    let theta: Vec<f64> = model.parameters().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    model.set_parameters(&theta).unwrap();
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
    let kg = &kg;
    let paths = |(x, r, y): TripleKey| -> scigraph::Result<Arc<Vec<RelationPath>>> {
        Ok(Arc::new(enumerate_paths(kg, x, y, 2, PathMode::Exhaustive, Some(kg.canonical(x, r, y)))?))
    };
    // the margin keeps every hinge strictly active
    let margin = 1e3;
    let (_, grad) = pair_loss_gradient(&model, &pairs, margin, &paths).unwrap();
    let analytic = grad.to_dense(&model);
    let mut probe = model.clone();
    let numeric = numeric_gradient(&theta, 1e-5, |t| {
        probe.set_parameters(t).unwrap();
        pair_loss_gradient(&probe, &pairs, margin, &paths).unwrap().0
    });
    relative_error(&analytic, &numeric)
}

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let nll = (0..20).map(|_| crf_gradient_error(&mut rng, false, false)).fold(0.0, f64::max);
    let ulm = (0..20).map(|i| crf_gradient_error(&mut rng, true, i % 2 == 1)).fold(0.0, f64::max);
    let emb = (0..20).map(embedding_gradient_error).fold(0.0, f64::max);
    ensure(
        nll < 1e-4 && ulm < 1e-4 && emb < 1e-4,
        format!("max relative error: CRF NLL {nll:.1e}, ULM {ulm:.1e}, ranking loss {emb:.1e}"),
    )
}

fn random_distribution(rng: &mut impl Rng, m: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn random_graph(rng: &mut impl Rng) -> SimilarityGraph {
    let n = rng.random_range(2..=40);
    let m = rng.random_range(2..=4);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.15) {
                edges.push((u, v, rng.random_range(0.05..1.0)));
            }
        }
    }
    let mut g = SimilarityGraph::from_edges(n, &edges).unwrap();
    for u in 0..n {
        if rng.random_bool(0.3) {
            let mut r = vec![0.0; m];
            r[rng.random_range(0..m)] = 1.0;
            g.r[u] = Some(r);
        }
    }
    g.p_tilde = (0..n).map(|_| random_distribution(rng, m)).collect();
    g
}

/// Golden-section minimizer on [lo, hi].
fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let (x1, x2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        if f(x1) < f(x2) {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    (lo + hi) / 2.0
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

fn propagation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_rise = f64::NEG_INFINITY;
    for _ in 0..50 {
        let mut g = random_graph(&mut rng);
        let config = PropagationConfig { mu: rng.random_range(0.1..2.0), nu: rng.random_range(0.01..1.0), max_iterations: 60, tolerance: 0.0 };
        let report = propagate_observed(&mut g, &config, |_, _| {}).unwrap();
        for w in report.objective.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    if worst_rise > 1e-12 {
        return Err(format!("objective rose by {worst_rise:e}"));
    }

    // labeled r on node 0, nu = 0: the minimum is q0 = q1 = r with objective 0
    let r = vec![0.7, 0.3];
    let mut g = SimilarityGraph::from_edges(2, &[(0, 1, 0.8)]).unwrap();
    g.r[0] = Some(r.clone());
    g.p_tilde = vec![vec![0.5, 0.5]; 2];
    propagate(&mut g, &PropagationConfig { nu: 0.0, max_iterations: 10_000, tolerance: 1e-14, ..Default::default() }).unwrap();
    let analytic_err = g.q.iter().flat_map(|q| q.iter().zip(&r).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);

    // with a prior the fixed point is checked against a nested 1-d search
    let (mu, nu, w) = (1.0, 0.5, 0.6);
    let p = [[0.3, 0.7], [0.2, 0.8]];
    let d = |x: f64| [x, 1.0 - x];
    let j = |x: f64, y: f64| kl(&r, &d(x)) + mu * w * (kl(&d(x), &d(y)) + kl(&d(y), &d(x))) + nu * (kl(&d(x), &p[0]) + kl(&d(y), &p[1]));
    let inner = |x: f64| golden(|y| j(x, y), 1e-9, 1.0 - 1e-9);
    let x = golden(|x| j(x, inner(x)), 1e-9, 1.0 - 1e-9);
    let y = inner(x);
    let mut g = SimilarityGraph::from_edges(2, &[(0, 1, w)]).unwrap();
    g.r[0] = Some(r.clone());
    g.p_tilde = p.iter().map(|v| v.to_vec()).collect();
    propagate(&mut g, &PropagationConfig { mu, nu, max_iterations: 10_000, tolerance: 1e-14 }).unwrap();
    let prior_err = (g.q[0][0] - x).abs().max((g.q[1][0] - y).abs());

    let mut worst_prior = 0.0f64;
    for _ in 0..10 {
        let mut g = random_graph(&mut rng);
        propagate(&mut g, &PropagationConfig { nu: 1e6, ..Default::default() }).unwrap();
        for u in (0..g.len()).filter(|&u| !g.is_labeled(u)) {
            for (a, b) in g.q[u].iter().zip(&g.p_tilde[u]) {
                worst_prior = worst_prior.max((a - b).abs());
            }
        }
    }
    ensure(
        analytic_err < 1e-4 && prior_err < 1e-4 && worst_prior < 1e-3,
        format!(
            "50 graphs monotone (max rise {worst_rise:.1e}); two-node error {analytic_err:.1e} / {prior_err:.1e}; nu=1e6 max |q - p| {worst_prior:.1e}"
        ),
    )
}

fn dev_f1(outcome: &scigraph::graph_ssl::SelfTrainOutcome, dev: &[Sentence], gold: &[Vec<Tag>]) -> f64 {
    let preds = outcome.predict_evaluation(dev).unwrap();
    evaluate_predictions(dev, gold, &preds)
}

fn self_training() -> Outcome {
    let base = SelfTrainConfig {
        propagation: PropagationConfig { max_iterations: 30, ..Default::default() },
        crf: CrfTrainConfig { epochs: 100, ..Default::default() },
        ..Default::default()
    };
    let mut wins = 0;
    let (mut interp_sum, mut feat_sum) = (0.0, 0.0);
    let mut rows = Vec::new();
    for seed in 0..10 {
        let corpus = tagging_corpus(&TaggingCorpusConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let dev: Vec<Sentence> = corpus.dev.iter().map(|l| l.sentence.clone()).collect();
        let gold: Vec<Vec<Tag>> = corpus.dev.iter().map(|l| l.tags.clone()).collect();
        let input = SelfTrainInput {
            labeled: &corpus.labeled,
            unlabeled: &corpus.unlabeled,
            evaluation: &dev,
            evaluation_gold: Some(&gold),
            embeddings: &corpus.embeddings,
        };
        let interp = self_train(&input, &base).map_err(|e| e.to_string())?;
        let supervised = interp.rounds[0].dev_f1.unwrap();
        let interp_f1 = dev_f1(&interp, &dev, &gold);
        let feat_config = SelfTrainConfig { strategy: PosteriorStrategy::GraphFeat, mode: SslMode::Transductive, ..base.clone() };
        let feat = self_train(&input, &feat_config).map_err(|e| e.to_string())?;
        let feat_f1 = dev_f1(&feat, &dev, &gold);
        if interp_f1 >= supervised {
            wins += 1;
        }
        interp_sum += interp_f1;
        feat_sum += feat_f1;
        rows.push(format!("{supervised:.3}/{interp_f1:.3}/{feat_f1:.3}"));
    }
    let (interp_mean, feat_mean) = (interp_sum / 10.0, feat_sum / 10.0);
    ensure(
        wins >= 8 && feat_mean >= interp_mean,
        format!(
            "(a) GraphInterp+ULM >= supervised in {wins}/10 seeds; (b) mean F1 transductive GraphFeat {feat_mean:.4} vs inductive GraphInterp {interp_mean:.4} [supervised/interp/feat: {}]",
            rows.join(" ")
        ),
    )
}

fn embedding_recovery() -> Outcome {
    let mut rows = Vec::new();
    let mut ok = true;
    for seed in 0..3 {
        let planted = bilinear_graph(&BilinearGraphConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        let config = TrainingConfig { dim: 8, seed, ..Default::default() };
        let (model, _) = train(&planted.train, &config).map_err(|e| e.to_string())?;
        let scorer = Scorer::new(&model, &planted.train, None).map_err(|e| e.to_string())?;
        let report = evaluate(&scorer, &planted.test, &[10], RankMode::Filtered).map_err(|e| e.to_string())?;
        let random = report.random_mrr.unwrap();
        let hits = report.hits_at_k[&10];
        ok &= report.mrr >= 5.0 * random && hits >= 0.5;
        rows.push(format!("seed {seed}: MRR {:.3} (random {random:.3}), Hits@10 {hits:.3}", report.mrr));
    }
    ensure(ok, rows.join("; "))
}

fn path_gain() -> Outcome {
    let (mut bilinear, mut with_paths) = (0.0, 0.0);
    for seed in 0..10 {
        let planted = composition_graph(&CompositionGraphConfig { seed, ..Default::default() }).map_err(|e| e.to_string())?;
        for use_paths in [false, true] {
            let config = TrainingConfig { dim: 16, seed, epochs: 30, use_paths, ..Default::default() };
            let (model, _) = train(&planted.train, &config).map_err(|e| e.to_string())?;
            let scorer = Scorer::new(&model, &planted.train, config.path_settings()).map_err(|e| e.to_string())?;
            let mrr = evaluate(&scorer, &planted.test, &[10], RankMode::Filtered).map_err(|e| e.to_string())?.mrr;
            if use_paths {
                with_paths += mrr / 10.0;
            } else {
                bilinear += mrr / 10.0;
            }
        }
    }
    let gain = with_paths / bilinear - 1.0;
    ensure(
        gain >= 0.2,
        format!("mean held-out MRR bilinear {bilinear:.4}, with paths {with_paths:.4}, relative gain {:+.1}%", 100.0 * gain),
    )
}

fn identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let kg = random_kg(&mut rng);
    let mut model = EmbeddingModel::init(&kg, 4, 2, &mut rng).unwrap();
    let theta: Vec<f64> = model.parameters().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
    model.set_parameters(&theta).unwrap();

    // combined score without paths is the bilinear score, bit for bit
    for x in 0..kg.num_entities() {
        for y in 0..kg.num_entities() {
            for r in 0..kg.relations().len() {
                let a = model.combined_score(x, r, y, &[]).unwrap();
                let b = model.bilinear_score(x, r, y).unwrap();
                if a.to_bits() != b.to_bits() {
                    return Err(format!("combined {a} != bilinear {b} for ({x}, {r}, {y})"));
                }
            }
        }
    }

    let mut worst = 0.0f64;
    for _ in 0..100 {
        let len = rng.random_range(2..=5);
        let steps: Vec<PathStep> = (0..len)
            .map(|_| PathStep {
                relation: rng.random_range(0..kg.relations().len()),
                direction: if rng.random_bool(0.5) { Direction::Forward } else { Direction::Inverse },
            })
            .collect();
        let cut = rng.random_range(1..len);
        let whole = model.path_embedding(&steps).unwrap();
        let split = model.path_embedding(&steps[..cut]).unwrap() * model.path_embedding(&steps[cut..]).unwrap();
        worst = worst.max((whole - split).abs().max());
    }
    if worst > 1e-12 {
        return Err(format!("path embedding associativity error {worst:e}"));
    }

    let bilinear = {
        let mut m = EmbeddingModel::init(&kg, 4, 0, &mut rng).unwrap();
        let t: Vec<f64> = m.parameters().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        m.set_parameters(&t).unwrap();
        m
    };
    let mut scaled = bilinear.clone();
    scaled.scale_entities(3.7);
    let s1 = Scorer::new(&bilinear, &kg, None).unwrap();
    let s2 = Scorer::new(&scaled, &kg, None).unwrap();
    for i in 0..100 {
        let query = RankingQuery {
            known: rng.random_range(0..kg.num_entities()),
            relation: rng.random_range(0..3),
            target_slot: if i % 2 == 0 { Slot::Tail } else { Slot::Head },
            candidate_category: Some(if rng.random_bool(0.5) { TermCategory::Task } else { TermCategory::Method }),
            mode: RankMode::Raw,
        };
        let order = |s: &Scorer<'_>| rank_candidates(s, &query, None).unwrap().into_iter().map(|(e, _)| e).collect::<Vec<_>>();
        if order(&s1) != order(&s2) {
            return Err(format!("query {i}: ranking changed under entity scaling"));
        }
    }
    Ok(format!("combined == bilinear without paths (exact); associativity max error {worst:.1e}; 100 rankings scale-invariant"))
}

fn metrics() -> Outcome {
    let r = RankingReport::from_ranks(vec![2, 4], &[1, 3, 10]);
    let single = RankingReport::from_ranks(vec![11], &[10]);
    let ranked = vec![(3, 0.9), (1, 0.5), (2, 0.5), (0, 0.1)];
    let ok = r.mrr == 0.375
        && r.hits_at_k[&1] == 0.0
        && r.hits_at_k[&3] == 0.5
        && r.hits_at_k[&10] == 1.0
        && single.hits_at_k[&10] == 0.0
        && single.mrr == 1.0 / 11.0
        && rank_of(&ranked, 2) == Some(2)
        && rank_of(&ranked, 0) == Some(4);
    ensure(
        ok,
        format!(
            "ranks {{2,4}}: MRR {}, Hits@3 {}; rank 11: Hits@10 {}; tied candidates share rank {:?}",
            r.mrr,
            r.hits_at_k[&3],
            single.hits_at_k[&10],
            rank_of(&ranked, 2)
        ),
    )
}

fn run_toy(work_dir: &Path, threads: usize) -> Result<(), String> {
    let config = PipelineConfig::load(Some(&toy_config_path()), &[format!("work_dir = {:?}", work_dir.to_string_lossy())])
        .map_err(|e| e.to_string())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
    pool.install(|| -> scigraph::Result<()> {
        pipeline::run_all(&config)?;
        pipeline::propagate(&config)?;
        let transductive = PipelineConfig { mode: SslMode::Transductive, strategy: PosteriorStrategy::GraphFeat, ..config.clone() };
        pipeline::self_train(&transductive)?;
        let rows = pipeline::recommend(&config, "GAN", "Task-Method", false)?;
        let mut tsv = Vec::new();
        pipeline::write_recommendation_tsv(&rows, &mut tsv)?;
        std::fs::write(work_dir.join("recommendations.tsv"), tsv).unwrap();
        Ok(())
    })
    .map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_toy(a.path(), 1)?;
    run_toy(b.path(), 2)?;
    let files_a = pipeline::list_artifacts(a.path()).map_err(|e| e.to_string())?;
    let files_b = pipeline::list_artifacts(b.path()).map_err(|e| e.to_string())?;
    if files_a != files_b {
        return Err(format!("artifact sets differ: {files_a:?} vs {files_b:?}"));
    }
    for f in &files_a {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        if x != y {
            return Err(format!("{} differs between runs", f.display()));
        }
    }
    Ok(format!("{} artifacts byte-identical across two runs (1 and 2 worker threads)", files_a.len()))
}

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { id: 1, name: "CRF oracle equivalence", budget: Some(Duration::from_secs(10)), run: crf_oracle },
        Criterion { id: 2, name: "ULM extreme cases", budget: None, run: ulm_extremes },
        Criterion { id: 3, name: "gradient checks", budget: None, run: gradient_checks },
        Criterion { id: 4, name: "propagation", budget: None, run: propagation },
        Criterion { id: 5, name: "synthetic self-training", budget: Some(Duration::from_secs(180)), run: self_training },
        Criterion { id: 6, name: "embedding recovery", budget: Some(Duration::from_secs(60)), run: embedding_recovery },
        Criterion { id: 7, name: "path-feature gain", budget: Some(Duration::from_secs(120)), run: path_gain },
        Criterion { id: 8, name: "algebraic identities", budget: None, run: identities },
        Criterion { id: 9, name: "metric arithmetic", budget: None, run: metrics },
        Criterion { id: 10, name: "end-to-end determinism", budget: None, run: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| *f == c.id.to_string() || c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(d), Some(b)) if elapsed > b => Err(format!("{d}; over the {}s budget", b.as_secs())),
            (o, _) => o,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("[{status}] {:>2}. {} ({:.1}s): {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
