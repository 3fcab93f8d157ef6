use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repurpose::corpus::{CompoundId, TargetId};
use repurpose::factor::{train_csnmf, train_observed, FactorModel, InteractionMatrix, TrainConfig};
use repurpose::noir::{doc_score, term_score};
use repurpose::simkit::SimilarityMatrix;

fn random_instance(seed: u64, rows: usize, cols: usize) -> (InteractionMatrix, SimilarityMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triplets = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if rng.gen::<f64>() < 0.3 {
                triplets.push((i, j, rng.gen_range(1.0..10.0)));
            }
        }
    }
    let x = InteractionMatrix::from_triplets(
        (0..rows).map(|i| CompoundId::new(format!("c{i}"))).collect(),
        (0..cols).map(|j| TargetId::new(format!("t{j}"))).collect(),
        triplets,
    )
    .unwrap();
    let mut pairs = Vec::new();
    for i in 0..rows {
        for j in i + 1..rows {
            if rng.gen::<f64>() < 0.1 {
                pairs.push((i, j, rng.gen_range(0.1..1.0)));
            }
        }
    }
    let s = SimilarityMatrix::from_pairs(x.row_ids().to_vec(), &pairs, 0.0).unwrap();
    (x, s)
}

#[test]
fn csnmf_objective_never_increases() {
    for seed in 0..10 {
        for lambda in [0.1, 1.0, 5.0] {
            let (x, s) = random_instance(seed, 50, 20);
            let config = TrainConfig { rank: 5, lambda, max_iters: 200, rel_tol: 1e-12, seed, ..Default::default() };
            let mut negative = false;
            let mut check = |_: usize, u: &ndarray::Array2<f64>, v: &ndarray::Array2<f64>| {
                negative |= u.iter().chain(v.iter()).any(|&e| e < 0.0);
            };
            let model = train_observed(&x, Some(&s), &config, &mut check).unwrap();
            assert!(!negative);
            for w in model.trace.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-9), "seed {seed} lambda {lambda}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn same_seed_same_model() {
    let (x, s) = random_instance(7, 40, 15);
    let config = TrainConfig { rank: 4, lambda: 0.5, seed: 11, ..Default::default() };
    assert_eq!(train_csnmf(&x, &s, &config).unwrap(), train_csnmf(&x, &s, &config).unwrap());
}

#[test]
fn saved_model_round_trips() {
    let (x, s) = random_instance(8, 30, 12);
    let config = TrainConfig { rank: 3, lambda: 0.2, max_iters: 25, seed: 1, ..Default::default() };
    let mut model = train_csnmf(&x, &s, &config).unwrap();
    model.meta.insert("similarity".into(), "jaccard:CF".into());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.tsv");
    model.save_tsv(&path).unwrap();
    assert_eq!(FactorModel::load_tsv(&path).unwrap(), model);
}

proptest! {
    #[test]
    fn term_score_is_nonnegative_and_zero_at_expectation(
        n_corpus in 1usize..10_000,
        c_frac in 0.0f64..1.0,
        r_frac in 0.0f64..1.0,
        o_frac in 0.0f64..1.0,
    ) {
        let c = 1 + ((n_corpus - 1) as f64 * c_frac) as usize;
        let n_rel = 1 + ((n_corpus - 1) as f64 * r_frac) as usize;
        let o = (c.min(n_rel) as f64 * o_frac) as usize;
        let ts = term_score(o, c, n_rel, n_corpus).unwrap();
        prop_assert!(ts.score >= 0.0);
        prop_assert!((ts.expected - c as f64 * n_rel as f64 / n_corpus as f64).abs() <= 1e-12 * ts.expected);
    }

    #[test]
    fn doc_score_is_mean_over_carried_labels(
        scores in proptest::collection::vec(0.0f64..100.0, 1..10),
        carried in proptest::collection::vec(any::<bool>(), 10),
        extra in 0usize..5,
    ) {
        let names: Vec<String> = (0..scores.len()).map(|i| format!("r{i}")).collect();
        let reference = names.iter().map(String::as_str).zip(scores.iter().copied()).collect();
        let mut labels: Vec<String> = names.iter().zip(&carried).filter(|(_, &c)| c).map(|(n, _)| n.clone()).collect();
        labels.extend((0..extra).map(|i| format!("other{i}")));
        let d = doc_score(&labels, &reference);
        let sum: f64 = names.iter().zip(&carried).zip(&scores).filter(|((_, &c), _)| c).map(|(_, s)| s).sum();
        let expected = if labels.is_empty() { 0.0 } else { sum / labels.len() as f64 };
        prop_assert!((d.score - expected).abs() <= 1e-12 * expected.max(1.0));
        prop_assert_eq!(d.n_labels, labels.len());
    }
}
