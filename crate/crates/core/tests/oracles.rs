mod common;

use anticollapse::metrics::{
    embedding_density, evaluate, f1_clustering, kmeans_cluster, mean_average_precision, nmi, recall_at_k,
};
use anticollapse::{coding_rate, ClassId, RateParams, SeededRng};
use common::{gaussian, metric_instance, oracle};

const INSTANCES: u64 = 40;

#[test]
fn recall_matches_brute_force() {
    for seed in 0..INSTANCES {
        let b = metric_instance(seed);
        let ks: Vec<usize> = (1..b.len()).collect();
        let r = recall_at_k(&b, &ks).unwrap();
        for k in ks {
            assert_eq!(r[&k], oracle::recall_at_k(&b, k), "seed {seed} k {k}");
        }
    }
}

#[test]
fn map_matches_brute_force() {
    for seed in 0..INSTANCES {
        let b = metric_instance(seed);
        for cutoff in [1, 2, 5, 10, 1000] {
            let lib = mean_average_precision(&b, cutoff).unwrap();
            let ora = oracle::mean_average_precision(&b, cutoff);
            assert!((lib - ora).abs() < 1e-12, "seed {seed} cutoff {cutoff}: {lib} vs {ora}");
        }
    }
}

#[test]
fn density_matches_brute_force() {
    for seed in 0..INSTANCES {
        let b = metric_instance(seed);
        let Ok(lib) = embedding_density(&b) else { continue };
        assert!((lib - oracle::density(&b)).abs() < 1e-12, "seed {seed}");
    }
}

#[test]
fn partition_scores_match_brute_force() {
    for seed in 0..INSTANCES {
        let mut rng = SeededRng::new(seed);
        let n = 1 + rng.below(50);
        let a: Vec<u32> = (0..n).map(|_| rng.below(1 + (seed as usize % 7)) as u32).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.below(5) as u32).collect();
        assert!((nmi(&a, &b).unwrap() - oracle::nmi(&a, &b)).abs() < 1e-12, "seed {seed}");
        assert!((f1_clustering(&a, &b).unwrap() - oracle::pairwise_f1(&a, &b)).abs() < 1e-12, "seed {seed}");
    }
}

#[test]
fn evaluate_agrees_with_oracles() {
    for seed in 0..INSTANCES {
        let b = metric_instance(seed);
        if b.len() < 3 {
            continue;
        }
        let report = evaluate(&b, &[1, 2], &[1000], seed).unwrap();
        let clusters = kmeans_cluster(b.features(), b.classes().len(), seed).unwrap().assignments;
        let truth: Vec<u32> = b.labels().to_vec();
        let clusters: Vec<u32> = clusters.iter().map(|&c| c as u32).collect();
        assert_eq!(report.recall_at[&1], oracle::recall_at_k(&b, 1));
        assert_eq!(report.recall_at[&2], oracle::recall_at_k(&b, 2));
        assert!((report.nmi - oracle::nmi(&clusters, &truth)).abs() < 1e-12);
        assert!((report.f1 - oracle::pairwise_f1(&clusters, &truth)).abs() < 1e-12);
        assert!((report.map_at[&1000] - oracle::mean_average_precision(&b, 1000)).abs() < 1e-12);
    }
}

#[test]
fn kmeans_converges_to_a_lloyd_fixed_point() {
    for seed in 0..20 {
        let b = metric_instance(seed * 2);
        let k = b.classes().len();
        let km = kmeans_cluster(b.features(), k, seed).unwrap();
        let x = b.features();
        let dist = |i: usize, c: usize| -> f64 {
            x.row(i).iter().zip(km.centroids.row(c)).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        for i in 0..b.len() {
            let own = dist(i, km.assignments[i] as usize);
            assert!((0..k).all(|c| own <= dist(i, c) + 1e-12), "seed {seed} row {i}");
        }
    }
}

#[test]
fn coding_rate_matches_determinant_oracle() {
    for seed in 0..INSTANCES {
        let mut rng = SeededRng::new(seed);
        let (n, d) = (1 + rng.below(20), 1 + rng.below(12));
        let x = gaussian(&mut rng, n, d).scale(0.3);
        let eps = 0.25 + rng.uniform();
        let lib = coding_rate(&x, &RateParams::new(eps).unwrap()).unwrap();
        let ora = oracle::coding_rate(&x, eps);
        assert!((lib - ora).abs() <= 1e-12 * ora.abs().max(1.0), "seed {seed}: {lib} vs {ora}");
    }
}

#[test]
fn singleton_classes_never_recall() {
    let b = metric_instance(0);
    let labels: Vec<ClassId> = (0..b.len() as ClassId).collect();
    let b = anticollapse::EmbeddingBatch::new(b.features().clone(), labels).unwrap();
    assert_eq!(recall_at_k(&b, &[1]).unwrap()[&1], 0.0);
    assert_eq!(oracle::recall_at_k(&b, 1), 0.0);
}
