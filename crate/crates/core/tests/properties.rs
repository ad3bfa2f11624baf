mod common;

use anticollapse::coding_rate::{coding_rate_with, GramSide};
use anticollapse::data_io::{
    decode_embeddings, encode_embeddings, generate_mixture, BatchPlan, BatchSampler, LoadOptions, MixtureConfig,
};
use anticollapse::losses::{pair_anticollapse, proxy_anchor, proxy_anticollapse, proxy_rate, ProxyAnchorParams};
use anticollapse::metrics::{embedding_density, f1_clustering, mean_average_precision, nmi, recall_at_k};
use anticollapse::numerics::{gram_features, gram_samples, logdet_psd, solve_psd, sym_eigvals};
use anticollapse::{
    coding_rate, AntiCollapseConfig, BaseLoss, ClassId, EmbeddingBatch, Matrix, ProxySelection, ProxySet, RateParams,
    SeededRng,
};
use common::*;
use proptest::prelude::*;

fn nonzero_eigs(mut v: Vec<f64>, k: usize) -> Vec<f64> {
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v.truncate(k);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gram_forms_share_nonzero_spectrum(n in 1usize..12, d in 1usize..12, seed in any::<u64>()) {
        let x = gaussian(&mut SeededRng::new(seed), n, d);
        let k = n.min(d);
        let a = nonzero_eigs(sym_eigvals(&gram_features(&x)).unwrap(), k);
        let b = nonzero_eigs(sym_eigvals(&gram_samples(&x)).unwrap(), k);
        prop_assert!(max_abs_diff(&a, &b) < 1e-10, "{:?} vs {:?}", a, b);
        // the Jacobi routine against an external eigen solver
        let ext = nonzero_eigs(to_nalgebra(&gram_features(&x)).symmetric_eigenvalues().iter().copied().collect(), k);
        prop_assert!(max_abs_diff(&a, &ext) < 1e-10);
    }

    #[test]
    fn rate_agrees_across_gram_sides(n in 1usize..14, d in 1usize..14, seed in any::<u64>(), eps in 0.1f64..2.0) {
        let x = gaussian(&mut SeededRng::new(seed), n, d);
        let p = RateParams::new(eps).unwrap();
        let f = coding_rate_with(&x, &p, GramSide::Features).unwrap();
        let s = coding_rate_with(&x, &p, GramSide::Samples).unwrap();
        prop_assert!((f - s).abs() < 1e-9);
        prop_assert!(f >= 0.0);
    }

    #[test]
    fn logdet_scales_with_dimension(n in 1usize..10, seed in any::<u64>(), c in 0.01f64..50.0) {
        let b = gaussian(&mut SeededRng::new(seed), n + 2, n);
        let mut a = gram_features(&b);
        a.add_scaled(1.0, &Matrix::identity(n)).unwrap();
        let lhs = logdet_psd(&a.scale(c)).unwrap();
        let rhs = n as f64 * c.ln() + logdet_psd(&a).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9);
        let ext = to_nalgebra(&a).determinant().ln();
        prop_assert!((logdet_psd(&a).unwrap() - ext).abs() < 1e-9);
    }

    #[test]
    fn solve_residual_is_small(n in 1usize..10, m in 1usize..4, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let g = gaussian(&mut rng, n + 3, n);
        let mut a = gram_features(&g);
        a.add_scaled(1.0, &Matrix::identity(n)).unwrap();
        let b = gaussian(&mut rng, n, m);
        let x = solve_psd(&a, &b).unwrap();
        let mut r = a.matmul(&x).unwrap();
        r.add_scaled(-1.0, &b).unwrap();
        prop_assert!(r.frobenius_norm() <= 1e-10 * a.frobenius_norm() * x.frobenius_norm().max(1.0));
    }

    #[test]
    fn rate_is_invariant_to_row_order(n in 1usize..14, d in 1usize..10, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let x = gaussian(&mut rng, n, d);
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let p = RateParams::default();
        let a = coding_rate(&x, &p).unwrap();
        let b = coding_rate(&x.select_rows(&order), &p).unwrap();
        // Gram entries sum over rows, so reordering only changes rounding
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn duplicating_rows_lowers_rate(n in 2usize..8, extra in 0usize..4, seed in any::<u64>()) {
        let d = n + extra;
        let q = random_rotation(seed, d);
        let ortho = q.select_rows(&(0..n).collect::<Vec<_>>());
        let collapsed = q.select_rows(&vec![0; n]);
        let p = RateParams::default();
        prop_assert!(coding_rate(&collapsed, &p).unwrap() < coding_rate(&ortho, &p).unwrap());
    }

    #[test]
    fn pair_loss_follows_row_permutation(n in 2usize..14, d in 2usize..8, seed in any::<u64>()) {
        let batch = random_batch(seed, n, d, 3);
        let mut order: Vec<usize> = (0..n).collect();
        SeededRng::new(seed.wrapping_add(1)).shuffle(&mut order);
        let p = RateParams::default();
        let a = pair_anticollapse(&batch, &p).unwrap();
        let b = pair_anticollapse(&batch.select(&order), &p).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
        let ga = a.grad_embeddings.unwrap().select_rows(&order);
        let gb = b.grad_embeddings.unwrap();
        prop_assert!(max_abs_diff(ga.as_slice(), gb.as_slice()) < 1e-12);
    }

    #[test]
    fn proxy_anchor_ignores_sample_and_proxy_order(n in 2usize..14, d in 2usize..8, m in 2usize..6, seed in any::<u64>()) {
        let batch = random_batch(seed, n, d, m);
        let proxies = random_proxies(seed, m, d);
        let mut rng = SeededRng::new(seed.wrapping_add(2));
        let mut rows: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut rows);
        let mut prows: Vec<usize> = (0..m).collect();
        rng.shuffle(&mut prows);
        let ids: Vec<ClassId> = prows.iter().map(|&r| proxies.class_ids()[r]).collect();
        let shuffled = ProxySet::new(proxies.matrix().select_rows(&prows), ids).unwrap();
        let params = ProxyAnchorParams::default();
        let a = proxy_anchor(&batch, &proxies, &params).unwrap().value;
        let b = proxy_anchor(&batch.select(&rows), &shuffled, &params).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn anticollapse_is_linear_in_nu(n in 2usize..14, d in 2usize..8, m in 2usize..6, seed in any::<u64>(),
                                    nu1 in 0.0f64..1.0, nu2 in 0.0f64..1.0, all in any::<bool>()) {
        let batch = random_batch(seed, n, d, m);
        let proxies = random_proxies(seed, m, d);
        let selection = if all { ProxySelection::AllClass } else { ProxySelection::MiniBatch };
        let cfg = |nu| AntiCollapseConfig { nu, selection, ..AntiCollapseConfig::default() };
        let base = proxy_anchor(&batch, &proxies, &ProxyAnchorParams::default()).unwrap().value;
        let v1 = proxy_anticollapse(&batch, &proxies, &cfg(nu1)).unwrap().value;
        let v2 = proxy_anticollapse(&batch, &proxies, &cfg(nu2)).unwrap().value;
        prop_assert!((v1 - v2 - (nu1 - nu2) * base).abs() < 1e-12);
        let filter = if all { None } else { Some(batch.classes()) };
        let zero = proxy_anticollapse(&batch, &proxies, &cfg(0.0)).unwrap();
        prop_assert_eq!(zero.value, -proxy_rate(&proxies, filter.as_deref(), &RateParams::default()).unwrap());
        prop_assert!(zero.grad_embeddings.unwrap().as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn proxy_losses_stay_finite(n in 2usize..14, d in 2usize..8, m in 2usize..6, seed in any::<u64>(),
                                alpha in 0.5f64..64.0, delta in -0.5f64..0.5) {
        let batch = random_batch(seed, n, d, m);
        let proxies = random_proxies(seed, m, d);
        let pa = ProxyAnchorParams::new(alpha, delta).unwrap();
        let r = proxy_anchor(&batch, &proxies, &pa).unwrap();
        prop_assert!(r.value.is_finite());
        prop_assert!(r.grad_embeddings.unwrap().is_finite() && r.grad_proxies.unwrap().is_finite());
        let cfg = AntiCollapseConfig { base: BaseLoss::ProxyAnchor(pa), ..AntiCollapseConfig::default() };
        prop_assert!(proxy_anticollapse(&batch, &proxies, &cfg).unwrap().value.is_finite());
    }

    #[test]
    fn recall_is_monotone_in_k(n in 3usize..40, d in 2usize..6, classes in 1usize..6, seed in any::<u64>()) {
        let batch = random_batch(seed, n, d, classes);
        let ks: Vec<usize> = (1..n).collect();
        let r = recall_at_k(&batch, &ks).unwrap();
        let values: Vec<f64> = ks.iter().map(|k| r[k]).collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(values.iter().all(|&v| (0.0..=100.0).contains(&v)));
    }

    #[test]
    fn nmi_is_symmetric_and_label_blind(a in prop::collection::vec(0u32..5, 2..40), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let b: Vec<u32> = a.iter().map(|_| rng.below(4) as u32).collect();
        let ab = nmi(&a, &b).unwrap();
        prop_assert!((ab - nmi(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        let relabel: Vec<u32> = a.iter().map(|&l| 100 - 7 * l).collect();
        prop_assert!((nmi(&relabel, &b).unwrap() - ab).abs() < 1e-12);
    }

    #[test]
    fn f1_is_label_blind_and_one_only_on_equal_partitions(a in prop::collection::vec(0u32..4, 2..30),
                                                          b in prop::collection::vec(0u32..4, 2..30)) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let relabel: Vec<u32> = a.iter().map(|&l| (l + 3) * 11).collect();
        prop_assert!((f1_clustering(a, b).unwrap() - f1_clustering(&relabel, b).unwrap()).abs() < 1e-12);
        prop_assert_eq!(f1_clustering(&relabel, a).unwrap(), 1.0);
        let same_partition = (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])));
        prop_assert_eq!(f1_clustering(a, b).unwrap() == 1.0, same_partition);
    }

    #[test]
    fn density_survives_rotation(n in 4usize..30, d in 2usize..8, seed in any::<u64>()) {
        let batch = random_batch(seed, n, d, 3);
        prop_assume!(embedding_density(&batch).is_ok());
        let q = random_rotation(seed.wrapping_add(5), d);
        let rotated = EmbeddingBatch::new_unchecked(batch.features().matmul(&q).unwrap(), batch.labels().to_vec()).unwrap();
        let a = embedding_density(&batch).unwrap();
        let b = embedding_density(&rotated).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn map_lies_in_unit_interval(n in 2usize..40, d in 2usize..6, classes in 1usize..6, seed in any::<u64>(), cutoff in 1usize..50) {
        let batch = random_batch(seed, n, d, classes);
        let v = mean_average_precision(&batch, cutoff).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn persistence_round_trip_is_bit_exact(classes in 2usize..6, per in 1usize..6, extra in 0usize..6,
                                           sigma in 0.0f64..1.0, seed in any::<u64>()) {
        let cfg = MixtureConfig {
            num_classes: classes, samples_per_class: per, dim: classes + extra, noise_sigma: sigma, seed,
            orthonormal_means: true,
        };
        let batch = generate_mixture(&cfg).unwrap();
        for i in 0..batch.len() {
            prop_assert!((batch.features().row_norm(i) - 1.0).abs() < 1e-12);
        }
        let back = decode_embeddings(&encode_embeddings(&batch).unwrap(), LoadOptions::default()).unwrap();
        prop_assert_eq!(back.labels(), batch.labels());
        let bits = |b: &EmbeddingBatch<f64>| b.features().as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&batch));
    }

    #[test]
    fn sampler_batches_are_full_and_distinct(classes in 2usize..10, per in 1usize..6, p in 2usize..5, k in 1usize..4, seed in any::<u64>()) {
        prop_assume!(p <= classes && k <= per);
        let labels: Vec<ClassId> = (0..classes).flat_map(|c| std::iter::repeat_n(c as ClassId, per)).collect();
        let mut sampler = BatchSampler::new(&labels, BatchPlan::new(p, k).unwrap(), seed, false).unwrap();
        for batch in sampler.epoch() {
            prop_assert_eq!(batch.len(), p * k);
            let mut sorted = batch.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), batch.len());
        }
    }
}

#[test]
fn rotation_helper_is_orthogonal() {
    let q = random_rotation(3, 5);
    let qqt = q.matmul_transposed(&q).unwrap();
    assert!(max_abs_diff(qqt.as_slice(), Matrix::<f64>::identity(5).as_slice()) < 1e-12);
}
