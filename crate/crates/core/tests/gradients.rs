mod common;

use anticollapse::gradcheck::{check_family, GradCheckOptions, LossFamily, REL_TOLERANCE};
use anticollapse::losses::{
    pair_anticollapse, pair_plus_proxy, proxy_anchor, proxy_anticollapse, proxy_nca, proxy_nca_with, ProxyAnchorParams,
    ProxyNcaParams,
};
use anticollapse::{
    coding_rate, coding_rate_grad, AntiCollapseConfig, BaseLoss, EmbeddingBatch, LossResult, Matrix, ProxySelection,
    ProxySet, RateParams, Result, SeededRng,
};
use common::{random_batch, random_proxies};

const CASES: u64 = 25;
const H: f64 = 1e-5;

fn numeric_grad(f: impl Fn(&Matrix<f64>) -> f64, at: &Matrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(at.as_slice().len());
    let base = at.as_slice().to_vec();
    for idx in 0..base.len() {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[idx] += H;
        minus[idx] -= H;
        let fp = f(&Matrix::new(at.rows(), at.cols(), plus).unwrap());
        let fm = f(&Matrix::new(at.rows(), at.cols(), minus).unwrap());
        out.push((fp - fm) / (2.0 * H));
    }
    out
}

fn rel_err(a: &[f64], g: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(g).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(g));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn instance(seed: u64) -> (EmbeddingBatch<f64>, ProxySet<f64>) {
    let mut rng = SeededRng::new(seed);
    let (n, d, m) = (2 + rng.below(15), 2 + rng.below(7), 2 + rng.below(5));
    (random_batch(seed, n, d, m), random_proxies(seed, m, d))
}

fn worst_error(loss: impl Fn(&EmbeddingBatch<f64>, &ProxySet<f64>) -> Result<LossResult<f64>>) -> f64 {
    let mut worst: f64 = 0.0;
    for seed in 0..CASES {
        let (batch, proxies) = instance(seed);
        let r = loss(&batch, &proxies).unwrap();
        let labels = batch.labels().to_vec();
        if let Some(ge) = &r.grad_embeddings {
            let g = numeric_grad(
                |x| loss(&EmbeddingBatch::new_unchecked(x.clone(), labels.clone()).unwrap(), &proxies).unwrap().value,
                batch.features(),
            );
            worst = worst.max(rel_err(ge.as_slice(), &g));
        }
        if let Some(gp) = &r.grad_proxies {
            let g = numeric_grad(
                |p| {
                    loss(&batch, &ProxySet::new_unchecked(p.clone(), proxies.class_ids().to_vec()).unwrap())
                        .unwrap()
                        .value
                },
                proxies.matrix(),
            );
            worst = worst.max(rel_err(gp.as_slice(), &g));
        }
    }
    worst
}

#[test]
fn coding_rate_gradient() {
    for seed in 0..CASES {
        let (batch, _) = instance(seed);
        for eps in [0.5, 0.2, 1.5] {
            let p = RateParams::new(eps).unwrap();
            let a = coding_rate_grad(batch.features(), &p).unwrap();
            let g = numeric_grad(|x| coding_rate(x, &p).unwrap(), batch.features());
            assert!(rel_err(a.as_slice(), &g) < REL_TOLERANCE, "seed {seed} eps {eps}");
        }
    }
}

#[test]
fn pair_anticollapse_gradient() {
    assert!(worst_error(|b, _| pair_anticollapse(b, &RateParams::default())) < REL_TOLERANCE);
}

#[test]
fn proxy_nca_gradient_both_denominators() {
    assert!(worst_error(proxy_nca) < REL_TOLERANCE);
    let with_pos = ProxyNcaParams { include_positive: true };
    assert!(worst_error(|b, p| proxy_nca_with(b, p, with_pos)) < REL_TOLERANCE);
}

#[test]
fn proxy_anchor_gradient() {
    for (alpha, delta) in [(32.0, 0.1), (8.0, 0.0), (64.0, 0.3)] {
        let pa = ProxyAnchorParams::new(alpha, delta).unwrap();
        assert!(worst_error(|b, p| proxy_anchor(b, p, &pa)) < REL_TOLERANCE, "alpha {alpha}");
    }
}

#[test]
fn proxy_anticollapse_gradient_all_variants() {
    for selection in [ProxySelection::AllClass, ProxySelection::MiniBatch] {
        for base in [BaseLoss::ProxyAnchor(ProxyAnchorParams::default()), BaseLoss::ProxyNca] {
            for nu in [0.0035, 0.1, 1.0] {
                let cfg = AntiCollapseConfig { nu, selection, base, ..AntiCollapseConfig::default() };
                let err = worst_error(|b, p| proxy_anticollapse(b, p, &cfg));
                assert!(err < REL_TOLERANCE, "{selection:?} {base:?} nu {nu}: {err}");
            }
        }
    }
}

#[test]
fn pair_plus_proxy_gradient() {
    let base = BaseLoss::ProxyAnchor(ProxyAnchorParams::default());
    assert!(worst_error(|b, p| pair_plus_proxy(b, p, &RateParams::default(), &base)) < REL_TOLERANCE);
}

#[test]
fn library_checker_agrees_and_catches_sign_errors() {
    for family in LossFamily::ALL {
        assert!(check_family(family, 20, 100, GradCheckOptions::default()).unwrap().passed(), "{family}");
        let flipped = check_family(family, 3, 100, GradCheckOptions { flip_sign: true }).unwrap();
        assert!(!flipped.passed(), "{family}");
    }
}
