//! Brute-force reference implementations, written without the library's
//! ranking, contingency or factorization code.

use std::collections::BTreeSet;

use anticollapse::{EmbeddingBatch, Matrix};

fn sim(x: &Matrix<f64>, a: usize, b: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..x.cols() {
        s += x[(a, c)] * x[(b, c)];
    }
    s
}

/// Zero-based rank of `j` in the neighbour list of `q`: the number of other
/// rows that are more similar, or equally similar with a lower index.
fn rank_of(x: &Matrix<f64>, q: usize, j: usize) -> usize {
    let s = sim(x, q, j);
    (0..x.rows())
        .filter(|&o| o != q && o != j)
        .filter(|&o| {
            let t = sim(x, q, o);
            t > s || (t == s && o < j)
        })
        .count()
}

pub fn recall_at_k(batch: &EmbeddingBatch<f64>, k: usize) -> f64 {
    let (x, labels) = (batch.features(), batch.labels());
    let n = batch.len();
    let hits = (0..n).filter(|&q| (0..n).any(|j| j != q && labels[j] == labels[q] && rank_of(x, q, j) < k)).count();
    100.0 * hits as f64 / n as f64
}

pub fn mean_average_precision(batch: &EmbeddingBatch<f64>, cutoff: usize) -> f64 {
    let (x, labels) = (batch.features(), batch.labels());
    let n = batch.len();
    let mut total = 0.0;
    for q in 0..n {
        let mut ranks: Vec<usize> =
            (0..n).filter(|&j| j != q && labels[j] == labels[q]).map(|j| rank_of(x, q, j)).collect();
        if ranks.is_empty() {
            continue;
        }
        let relevant = ranks.len();
        ranks.sort_unstable();
        let mut ap = 0.0;
        for (hit, &r) in ranks.iter().enumerate().filter(|&(_, &r)| r < cutoff) {
            ap += (hit + 1) as f64 / (r + 1) as f64;
        }
        total += ap / relevant.min(cutoff) as f64;
    }
    total / n as f64
}

pub fn nmi(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len() as f64;
    let la: BTreeSet<u32> = a.iter().copied().collect();
    let lb: BTreeSet<u32> = b.iter().copied().collect();
    let p = |f: &dyn Fn(usize) -> bool| (0..a.len()).filter(|&i| f(i)).count() as f64 / n;
    let h = |labels: &BTreeSet<u32>, v: &[u32]| -> f64 {
        labels.iter().map(|&l| p(&|i| v[i] == l)).map(|q| -q * q.ln()).sum()
    };
    let (ha, hb) = (h(&la, a), h(&lb, b));
    if ha + hb == 0.0 {
        return 1.0;
    }
    let mut mi = 0.0;
    for &x in &la {
        for &y in &lb {
            let pxy = p(&|i| a[i] == x && b[i] == y);
            if pxy > 0.0 {
                mi += pxy * (pxy / (p(&|i| a[i] == x) * p(&|i| b[i] == y))).ln();
            }
        }
    }
    (2.0 * mi / (ha + hb)).clamp(0.0, 1.0)
}

pub fn pairwise_f1(pred: &[u32], truth: &[u32]) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for i in 0..pred.len() {
        for j in (i + 1)..pred.len() {
            match (pred[i] == pred[j], truth[i] == truth[j]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    if tp + fp == 0 && tp + fn_ == 0 {
        return 1.0;
    }
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Over ordered pairs, so every distance is counted twice on both sides.
pub fn density(batch: &EmbeddingBatch<f64>) -> f64 {
    let (x, labels) = (batch.features(), batch.labels());
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..batch.len() {
        for j in 0..batch.len() {
            if i == j {
                continue;
            }
            let d = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if labels[i] == labels[j] {
                intra += d;
                n_intra += 1.0;
            } else {
                inter += d;
                n_inter += 1.0;
            }
        }
    }
    (intra / n_intra) / (inter / n_inter)
}

/// `½ ln det(I + d/(nε²) XᵀX)` through an LU determinant.
pub fn coding_rate(x: &Matrix<f64>, eps: f64) -> f64 {
    let (n, d) = x.shape();
    let xm = nalgebra::DMatrix::from_row_slice(n, d, x.as_slice());
    let a = nalgebra::DMatrix::<f64>::identity(d, d) + (xm.transpose() * &xm) * (d as f64 / (n as f64 * eps * eps));
    0.5 * a.determinant().ln()
}
