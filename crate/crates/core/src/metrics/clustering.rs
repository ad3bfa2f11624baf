//! k-means and partition agreement scores (NMI, pairwise F1).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans<T> {
    pub assignments: Vec<usize>,
    pub centroids: Matrix<T>,
    pub inertia: T,
    pub iterations: usize,
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y))
}

fn nearest<T: Scalar>(point: &[T], centroids: &Matrix<T>) -> (usize, T) {
    let mut best = (0, T::infinity());
    for c in 0..centroids.rows() {
        let d = sq_dist(point, centroids.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<T: Scalar>(x: &Matrix<T>, k: usize, rng: &mut SeededRng) -> Matrix<T> {
    let n = x.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<T> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: T = d2.iter().copied().sum();
        let next = if total > T::zero() {
            let target = T::lit(rng.uniform()) * total;
            let mut acc = T::zero();
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > T::zero() && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just above the final sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > T::zero()).expect("positive total"))
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

/// Lloyd's algorithm from a seeded k-means++ start. Stops at an assignment
/// fixpoint or after [`KMEANS_MAX_ITER`] iterations; an emptied cluster keeps
/// its previous centroid.
pub fn kmeans_cluster<T: Scalar>(x: &Matrix<T>, k: usize, seed: u64) -> Result<KMeans<T>> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptyInput("k-means needs at least one point"));
    }
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let mut rng = SeededRng::new(seed);
    let mut centroids = plus_plus_init(x, k, &mut rng);
    let mut assignments: Vec<usize> = (0..n).map(|i| nearest(x.row(i), &centroids).0).collect();
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let mut sums = Matrix::<T>::zeros(k, x.cols());
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, &v) in sums.row_mut(a).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = T::one() / T::count(count);
                for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        let next: Vec<usize> = (0..n).map(|i| nearest(x.row(i), &centroids).0).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }
    let inertia = (0..n).map(|i| sq_dist(x.row(i), centroids.row(assignments[i]))).sum();
    Ok(KMeans { assignments, centroids, inertia, iterations })
}

struct Contingency {
    n: usize,
    cells: Vec<usize>,
    left: Vec<usize>,
    right: Vec<usize>,
}

fn contingency<A: Ord + Copy, B: Ord + Copy>(a: &[A], b: &[B]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("partitions are empty"));
    }
    let mut cells: BTreeMap<(A, B), usize> = BTreeMap::new();
    let mut left: BTreeMap<A, usize> = BTreeMap::new();
    let mut right: BTreeMap<B, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *cells.entry((x, y)).or_default() += 1;
        *left.entry(x).or_default() += 1;
        *right.entry(y).or_default() += 1;
    }
    Ok(Contingency {
        n: a.len(),
        cells: cells.into_values().collect(),
        left: left.into_values().collect(),
        right: right.into_values().collect(),
    })
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts.iter().map(|&c| c as f64 / n).map(|p| -p * p.ln()).sum()
}

/// Normalized mutual information, `MI / ((H(pred) + H(truth)) / 2)`.
///
/// Two single-cluster partitions agree trivially and score 1.
pub fn nmi<A, B>(pred: &[A], truth: &[B]) -> Result<f64>
where
    A: Ord + Copy,
    B: Ord + Copy,
{
    let t = contingency(pred, truth)?;
    let n = t.n as f64;
    let h_pred = entropy(&t.left, n);
    let h_truth = entropy(&t.right, n);
    if h_pred + h_truth == 0.0 {
        return Ok(1.0);
    }
    // MI = H(pred) + H(truth) - H(pred, truth)
    let mi = h_pred + h_truth - entropy(&t.cells, n);
    Ok((mi / (0.5 * (h_pred + h_truth))).clamp(0.0, 1.0))
}

fn pairs(c: usize) -> u64 {
    (c as u64) * (c as u64).saturating_sub(1) / 2
}

/// Pairwise clustering F1: precision and recall of same-cluster pairs
/// against same-class pairs. Two all-singleton partitions score 1.
pub fn f1_clustering<A, B>(pred: &[A], truth: &[B]) -> Result<f64>
where
    A: Ord + Copy,
    B: Ord + Copy,
{
    let t = contingency(pred, truth)?;
    let tp: u64 = t.cells.iter().map(|&c| pairs(c)).sum();
    let pred_pairs: u64 = t.left.iter().map(|&c| pairs(c)).sum();
    let true_pairs: u64 = t.right.iter().map(|&c| pairs(c)).sum();
    if pred_pairs == 0 && true_pairs == 0 {
        return Ok(1.0);
    }
    let precision = if pred_pairs == 0 { 0.0 } else { tp as f64 / pred_pairs as f64 };
    let recall = if true_pairs == 0 { 0.0 } else { tp as f64 / true_pairs as f64 };
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}
