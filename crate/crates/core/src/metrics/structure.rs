//! Embedding-space structure diagnostics.

use serde::Serialize;

use crate::embedding::{EmbeddingBatch, ProxySet};
use crate::error::{Error, Result};
use crate::losses::similarity;
use crate::numerics::{dot, Matrix};
use crate::scalar::Scalar;

fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y)).sqrt()
}

/// Mean intra-class pairwise distance over mean inter-class pairwise distance.
pub fn embedding_density<T: Scalar>(batch: &EmbeddingBatch<T>) -> Result<T> {
    let x = batch.features();
    let labels = batch.labels();
    let (mut intra, mut n_intra) = (T::zero(), 0usize);
    let (mut inter, mut n_inter) = (T::zero(), 0usize);
    for i in 0..batch.len() {
        for j in (i + 1)..batch.len() {
            let d = euclidean(x.row(i), x.row(j));
            if labels[i] == labels[j] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    if n_intra == 0 {
        return Err(Error::DegenerateInput("no same-class pairs"));
    }
    if n_inter == 0 {
        return Err(Error::DegenerateInput("no different-class pairs"));
    }
    let inter_mean = inter / T::count(n_inter);
    if inter_mean == T::zero() {
        return Err(Error::DegenerateInput("mean inter-class distance is zero"));
    }
    Ok((intra / T::count(n_intra)) / inter_mean)
}

/// Pairwise proxy cosine similarities.
pub fn proxy_similarity_heat<T: Scalar>(proxies: &ProxySet<T>) -> Matrix<T> {
    similarity(proxies.matrix(), proxies.matrix())
}

/// Largest `|cos|` between distinct rows, 0 for fewer than two rows.
pub fn max_off_diagonal<T: Scalar>(sim: &Matrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..sim.rows() {
        for j in 0..sim.cols() {
            if i != j {
                worst = worst.max(sim[(i, j)].abs());
            }
        }
    }
    worst
}

/// Counts of positive-pair and negative-pair cosine similarities in equal-width
/// bins over `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityHistogram {
    pub edges: Vec<f64>,
    pub positive: Vec<u64>,
    pub negative: Vec<u64>,
}

impl SimilarityHistogram {
    pub fn total(&self) -> u64 {
        self.positive.iter().chain(&self.negative).sum()
    }
}

pub fn similarity_histogram<T: Scalar>(batch: &EmbeddingBatch<T>, bins: usize) -> Result<SimilarityHistogram> {
    if bins == 0 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    let width = 2.0 / bins as f64;
    let edges = (0..=bins).map(|b| -1.0 + b as f64 * width).collect();
    let mut positive = vec![0u64; bins];
    let mut negative = vec![0u64; bins];
    let x = batch.features();
    let labels = batch.labels();
    for i in 0..batch.len() {
        for j in (i + 1)..batch.len() {
            let s = dot(x.row(i), x.row(j)).as_f64();
            let b = (((s + 1.0) / width).floor().max(0.0) as usize).min(bins - 1);
            if labels[i] == labels[j] {
                positive[b] += 1;
            } else {
                negative[b] += 1;
            }
        }
    }
    Ok(SimilarityHistogram { edges, positive, negative })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_zero_for_collapsed_orthogonal_classes() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]]).unwrap();
        let b = EmbeddingBatch::new(x, vec![0, 0, 1, 1]).unwrap();
        assert_eq!(embedding_density(&b).unwrap(), 0.0);
    }

    #[test]
    fn density_degenerate_cases() {
        let same = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]]).unwrap();
        let b = EmbeddingBatch::new(same.clone(), vec![0, 0, 1]).unwrap();
        assert!(matches!(embedding_density(&b), Err(Error::DegenerateInput(_))));
        let singletons = EmbeddingBatch::new(same, vec![0, 1, 2]).unwrap();
        assert!(matches!(embedding_density(&singletons), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn heat_of_orthonormal_and_identical() {
        let p = ProxySet::new(Matrix::<f64>::identity(3), vec![0, 1, 2]).unwrap();
        assert_eq!(proxy_similarity_heat(&p), Matrix::identity(3));
        let same = Matrix::<f64>::from_rows(&[[0.6, 0.8], [0.6, 0.8]]).unwrap();
        let h = proxy_similarity_heat(&ProxySet::new_unchecked(same, vec![0, 1]).unwrap());
        assert!(h.as_slice().iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!((max_off_diagonal(&h) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn histogram_conserves_pairs() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.6, 0.8], [0.8, -0.6]]).unwrap();
        let b = EmbeddingBatch::new(x, vec![0, 0, 1, 1, 2]).unwrap();
        let h = similarity_histogram(&b, 7).unwrap();
        assert_eq!(h.total(), 10);
        assert_eq!(h.positive.iter().sum::<u64>(), 2);
        // cos = -1 and cos = -0.8 both fall in [-1, -5/7)
        assert_eq!(h.negative[0], 2);
    }
}
