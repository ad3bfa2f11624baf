//! Nearest-neighbour retrieval metrics over cosine similarity.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::numerics::dot;
use crate::scalar::Scalar;

/// Indices of every row other than `query`, most similar first. Equal
/// similarities keep ascending row order.
pub fn ranked_neighbors<T: Scalar>(batch: &EmbeddingBatch<T>, query: usize) -> Vec<usize> {
    let x = batch.features();
    let q = x.row(query);
    let mut scored: Vec<(T, usize)> = (0..batch.len()).filter(|&j| j != query).map(|j| (dot(q, x.row(j)), j)).collect();
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, j)| j).collect()
}

fn check_batch<T: Scalar>(batch: &EmbeddingBatch<T>) -> Result<()> {
    if batch.len() < 2 {
        return Err(Error::EmptyInput("retrieval needs at least two rows"));
    }
    Ok(())
}

/// Recall@K in percent for each requested K: the share of queries whose K
/// nearest neighbours (self excluded) contain a row of the same class.
pub fn recall_at_k<T: Scalar>(batch: &EmbeddingBatch<T>, ks: &[usize]) -> Result<BTreeMap<usize, f64>> {
    check_batch(batch)?;
    let n = batch.len();
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k >= n) {
        return Err(Error::KTooLarge { k, n });
    }
    let labels = batch.labels();
    // position of the first same-class neighbour per query, n if none
    let first_hit: Vec<usize> =
        (0..n).map(|q| ranked_neighbors(batch, q).iter().position(|&j| labels[j] == labels[q]).unwrap_or(n)).collect();
    Ok(ks
        .iter()
        .map(|&k| {
            let hits = first_hit.iter().filter(|&&p| p < k).count();
            (k, 100.0 * hits as f64 / n as f64)
        })
        .collect())
}

/// Mean average precision over the ranked lists truncated at `cutoff`.
///
/// Each query's AP is normalised by `min(cutoff, #relevant)`; a query with no
/// same-class rows contributes 0.
pub fn mean_average_precision<T: Scalar>(batch: &EmbeddingBatch<T>, cutoff: usize) -> Result<f64> {
    check_batch(batch)?;
    if cutoff == 0 {
        return Err(Error::InvalidConfig("mAP cutoff must be at least 1".into()));
    }
    let labels = batch.labels();
    let n = batch.len();
    let mut total = 0.0;
    for q in 0..n {
        let relevant = labels.iter().enumerate().filter(|&(j, &l)| j != q && l == labels[q]).count();
        if relevant == 0 {
            continue;
        }
        let mut hits = 0usize;
        let mut sum_prec = 0.0;
        for (rank, &j) in ranked_neighbors(batch, q).iter().take(cutoff).enumerate() {
            if labels[j] == labels[q] {
                hits += 1;
                sum_prec += hits as f64 / (rank + 1) as f64;
            }
        }
        total += sum_prec / relevant.min(cutoff) as f64;
    }
    Ok(total / n as f64)
}
