//! Retrieval, clustering and embedding-structure metrics.

mod clustering;
mod retrieval;
mod structure;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use clustering::{f1_clustering, kmeans_cluster, nmi, KMeans, KMEANS_MAX_ITER};
pub use retrieval::{mean_average_precision, ranked_neighbors, recall_at_k};
pub use structure::{
    embedding_density, max_off_diagonal, proxy_similarity_heat, similarity_histogram, SimilarityHistogram,
};

use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Retrieval and clustering quality of one embedding set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Recall@K in percent.
    pub recall_at: BTreeMap<usize, f64>,
    pub nmi: f64,
    pub f1: f64,
    pub map_at: BTreeMap<usize, f64>,
    /// `None` when the labels leave no intra- or inter-class pairs.
    pub density: Option<f64>,
}

/// Runs every metric. Clusters come from k-means with one cluster per
/// ground-truth class.
pub fn evaluate<T: Scalar>(
    batch: &EmbeddingBatch<T>,
    ks: &[usize],
    map_cutoffs: &[usize],
    seed: u64,
) -> Result<EvalReport> {
    let recall_at = recall_at_k(batch, ks)?;
    let k = batch.classes().len();
    let clusters = kmeans_cluster(batch.features(), k, seed)?.assignments;
    let map_at =
        map_cutoffs.iter().map(|&c| mean_average_precision(batch, c).map(|v| (c, v))).collect::<Result<_>>()?;
    let density = match embedding_density(batch) {
        Ok(v) => Some(v.as_f64()),
        Err(Error::DegenerateInput(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        recall_at,
        nmi: nmi(&clusters, batch.labels())?,
        f1: f1_clustering(&clusters, batch.labels())?,
        map_at,
        density,
    })
}
