//! Trainable objectives over embeddings and proxies, each returning its value
//! together with analytic gradients.
//!
//! All exponential aggregations go through a log-sum-exp with the running
//! maximum factored out, so values stay finite for scaling factors up to at
//! least 64 on unit-norm inputs.

mod anticollapse;
mod pair;
mod proxy_anchor;
mod proxy_nca;

use serde::{Deserialize, Serialize};

pub use anticollapse::{
    pair_plus_proxy, proxy_anticollapse, proxy_rate, proxy_rate_grad, AntiCollapseConfig, BaseLoss, ProxySelection,
    DEFAULT_NU, NU_RANGE,
};
pub use pair::pair_anticollapse;
pub use proxy_anchor::{proxy_anchor, ProxyAnchorParams, DEFAULT_ALPHA, DEFAULT_DELTA};
pub use proxy_nca::{proxy_nca, proxy_nca_with, ProxyNcaParams};

use crate::embedding::{EmbeddingBatch, ProxySet};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// Deviation from unit norm tolerated by [`cosine_similarity_matrix`].
pub const SIMILARITY_NORM_TOL: f64 = 1e-6;

/// Non-fatal conditions met while evaluating a loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossWarning {
    /// No proxy had a positive sample in the batch; the positive term is 0.
    NoPositiveProxies,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossResult<T> {
    pub value: T,
    pub grad_embeddings: Option<Matrix<T>>,
    pub grad_proxies: Option<Matrix<T>>,
    pub warnings: Vec<LossWarning>,
}

/// `A·Bᵀ` without any normalization check.
pub fn similarity<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    a.matmul_transposed(b).expect("operands share the embedding dimension")
}

/// Cosine similarities between the unit-norm rows of `a` and `b`.
pub fn cosine_similarity_matrix<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    for m in [a, b] {
        for i in 0..m.rows() {
            let norm = m.row_norm(i);
            if (norm - T::one()).abs() > T::lit(SIMILARITY_NORM_TOL) {
                return Err(Error::NotNormalized { row: i, norm: norm.as_f64() });
            }
        }
    }
    a.matmul_transposed(b)
}

/// `ln(1 + Σ exp(z_i))` and the weights `exp(z_i) / (1 + Σ exp(z_j))`.
pub(crate) fn log1p_sum_exp<T: Scalar>(z: &[T]) -> (T, Vec<T>) {
    let m = z.iter().fold(T::zero(), |acc, &v| acc.max(v));
    let denom = (-m).exp() + z.iter().map(|&v| (v - m).exp()).sum::<T>();
    let weights = z.iter().map(|&v| (v - m).exp() / denom).collect();
    (m + denom.ln(), weights)
}

/// `ln Σ exp(z_i)` and the softmax weights.
pub(crate) fn log_sum_exp<T: Scalar>(z: &[T]) -> (T, Vec<T>) {
    let m = z.iter().fold(T::neg_infinity(), |acc, &v| acc.max(v));
    let denom = z.iter().map(|&v| (v - m).exp()).sum::<T>();
    let weights = z.iter().map(|&v| (v - m).exp() / denom).collect();
    (m + denom.ln(), weights)
}

/// Chain rule through `S = X·Pᵀ`: returns `(dL/dX, dL/dP)` given `dL/dS`.
pub(crate) fn backprop_similarity<T: Scalar>(ds: &Matrix<T>, x: &Matrix<T>, p: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
    let gx = ds.matmul(p).expect("dS is n×m and P is m×d");
    let gp = ds.transpose().matmul(x).expect("dSᵀ is m×n and X is n×d");
    (gx, gp)
}

pub(crate) fn check_dims<T: Scalar>(batch: &EmbeddingBatch<T>, proxies: &ProxySet<T>) -> Result<()> {
    if batch.dim() != proxies.dim() {
        return Err(Error::ShapeMismatch(format!(
            "embeddings have dimension {}, proxies {}",
            batch.dim(),
            proxies.dim()
        )));
    }
    Ok(())
}
