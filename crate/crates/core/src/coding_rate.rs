//! Gaussian coding rate of a feature set and its gradient.
//!
//! For an n×d matrix `X` and precision ε the average coding rate is
//!
//! ```text
//! R(X, ε) = ½ · log det(I_d + α XᵀX) = ½ · log det(I_n + α XXᵀ),   α = d / (n ε²)
//! ```
//!
//! The two forms share their nonzero spectrum, so the cheaper one (the
//! smaller Gram matrix) is used unless a side is forced. `n` is always the
//! row count of the operand actually passed: a batch, a class subset, or a
//! proxy selection.

use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingBatch, ProxySet};
use crate::error::{Error, Result};
use crate::metrics::embedding_density;
use crate::numerics::{gram_features, gram_samples, Cholesky, Matrix};
use crate::scalar::Scalar;
use crate::ClassId;

pub const DEFAULT_EPSILON: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateParams<T> {
    pub epsilon: T,
}

impl<T: Scalar> RateParams<T> {
    pub fn new(epsilon: T) -> Result<Self> {
        if epsilon <= T::zero() || !epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { epsilon })
    }

    /// Gram scale `d / (n ε²)` for an n×d operand.
    pub fn scale(&self, n: usize, d: usize) -> T {
        T::count(d) / (T::count(n) * self.epsilon * self.epsilon)
    }
}

impl<T: Scalar> Default for RateParams<T> {
    fn default() -> Self {
        Self { epsilon: T::lit(DEFAULT_EPSILON) }
    }
}

/// Which Gram matrix the log-determinant is taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GramSide {
    /// `XᵀX` when `d ≤ n`, otherwise `XXᵀ`.
    Auto,
    /// d×d `XᵀX`.
    Features,
    /// n×n `XXᵀ` (the similarity matrix for unit rows).
    Samples,
}

impl GramSide {
    fn resolve(self, n: usize, d: usize) -> GramSide {
        match self {
            GramSide::Auto if d <= n => GramSide::Features,
            GramSide::Auto => GramSide::Samples,
            side => side,
        }
    }
}

fn check_operand<T: Scalar>(x: &Matrix<T>) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::EmptyInput("coding rate needs at least one row"));
    }
    if x.cols() == 0 {
        return Err(Error::EmptyInput("coding rate needs at least one column"));
    }
    Ok(())
}

/// `I + α G` for the chosen Gram side.
fn regularized_gram<T: Scalar>(x: &Matrix<T>, alpha: T, side: GramSide) -> Matrix<T> {
    let g = match side {
        GramSide::Samples => gram_samples(x),
        _ => gram_features(x),
    };
    let mut m = g.scale(alpha);
    for i in 0..m.rows() {
        m[(i, i)] += T::one();
    }
    m
}

/// Coding rate evaluated through a specific Gram side.
pub fn coding_rate_with<T: Scalar>(x: &Matrix<T>, params: &RateParams<T>, side: GramSide) -> Result<T> {
    check_operand(x)?;
    let (n, d) = x.shape();
    let alpha = params.scale(n, d);
    let m = regularized_gram(x, alpha, side.resolve(n, d));
    Ok(T::lit(0.5) * Cholesky::factor(&m)?.logdet())
}

/// Average coding rate `R(X, ε)`; always `≥ 0`, zero only for `X = 0`.
pub fn coding_rate<T: Scalar>(x: &Matrix<T>, params: &RateParams<T>) -> Result<T> {
    coding_rate_with(x, params, GramSide::Auto)
}

/// `∂R/∂X = α X (I_d + α XᵀX)⁻¹ = α (I_n + α XXᵀ)⁻¹ X`.
pub fn coding_rate_grad_with<T: Scalar>(x: &Matrix<T>, params: &RateParams<T>, side: GramSide) -> Result<Matrix<T>> {
    check_operand(x)?;
    let (n, d) = x.shape();
    let alpha = params.scale(n, d);
    let side = side.resolve(n, d);
    let chol = Cholesky::factor(&regularized_gram(x, alpha, side))?;
    let g = match side {
        GramSide::Samples => chol.solve(x)?,
        _ => chol.solve(&x.transpose())?.transpose(),
    };
    Ok(g.scale(alpha))
}

pub fn coding_rate_grad<T: Scalar>(x: &Matrix<T>, params: &RateParams<T>) -> Result<Matrix<T>> {
    coding_rate_grad_with(x, params, GramSide::Auto)
}

/// Total coding length `Γ(X, ε) = (n + d) · R(X, ε)`.
pub fn total_coding_length<T: Scalar>(x: &Matrix<T>, params: &RateParams<T>) -> Result<T> {
    let r = coding_rate(x, params)?;
    Ok(T::count(x.rows() + x.cols()) * r)
}

/// Sample-weighted sum of per-class coding rates, `Σ_j (n_j / n) R(X_j, ε)`,
/// where each class submatrix uses its own row count in the Gram scale.
pub fn intra_class_rate<T: Scalar>(x: &Matrix<T>, labels: &[ClassId], params: &RateParams<T>) -> Result<T> {
    check_operand(x)?;
    if labels.len() != x.rows() {
        return Err(Error::LengthMismatch { left: x.rows(), right: labels.len() });
    }
    let mut groups: std::collections::BTreeMap<ClassId, Vec<usize>> = Default::default();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let n = T::count(x.rows());
    let mut total = T::zero();
    for rows in groups.values() {
        let sub = x.select_rows(rows);
        total += T::count(rows.len()) / n * coding_rate(&sub, params)?;
    }
    Ok(total)
}

/// Structural summary of an embedding space and its proxies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport<T> {
    pub r_global: T,
    pub r_intra: T,
    pub r_proxy: T,
    /// Intra/inter mean distance ratio; `None` when either pair set is empty.
    pub density: Option<T>,
}

pub fn rate_report<T: Scalar>(
    batch: &EmbeddingBatch<T>,
    proxies: &ProxySet<T>,
    params: &RateParams<T>,
) -> Result<RateReport<T>> {
    if proxies.dim() != batch.dim() {
        return Err(Error::ShapeMismatch(format!(
            "proxies have dimension {}, embeddings {}",
            proxies.dim(),
            batch.dim()
        )));
    }
    let density = match embedding_density(batch) {
        Ok(v) => Some(v),
        Err(Error::DegenerateInput(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(RateReport {
        r_global: coding_rate(batch.features(), params)?,
        r_intra: intra_class_rate(batch.features(), batch.labels(), params)?,
        r_proxy: coding_rate(proxies.matrix(), params)?,
        density,
    })
}
