use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingBatch, ProxySet};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

use super::{backprop_similarity, check_dims, log1p_sum_exp, similarity, LossResult, LossWarning};

pub const DEFAULT_ALPHA: f64 = 32.0;
pub const DEFAULT_DELTA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyAnchorParams<T> {
    /// Scaling factor α.
    pub alpha: T,
    /// Margin δ.
    pub delta: T,
}

impl<T: Scalar> ProxyAnchorParams<T> {
    pub fn new(alpha: T, delta: T) -> Result<Self> {
        if alpha <= T::zero() || !alpha.is_finite() || !delta.is_finite() {
            return Err(Error::InvalidConfig(format!("need alpha > 0 and finite delta, got {alpha}, {delta}")));
        }
        Ok(Self { alpha, delta })
    }
}

impl<T: Scalar> Default for ProxyAnchorParams<T> {
    fn default() -> Self {
        Self { alpha: T::lit(DEFAULT_ALPHA), delta: T::lit(DEFAULT_DELTA) }
    }
}

/// Proxy-Anchor loss.
///
/// ```text
/// L = 1/|P⁺| Σ_{p∈P⁺} ln(1 + Σ_{x: y_x = y_p} exp(-α(s(x,p) - δ)))
///   + 1/|P|  Σ_{p∈P}  ln(1 + Σ_{x: y_x ≠ y_p} exp( α(s(x,p) + δ)))
/// ```
///
/// `P⁺` holds the proxies with at least one positive sample in the batch.
/// When it is empty the positive term is 0 and
/// [`LossWarning::NoPositiveProxies`] is attached.
pub fn proxy_anchor<T: Scalar>(
    batch: &EmbeddingBatch<T>,
    proxies: &ProxySet<T>,
    params: &ProxyAnchorParams<T>,
) -> Result<LossResult<T>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("Proxy-Anchor needs a nonempty batch"));
    }
    if proxies.is_empty() {
        return Err(Error::EmptyInput("Proxy-Anchor needs at least one proxy"));
    }
    check_dims(batch, proxies)?;
    let (n, m) = (batch.len(), proxies.len());
    let labels = batch.labels();
    let sim = similarity(batch.features(), proxies.matrix());
    let (alpha, delta) = (params.alpha, params.delta);

    // (value, dvalue/dS) per proxy, before averaging
    let mut pos_terms: Vec<(T, Vec<(usize, T)>)> = Vec::new();
    let mut neg_terms: Vec<(T, Vec<(usize, T)>)> = Vec::with_capacity(m);
    for (j, &class) in proxies.class_ids().iter().enumerate() {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| labels[i] == class);
        if !pos.is_empty() {
            let z: Vec<T> = pos.iter().map(|&i| -alpha * (sim[(i, j)] - delta)).collect();
            let (v, w) = log1p_sum_exp(&z);
            pos_terms.push((v, pos.iter().zip(w).map(|(&i, wi)| (i * m + j, -alpha * wi)).collect()));
        }
        let z: Vec<T> = neg.iter().map(|&i| alpha * (sim[(i, j)] + delta)).collect();
        let (v, w) = log1p_sum_exp(&z);
        neg_terms.push((v, neg.iter().zip(w).map(|(&i, wi)| (i * m + j, alpha * wi)).collect()));
    }

    let mut ds = vec![T::zero(); n * m];
    let mut value = T::zero();
    let mut warnings = Vec::new();
    for (terms, count) in [(&pos_terms, pos_terms.len()), (&neg_terms, m)] {
        if count == 0 {
            continue;
        }
        let scale = T::one() / T::count(count);
        let mut sum = T::zero();
        for (v, grads) in terms {
            sum += *v;
            for &(idx, g) in grads {
                ds[idx] += g * scale;
            }
        }
        value += sum * scale;
    }
    if pos_terms.is_empty() {
        warnings.push(LossWarning::NoPositiveProxies);
    }

    let ds = Matrix::new(n, m, ds)?;
    let (gx, gp) = backprop_similarity(&ds, batch.features(), proxies.matrix());
    Ok(LossResult { value, grad_embeddings: Some(gx), grad_proxies: Some(gp), warnings })
}
