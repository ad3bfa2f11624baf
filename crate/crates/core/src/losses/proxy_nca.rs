use crate::embedding::{EmbeddingBatch, ProxySet};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;

use super::{backprop_similarity, check_dims, log_sum_exp, similarity, LossResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ProxyNcaParams {
    /// Put the positive proxy in the denominator as well (a plain softmax
    /// over all proxies). Off by default: the denominator runs over negative
    /// proxies only.
    pub include_positive: bool,
}

/// ProxyNCA with the default (negatives-only) denominator.
pub fn proxy_nca<T: Scalar>(batch: &EmbeddingBatch<T>, proxies: &ProxySet<T>) -> Result<LossResult<T>> {
    proxy_nca_with(batch, proxies, ProxyNcaParams::default())
}

/// Mean over anchors of `-log(exp(s⁺) / Σ_{p⁻} exp(s⁻))`.
pub fn proxy_nca_with<T: Scalar>(
    batch: &EmbeddingBatch<T>,
    proxies: &ProxySet<T>,
    params: ProxyNcaParams,
) -> Result<LossResult<T>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("ProxyNCA needs a nonempty batch"));
    }
    check_dims(batch, proxies)?;
    let (n, m) = (batch.len(), proxies.len());
    let sim = similarity(batch.features(), proxies.matrix());
    let inv_n = T::one() / T::count(n);
    let mut ds = Matrix::zeros(n, m);
    let mut total = T::zero();

    for (a, &label) in batch.labels().iter().enumerate() {
        let pos = proxies.row_of(label).ok_or(Error::MissingProxy { class: label })?;
        let denom: Vec<usize> = (0..m).filter(|&j| params.include_positive || j != pos).collect();
        if m < 2 {
            return Err(Error::NoNegativeProxies { class: label });
        }
        let z: Vec<T> = denom.iter().map(|&j| sim[(a, j)]).collect();
        let (lse, w) = log_sum_exp(&z);
        total += lse - sim[(a, pos)];
        ds[(a, pos)] -= inv_n;
        for (&j, &wj) in denom.iter().zip(&w) {
            ds[(a, j)] += wj * inv_n;
        }
    }

    let (gx, gp) = backprop_similarity(&ds, batch.features(), proxies.matrix());
    Ok(LossResult { value: total * inv_n, grad_embeddings: Some(gx), grad_proxies: Some(gp), warnings: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    #[test]
    fn aligned_anchor_scores_minus_one() {
        let batch = EmbeddingBatch::new(Matrix::from_rows(&[e(2, 0)]).unwrap(), vec![0]).unwrap();
        let proxies = ProxySet::new(Matrix::from_rows(&[e(2, 0), e(2, 1)]).unwrap(), vec![0, 1]).unwrap();
        let r = proxy_nca(&batch, &proxies).unwrap();
        assert!((r.value + 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_case_scores_zero() {
        let batch = EmbeddingBatch::new(Matrix::from_rows(&[e(3, 2)]).unwrap(), vec![0]).unwrap();
        let proxies = ProxySet::new(Matrix::from_rows(&[e(3, 0), e(3, 1)]).unwrap(), vec![0, 1]).unwrap();
        assert_eq!(proxy_nca(&batch, &proxies).unwrap().value, 0.0);
    }

    #[test]
    fn softmax_variant_includes_positive() {
        let batch = EmbeddingBatch::new(Matrix::from_rows(&[e(2, 0)]).unwrap(), vec![0]).unwrap();
        let proxies = ProxySet::new(Matrix::from_rows(&[e(2, 0), e(2, 1)]).unwrap(), vec![0, 1]).unwrap();
        let r = proxy_nca_with(&batch, &proxies, ProxyNcaParams { include_positive: true }).unwrap();
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert!((r.value - expected).abs() < 1e-15);
    }

    #[test]
    fn error_paths() {
        let batch = EmbeddingBatch::new(Matrix::from_rows(&[e(2, 0)]).unwrap(), vec![7]).unwrap();
        let one = ProxySet::new(Matrix::from_rows(&[e(2, 0)]).unwrap(), vec![7]).unwrap();
        assert!(matches!(proxy_nca(&batch, &one), Err(Error::NoNegativeProxies { class: 7 })));
        let other = ProxySet::new(Matrix::from_rows(&[e(2, 0), e(2, 1)]).unwrap(), vec![0, 1]).unwrap();
        assert!(matches!(proxy_nca(&batch, &other), Err(Error::MissingProxy { class: 7 })));
    }
}
