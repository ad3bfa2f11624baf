use serde::{Deserialize, Serialize};

use crate::coding_rate::{coding_rate, coding_rate_grad, RateParams};
use crate::embedding::{EmbeddingBatch, ProxySet};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;
use crate::ClassId;

use super::{pair_anticollapse, proxy_anchor, proxy_nca, LossResult, ProxyAnchorParams};

/// Weight of the base proxy loss that scored best in the ablation runs.
pub const DEFAULT_NU: f64 = 0.0035;
/// Range of base-loss weights used in practice.
pub const NU_RANGE: (f64, f64) = (0.001, 0.1);

/// Which proxies enter the rate term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProxySelection {
    /// Every class proxy.
    AllClass,
    /// Only the proxies of classes present in the batch.
    MiniBatch,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseLoss<T> {
    ProxyAnchor(ProxyAnchorParams<T>),
    ProxyNca,
}

impl<T: Scalar> BaseLoss<T> {
    pub fn evaluate(&self, batch: &EmbeddingBatch<T>, proxies: &ProxySet<T>) -> Result<LossResult<T>> {
        match self {
            BaseLoss::ProxyAnchor(p) => proxy_anchor(batch, proxies, p),
            BaseLoss::ProxyNca => proxy_nca(batch, proxies),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntiCollapseConfig<T> {
    /// Weight ν of the base proxy loss.
    pub nu: T,
    pub rate: RateParams<T>,
    pub selection: ProxySelection,
    pub base: BaseLoss<T>,
}

impl<T: Scalar> Default for AntiCollapseConfig<T> {
    fn default() -> Self {
        Self {
            nu: T::lit(DEFAULT_NU),
            rate: RateParams::default(),
            selection: ProxySelection::MiniBatch,
            base: BaseLoss::ProxyAnchor(ProxyAnchorParams::default()),
        }
    }
}

fn selected_rows<T: Scalar>(proxies: &ProxySet<T>, filter: Option<&[ClassId]>) -> Result<Vec<usize>> {
    let mut rows = match filter {
        None => (0..proxies.len()).collect(),
        Some(classes) => classes
            .iter()
            .map(|&c| proxies.row_of(c).ok_or(Error::MissingProxy { class: c }))
            .collect::<Result<Vec<_>>>()?,
    };
    rows.sort_unstable();
    rows.dedup();
    if rows.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(rows)
}

/// Coding rate of the proxies of `filter` (all proxies when `None`), with
/// `n` equal to the number of selected proxies.
pub fn proxy_rate<T: Scalar>(proxies: &ProxySet<T>, filter: Option<&[ClassId]>, params: &RateParams<T>) -> Result<T> {
    let rows = selected_rows(proxies, filter)?;
    coding_rate(&proxies.matrix().select_rows(&rows), params)
}

/// Gradient of [`proxy_rate`] with respect to the full proxy matrix; rows
/// outside the selection are zero.
pub fn proxy_rate_grad<T: Scalar>(
    proxies: &ProxySet<T>,
    filter: Option<&[ClassId]>,
    params: &RateParams<T>,
) -> Result<Matrix<T>> {
    let rows = selected_rows(proxies, filter)?;
    let sub = coding_rate_grad(&proxies.matrix().select_rows(&rows), params)?;
    let mut full = Matrix::zeros(proxies.len(), proxies.dim());
    for (k, &r) in rows.iter().enumerate() {
        full.row_mut(r).copy_from_slice(sub.row(k));
    }
    Ok(full)
}

/// Proxy anti-collapse loss, `-R_proxy(selected) + ν · L_base`.
///
/// The rate term touches proxies only, so the embedding gradient is ν times
/// the base-loss embedding gradient.
pub fn proxy_anticollapse<T: Scalar>(
    batch: &EmbeddingBatch<T>,
    proxies: &ProxySet<T>,
    config: &AntiCollapseConfig<T>,
) -> Result<LossResult<T>> {
    if config.nu < T::zero() || !config.nu.is_finite() {
        return Err(Error::InvalidConfig(format!("nu must be nonnegative, got {}", config.nu)));
    }
    let batch_classes;
    let filter = match config.selection {
        ProxySelection::AllClass => None,
        ProxySelection::MiniBatch => {
            batch_classes = batch.classes();
            Some(batch_classes.as_slice())
        }
    };
    let rate = proxy_rate(proxies, filter, &config.rate)?;
    let mut grad_proxies = proxy_rate_grad(proxies, filter, &config.rate)?.scale(-T::one());
    let base = config.base.evaluate(batch, proxies)?;
    if let Some(gp) = &base.grad_proxies {
        grad_proxies.add_scaled(config.nu, gp)?;
    }
    Ok(LossResult {
        value: -rate + config.nu * base.value,
        grad_embeddings: base.grad_embeddings.map(|g| g.scale(config.nu)),
        grad_proxies: Some(grad_proxies),
        warnings: base.warnings,
    })
}

/// Pair anti-collapse plus an unweighted base proxy loss.
pub fn pair_plus_proxy<T: Scalar>(
    batch: &EmbeddingBatch<T>,
    proxies: &ProxySet<T>,
    rate: &RateParams<T>,
    base: &BaseLoss<T>,
) -> Result<LossResult<T>> {
    let pair = pair_anticollapse(batch, rate)?;
    let base = base.evaluate(batch, proxies)?;
    let mut ge = pair.grad_embeddings.expect("pair loss has an embedding gradient");
    if let Some(g) = &base.grad_embeddings {
        ge.add_scaled(T::one(), g)?;
    }
    Ok(LossResult {
        value: pair.value + base.value,
        grad_embeddings: Some(ge),
        grad_proxies: base.grad_proxies,
        warnings: base.warnings,
    })
}
