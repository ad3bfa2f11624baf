use crate::coding_rate::{coding_rate_grad_with, coding_rate_with, GramSide, RateParams};
use crate::embedding::EmbeddingBatch;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::LossResult;

/// Label-free pair anti-collapse loss: the negated coding rate of the batch,
/// taken over its n×n similarity matrix.
pub fn pair_anticollapse<T: Scalar>(batch: &EmbeddingBatch<T>, params: &RateParams<T>) -> Result<LossResult<T>> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("pair anti-collapse needs a nonempty batch"));
    }
    let x = batch.features();
    let rate = coding_rate_with(x, params, GramSide::Samples)?;
    let grad = coding_rate_grad_with(x, params, GramSide::Samples)?;
    Ok(LossResult {
        value: -rate,
        grad_embeddings: Some(grad.scale(-T::one())),
        grad_proxies: None,
        warnings: Vec::new(),
    })
}
