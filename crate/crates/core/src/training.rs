//! Projected gradient descent of embeddings and proxies on the unit sphere.
//!
//! Embeddings are optimized directly (there is no backbone). Every step moves
//! the rows touched by the loss against their gradient, proxies with a
//! larger learning rate, then projects each moved row back to unit norm.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::coding_rate::{coding_rate, coding_rate_grad, intra_class_rate, RateParams};
use crate::data_io::{BatchPlan, BatchSampler};
use crate::embedding::{normalize_row, normalize_rows, EmbeddingBatch, ProxySet};
use crate::error::{Error, Result};
use crate::losses::{
    pair_anticollapse, pair_plus_proxy, proxy_anchor, proxy_anticollapse, proxy_nca, AntiCollapseConfig, BaseLoss,
    LossResult, ProxyAnchorParams,
};
use crate::metrics::{embedding_density, kmeans_cluster, max_off_diagonal, nmi, proxy_similarity_heat, recall_at_k};
use crate::numerics::Matrix;
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::ClassId;

pub const DEFAULT_LR: f64 = 1e-2;
/// Learning rate used with Adam and a pretrained backbone at full scale.
pub const BACKBONE_LR: f64 = 1e-5;
pub const DEFAULT_PROXY_LR_MULTIPLIER: f64 = 100.0;

const PROXY_STREAM: u64 = 1;
const SAMPLER_STREAM: u64 = 2;
const KMEANS_STREAM: u64 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind<T> {
    ProxyAnchor(ProxyAnchorParams<T>),
    ProxyNca,
    PairAntiCollapse(RateParams<T>),
    AntiCollapse(AntiCollapseConfig<T>),
    /// Pair anti-collapse plus an unweighted base proxy loss.
    PairPlusProxy {
        rate: RateParams<T>,
        base: BaseLoss<T>,
    },
}

impl<T: Scalar> LossKind<T> {
    pub fn evaluate(&self, batch: &EmbeddingBatch<T>, proxies: &ProxySet<T>) -> Result<LossResult<T>> {
        match self {
            LossKind::ProxyAnchor(p) => proxy_anchor(batch, proxies, p),
            LossKind::ProxyNca => proxy_nca(batch, proxies),
            LossKind::PairAntiCollapse(r) => pair_anticollapse(batch, r),
            LossKind::AntiCollapse(cfg) => proxy_anticollapse(batch, proxies, cfg),
            LossKind::PairPlusProxy { rate, base } => pair_plus_proxy(batch, proxies, rate, base),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig<T> {
    pub loss: LossKind<T>,
    pub lr: T,
    pub proxy_lr_multiplier: T,
    pub epochs: usize,
    pub batch_plan: BatchPlan,
    pub eval_every: usize,
    pub seed: u64,
    /// Precision used by the traced coding-rate metrics.
    pub trace_rate: RateParams<T>,
    pub sample_with_replacement: bool,
}

impl<T: Scalar> TrainConfig<T> {
    pub fn new(loss: LossKind<T>) -> Self {
        Self {
            loss,
            lr: T::lit(DEFAULT_LR),
            proxy_lr_multiplier: T::lit(DEFAULT_PROXY_LR_MULTIPLIER),
            epochs: 1,
            batch_plan: BatchPlan::default(),
            eval_every: 1,
            seed: 0,
            trace_rate: RateParams::default(),
            sample_with_replacement: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lr < T::zero() || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        if self.proxy_lr_multiplier <= T::zero() || !self.proxy_lr_multiplier.is_finite() {
            return Err(Error::InvalidConfig("proxy learning-rate multiplier must be positive".into()));
        }
        if self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig("epochs and eval_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// Standard-normal proxies projected to the unit sphere, one per class id.
pub fn init_proxies_for<T: Scalar>(classes: &[ClassId], dim: usize, seed: u64) -> Result<ProxySet<T>> {
    if dim == 0 {
        return Err(Error::InvalidConfig("proxy dimension must be at least 1".into()));
    }
    let mut rng = SeededRng::new(seed);
    let m = classes.len();
    let mut p = Matrix::new(m, dim, (0..m * dim).map(|_| rng.normal_as::<T>()).collect())?;
    normalize_rows(&mut p)?;
    ProxySet::new_unchecked(p, classes.to_vec())
}

/// Proxies for classes `0..num_classes`.
pub fn init_proxies<T: Scalar>(num_classes: usize, dim: usize, seed: u64) -> Result<ProxySet<T>> {
    let classes: Vec<ClassId> = (0..num_classes as ClassId).collect();
    init_proxies_for(&classes, dim, seed)
}

#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub embeddings: EmbeddingBatch<T>,
    pub proxies: ProxySet<T>,
    pub epoch: usize,
    pub steps: usize,
    sampler: BatchSampler,
}

impl<T: Scalar> TrainState<T> {
    /// Fresh state: proxies drawn for every class in `data`, sampler seeded
    /// from `config.seed`.
    pub fn new(config: &TrainConfig<T>, data: EmbeddingBatch<T>) -> Result<Self> {
        let root = SeededRng::new(config.seed);
        let proxies = init_proxies_for(&data.classes(), data.dim(), root.fork(PROXY_STREAM).seed())?;
        let sampler = BatchSampler::new(
            data.labels(),
            config.batch_plan,
            root.fork(SAMPLER_STREAM).seed(),
            config.sample_with_replacement,
        )?;
        Ok(Self { embeddings: data, proxies, epoch: 0, steps: 0, sampler })
    }

    pub fn with_proxies(mut self, proxies: ProxySet<T>) -> Result<Self> {
        if proxies.dim() != self.embeddings.dim() {
            return Err(Error::ShapeMismatch("proxy and embedding dimensions differ".into()));
        }
        self.proxies = proxies;
        Ok(self)
    }
}

fn first_non_finite<T: Scalar>(m: &Matrix<T>) -> Option<usize> {
    (0..m.rows()).find(|&r| m.row(r).iter().any(|v| !v.is_finite()))
}

/// Applies `row -= step · grad_row` and re-projects; returns false when the
/// row did not move.
fn descend_row<T: Scalar>(row: &mut [T], grad: &[T], step: T) -> Result<bool> {
    let mut moved = false;
    for (v, &g) in row.iter_mut().zip(grad) {
        let delta = step * g;
        if delta != T::zero() {
            *v -= delta;
            moved = true;
        }
    }
    if moved {
        normalize_row(row).ok_or(Error::DegenerateInput("update sent a row to the origin"))?;
    }
    Ok(moved)
}

/// One projected gradient step on the rows in `batch_rows`. Returns the loss
/// evaluated before the update.
pub fn train_step<T: Scalar>(state: &mut TrainState<T>, batch_rows: &[usize], config: &TrainConfig<T>) -> Result<T> {
    if let Some(&bad) = batch_rows.iter().find(|&&r| r >= state.embeddings.len()) {
        return Err(Error::ShapeMismatch(format!("batch row {bad} out of range")));
    }
    let batch = state.embeddings.select(batch_rows);
    let result = config.loss.evaluate(&batch, &state.proxies)?;
    if !result.value.is_finite() {
        return Err(Error::NonFiniteGradient { operand: "loss value", row: 0, steps: state.steps });
    }
    if let Some(row) = result.grad_embeddings.as_ref().and_then(first_non_finite) {
        return Err(Error::NonFiniteGradient { operand: "embeddings", row: batch_rows[row], steps: state.steps });
    }
    if let Some(row) = result.grad_proxies.as_ref().and_then(first_non_finite) {
        return Err(Error::NonFiniteGradient { operand: "proxies", row, steps: state.steps });
    }

    if let Some(ge) = &result.grad_embeddings {
        // a row drawn twice accumulates both gradients before projection
        let mut acc: std::collections::BTreeMap<usize, Vec<T>> = Default::default();
        for (k, &r) in batch_rows.iter().enumerate() {
            let slot = acc.entry(r).or_insert_with(|| vec![T::zero(); ge.cols()]);
            for (a, &g) in slot.iter_mut().zip(ge.row(k)) {
                *a += g;
            }
        }
        let x = state.embeddings.features_mut();
        for (r, g) in acc {
            descend_row(x.row_mut(r), &g, config.lr)?;
        }
    }
    if let Some(gp) = &result.grad_proxies {
        let step = config.lr * config.proxy_lr_multiplier;
        let p = state.proxies.matrix_mut();
        for r in 0..gp.rows() {
            descend_row(p.row_mut(r), gp.row(r), step)?;
        }
    }
    state.steps += 1;
    Ok(result.value)
}

/// Metrics recorded at one evaluation point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    /// Mean pre-step batch loss over the epoch.
    pub loss: f64,
    pub r_global: f64,
    pub r_intra: f64,
    pub r_proxy: f64,
    pub density: Option<f64>,
    pub recall1: f64,
    pub nmi: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

pub const TRACE_CSV_HEADER: &str = "epoch,loss,r_global,r_intra,r_proxy,density,recall1,nmi";

impl TrainTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// First record with the highest Recall@1.
    pub fn best_recall(&self) -> Option<&TraceRecord> {
        self.records.iter().fold(None, |best: Option<&TraceRecord>, r| match best {
            Some(b) if b.recall1 >= r.recall1 => Some(b),
            _ => Some(r),
        })
    }

    pub fn r_proxy_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.r_proxy).collect()
    }

    /// Population standard deviation of the proxy rate over the trace.
    pub fn r_proxy_std(&self) -> Option<f64> {
        if self.records.is_empty() {
            return None;
        }
        let series = self.r_proxy_series();
        let n = series.len() as f64;
        let mean = series.iter().sum::<f64>() / n;
        Some((series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt())
    }

    /// CSV with header [`TRACE_CSV_HEADER`]; an undefined density is an
    /// empty field.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for r in &self.records {
            let density = r.density.map(|d| d.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.epoch, r.loss, r.r_global, r.r_intra, r.r_proxy, density, r.recall1, r.nmi
            )?;
        }
        Ok(())
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Side-by-side summary of two runs on the same data and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub baseline_final_r_proxy: f64,
    pub candidate_final_r_proxy: f64,
    pub baseline_r_proxy_std: f64,
    pub candidate_r_proxy_std: f64,
    /// Records at each run's best Recall@1.
    pub baseline_best: TraceRecord,
    pub candidate_best: TraceRecord,
}

impl PairedComparison {
    pub fn new(baseline: &TrainTrace, candidate: &TrainTrace) -> Result<Self> {
        let (Some(b_last), Some(c_last)) = (baseline.records.last(), candidate.records.last()) else {
            return Err(Error::EmptyInput("trace"));
        };
        Ok(Self {
            baseline_final_r_proxy: b_last.r_proxy,
            candidate_final_r_proxy: c_last.r_proxy,
            baseline_r_proxy_std: baseline.r_proxy_std().unwrap_or(0.0),
            candidate_r_proxy_std: candidate.r_proxy_std().unwrap_or(0.0),
            baseline_best: baseline.best_recall().cloned().expect("non-empty trace"),
            candidate_best: candidate.best_recall().cloned().expect("non-empty trace"),
        })
    }

    pub fn candidate_final_rate_higher(&self) -> bool {
        self.candidate_final_r_proxy > self.baseline_final_r_proxy
    }

    pub fn candidate_rate_steadier(&self) -> bool {
        self.candidate_r_proxy_std < self.baseline_r_proxy_std
    }

    pub fn best_r_global_lower(&self) -> bool {
        self.candidate_best.r_global < self.baseline_best.r_global
    }

    pub fn best_r_intra_lower(&self) -> bool {
        self.candidate_best.r_intra < self.baseline_best.r_intra
    }

    pub fn best_r_proxy_higher(&self) -> bool {
        self.candidate_best.r_proxy > self.baseline_best.r_proxy
    }
}

/// Snapshot metrics over the full data set.
pub fn evaluate_state<T: Scalar>(state: &TrainState<T>, config: &TrainConfig<T>, loss: f64) -> Result<TraceRecord> {
    let x = state.embeddings.features();
    let labels = state.embeddings.labels();
    let k = state.embeddings.classes().len();
    let kmeans_seed = SeededRng::new(config.seed).fork(KMEANS_STREAM).seed();
    let clusters = kmeans_cluster(x, k, kmeans_seed)?.assignments;
    let density = match embedding_density(&state.embeddings) {
        Ok(v) => Some(v.as_f64()),
        Err(Error::DegenerateInput(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(TraceRecord {
        epoch: state.epoch,
        loss,
        r_global: coding_rate(x, &config.trace_rate)?.as_f64(),
        r_intra: intra_class_rate(x, labels, &config.trace_rate)?.as_f64(),
        r_proxy: coding_rate(state.proxies.matrix(), &config.trace_rate)?.as_f64(),
        density,
        recall1: recall_at_k(&state.embeddings, &[1])?[&1],
        nmi: nmi(&clusters, labels)?,
    })
}

/// Runs an already initialised state for `config.epochs` epochs.
pub fn train_from<T: Scalar>(mut state: TrainState<T>, config: &TrainConfig<T>) -> Result<(TrainState<T>, TrainTrace)> {
    config.validate()?;
    let mut trace = TrainTrace::default();
    for _ in 0..config.epochs {
        let batches = state.sampler.epoch();
        let mut loss_sum = 0.0;
        for rows in &batches {
            loss_sum += train_step(&mut state, rows, config)?.as_f64();
        }
        state.epoch += 1;
        if state.epoch.is_multiple_of(config.eval_every) {
            let mean_loss = if batches.is_empty() { 0.0 } else { loss_sum / batches.len() as f64 };
            trace.records.push(evaluate_state(&state, config, mean_loss)?);
        }
    }
    Ok((state, trace))
}

/// Trains proxies and embeddings from scratch; the trace holds one record
/// every `eval_every` epochs.
pub fn train<T: Scalar>(config: &TrainConfig<T>, data: EmbeddingBatch<T>) -> Result<(TrainState<T>, TrainTrace)> {
    config.validate()?;
    let state = TrainState::new(config, data)?;
    train_from(state, config)
}

/// Gradient ascent on the coding rate of `m` random proxies with per-step
/// projection. Returns the final proxies and the largest off-diagonal
/// `|cos|` after every step.
pub fn orthogonalize_proxies_demo<T: Scalar>(
    m: usize,
    dim: usize,
    steps: usize,
    lr: T,
    params: &RateParams<T>,
    seed: u64,
) -> Result<(ProxySet<T>, Vec<T>)> {
    if m == 0 || m > dim {
        return Err(Error::InvalidConfig(format!("need 1 <= m <= dim, got m={m}, dim={dim}")));
    }
    let mut proxies = init_proxies::<T>(m, dim, seed)?;
    let mut trace = Vec::with_capacity(steps);
    for _ in 0..steps {
        let g = coding_rate_grad(proxies.matrix(), params)?;
        let p = proxies.matrix_mut();
        for r in 0..m {
            descend_row(p.row_mut(r), g.row(r), -lr)?;
        }
        trace.push(max_off_diagonal(&proxy_similarity_heat(&proxies)));
    }
    Ok((proxies, trace))
}
