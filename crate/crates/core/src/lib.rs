//! Coding-rate anti-collapse losses for deep metric learning.
//!
//! The crate computes the Gaussian coding rate of embedding and proxy sets,
//! builds pair- and proxy-based anti-collapse losses on top of it (with
//! ProxyNCA and Proxy-Anchor as base losses), trains embeddings and proxies
//! by projected gradient descent on the unit sphere, and evaluates the result
//! with retrieval, clustering and structure metrics.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the double-precision types the tolerances are tuned for.

pub mod cli;
pub mod coding_rate;
pub mod data_io;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod numerics;
pub mod rng;
pub mod scalar;
pub mod training;

pub use coding_rate::{
    coding_rate, coding_rate_grad, intra_class_rate, rate_report, total_coding_length, RateParams, RateReport,
};
pub use embedding::{EmbeddingBatch, ProxySet};
pub use error::{Error, Result};
pub use losses::{AntiCollapseConfig, BaseLoss, LossResult, ProxyAnchorParams, ProxySelection};
pub use metrics::EvalReport;
pub use numerics::Matrix;
pub use rng::SeededRng;
pub use scalar::Scalar;
pub use training::{LossKind, PairedComparison, TrainConfig, TrainState, TrainTrace};

/// Class identifier attached to embeddings and proxies.
pub type ClassId = u32;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type EmbeddingBatch64 = EmbeddingBatch<f64>;
pub type EmbeddingBatch32 = EmbeddingBatch<f32>;
pub type ProxySet64 = ProxySet<f64>;
pub type ProxySet32 = ProxySet<f32>;
pub type RateParams64 = RateParams<f64>;
pub type LossResult64 = LossResult<f64>;
pub type TrainConfig64 = TrainConfig<f64>;
