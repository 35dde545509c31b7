//! Learning the linear embedding projection with a large-margin cosine loss
//! or a semi-hard triplet loss.

use thiserror::Error;

mod gradcheck;
mod lmcl;
mod projection;
mod train;
mod triplet;

pub use gradcheck::{relative_error, run_gradcheck, GradcheckConfig, GradcheckReport, GRAD_FLOOR};
pub use lmcl::{lmcl_loss, LmclOutput};
pub use projection::{init_params, LmclHead, Projection};
pub use train::{train, LossKind, TrainConfig, TrainReport};
pub use triplet::{select_negative, triplet_loss, triplet_term, Triplet, TripletOutput};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid training data: {0}")]
    InvalidData(String),
    #[error("vector has dimension {found}, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("class index {index} out of range for {classes} classes")]
    ClassIndex { index: usize, classes: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch holds a single class; no triplets can be formed")]
    SingleClassBatch,
    #[error("batch item {item} projects to the zero vector (degenerate projection)")]
    ZeroNormProjection { item: usize },
    #[error("zero-norm parameter vector")]
    ZeroNorm,
    #[error("non-finite parameter")]
    NonFiniteParameter,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}
