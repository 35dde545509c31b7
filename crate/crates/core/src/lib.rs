//! Out-of-domain detection for intent classifiers without out-of-domain
//! training data.
//!
//! Fitting is a two-step procedure:
//!
//! 1. [`metric::train`] learns a linear projection of frozen sentence
//!    embeddings with a large-margin cosine loss or a semi-hard triplet loss,
//!    pulling each class together and pushing classes apart.
//! 2. [`boundary::fit_boundaries`] computes each class centroid in the
//!    projected space and grows a per-class radius until a criterion
//!    balancing in-class and other-class distances changes sign.
//!
//! [`detector::fit`] composes both steps into a [`detector::DetectorModel`],
//! which labels a query with its nearest class when it falls inside that
//! class's radius and as out-of-domain otherwise. [`evaluation`] runs the
//! known-class-ratio benchmark protocol on top.

use std::path::PathBuf;

use thiserror::Error;

pub mod boundary;
pub mod cli;
pub mod data;
pub mod detector;
pub mod evaluation;
pub mod metric;
mod util;

pub use util::write_atomic;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error(transparent)]
    Metric(#[from] metric::MetricError),
    #[error(transparent)]
    Boundary(#[from] boundary::BoundaryError),
    #[error(transparent)]
    Model(#[from] detector::ModelError),
    #[error(transparent)]
    Eval(#[from] evaluation::EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure classes, mapped to process exit codes by the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    /// Invalid options or parameters.
    Usage,
    /// Unreadable, malformed or unsuitable input data.
    Data,
    /// Numerical failure (degenerate projection, non-finite loss, ...).
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use boundary::BoundaryError as B;
        use metric::MetricError as Me;
        match self {
            Error::Data(_) | Error::Io { .. } => ErrorClass::Data,
            Error::Metric(e) => match e {
                Me::InvalidConfig(_) => ErrorClass::Usage,
                Me::InvalidData(_) | Me::DimensionMismatch { .. } | Me::ClassIndex { .. } => ErrorClass::Data,
                _ => ErrorClass::Numeric,
            },
            Error::Boundary(e) => match e {
                B::InvalidParams(_) => ErrorClass::Usage,
                B::ZeroNorm => ErrorClass::Numeric,
                _ => ErrorClass::Data,
            },
            Error::Model(e) => model_class(e),
            Error::Eval(e) => e.class(),
        }
    }
}

fn model_class(e: &detector::ModelError) -> ErrorClass {
    use detector::ModelError as Mo;
    match e {
        Mo::ZeroNormProjection => ErrorClass::Numeric,
        Mo::AtIndex { source, .. } => model_class(source),
        _ => ErrorClass::Data,
    }
}
