//! Known-class-ratio evaluation protocol and classification metrics.

use thiserror::Error;

use crate::ErrorClass;

mod metrics;
mod protocol;
mod report;

pub use metrics::{confusion_and_f1, ClassScore, ClassificationMetrics};
pub use protocol::{
    mean_std, run_protocol, run_train_seed, stratified_subsample, train_size_sweep, MetricSummary,
    MetricsReport, ProtocolReport, RunConfig, RunMetrics, SweepEntry, SweepReport, OOD_HANDLING,
};
pub use report::{emit_report, emit_sweep, encode_report, encode_sweep, load_report, ReportFormat};

/// Schema tag of every report JSON document.
pub const REPORT_SCHEMA: &str = "oodbound-report/1";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{predictions} predictions for {gold} gold labels")]
    LengthMismatch { predictions: usize, gold: usize },
    #[error("no items to score")]
    EmptyInput,
    #[error("label `{0}` is neither a known class nor the out-of-domain label")]
    UnknownLabel(String),
    #[error("invalid evaluation configuration: {0}")]
    InvalidConfig(String),
    #[error("ratio {ratio}, run {run}: {source}")]
    Cell {
        ratio: f64,
        run: usize,
        #[source]
        source: Box<crate::Error>,
    },
}

impl EvalError {
    pub fn class(&self) -> ErrorClass {
        match self {
            EvalError::InvalidConfig(_) => ErrorClass::Usage,
            EvalError::Cell { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }
}
