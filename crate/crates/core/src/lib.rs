//! Fairness auditing and bias mitigation for binary loan-approval models.

pub mod dataset;
pub mod error;
pub mod explain;
pub mod inprocess;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod monitor;
pub mod neuralnet;
pub mod pipeline;
pub mod preprocess;
pub mod report;

pub use dataset::{Dataset, GenConfig, Scaler};
pub use error::{FairError, Result};
pub use matrix::Matrix;
pub use metrics::{audit, FairnessReport, GroupStats, Metric};
pub use models::{fit, Model, ModelKind, TrainConfig};
pub use pipeline::PipelineConfig;
