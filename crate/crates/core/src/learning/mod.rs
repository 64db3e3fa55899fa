//! Demonstrations, dataset construction and linear hinge-loss classifiers.

mod dataset;
mod demo;
mod model;
mod svm;

use thiserror::Error;

pub use dataset::{build_binary_dataset, build_mc_dataset, BinaryMode, Dataset, DatasetReport};
pub use demo::{
    read_demos, write_demo_header, write_demo_steps, ConfigFingerprint, DemoSource, DemoStep,
    Demonstration, DEMO_FORMAT_VERSION,
};
pub use model::{argmax, LinearModel, ModelFingerprint, ModelKind, MODEL_FORMAT_VERSION};
pub use svm::{hinge_objective, train_linear, training_accuracy, Hyperparameters, TrainReport};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training objective became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("demonstrations come from different configurations: {0}")]
    MixedConfig(String),
    #[error("expected a {expected:?} model, found {found:?}")]
    WrongModelKind { expected: ModelKind, found: ModelKind },
    #[error("malformed demonstration: {0}")]
    MalformedDemo(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
