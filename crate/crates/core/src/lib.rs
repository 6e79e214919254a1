//! Multi-label relation extraction on top of frozen encoder embeddings.
//!
//! The pipeline has three stages:
//!
//! 1. pair vectors: head and tail mention embeddings are mean-pooled and
//!    concatenated ([`data`]);
//! 2. a small MLP projection head is trained with a multi-label supervised
//!    contrastive loss so that pairs sharing relation types land close
//!    together on the unit hypersphere ([`model`], [`loss`], [`train`]);
//! 3. relation types for unseen pairs are inferred with a Bayesian kNN over
//!    the projected training set ([`knn`]).
//!
//! [`metrics`] holds the evaluation suite (micro/macro F1, F1@M, P@R and
//! the correlation structure distance).

pub mod data;
pub mod error;
pub mod grid;
pub mod io;
pub mod kernel;
pub mod knn;
pub mod labels;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod train;

pub use data::{
    build_pair_vectors, generate_synthetic, label_matrix, validate_dataset, DatasetMeta,
    MentionAnnotation, PairSample, SynthSpec, TokenSentenceRecord, ValidationReport, Violation,
};
pub use error::{Error, Result};
pub use grid::{grid_search, GridCell, GridResult};
pub use kernel::DistanceMode;
pub use knn::{
    build_datastore, knn_query, posterior, predict_batch, sharp_predict, BatchPredictions,
    Datastore, InferenceConfig, PredictionSet, PriorMode, ThresholdMode,
};
pub use labels::LabelMatrix;
pub use linalg::Matrix;
pub use loss::supcon_multilabel_loss;
pub use metrics::{
    confidence_score, csd, evaluate, f1_at_m, macro_f1, micro_f1, phi_matrix, precision_at_r,
    EvalOptions, EvalReport,
};
pub use model::{Activation, ArchConfig, ProjectionModel};
pub use optim::{AdamW, AdamWConfig};
pub use train::{loss_gradients, train, Gradients, StopReason, TrainConfig, TrainHistory};
