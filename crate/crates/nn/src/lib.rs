//! Dense and multi-branch stability classifiers.
//!
//! Networks are instantiated from an [`ArchitectureDescriptor`], trained with
//! hand-written backpropagation, AdamW and a one-cycle schedule, and scored
//! with confusion-matrix metrics. Models are generic over the float type:
//! training runs in `f32`, gradient checks in `f64`.

mod attention;
mod descriptor;
mod error;
mod gradcheck;
mod layers;
mod loss;
mod metrics;
mod model;
mod optim;
mod real;
mod train;
mod weights;

pub use attention::SelfAttention;
pub use descriptor::{
    ArchitectureDescriptor, AttentionSpec, BranchSpec, Branches, DescriptorError, Family, LossSpec, OptimSpec,
    ScheduleSpec, ARCHITECTURE_SCHEMA,
};
pub use error::NnError;
pub use gradcheck::{gradient_check, relative_error, GradCheck};
pub use layers::{BatchNorm, Chain, Dropout, Layer, Linear, Mode, Param, Relu};
pub use loss::{class_weights, log_softmax_rows, loss, softmax_rows};
pub use metrics::{auc_roc, Metrics};
pub use model::Model;
pub use optim::{onecycle_lr, onecycle_peak, AdamW};
pub use real::Real;
pub use train::{
    evaluate, fit_standardization, measure_latency, predict_proba_all, to_matrix, train, train_with, EpochRecord,
    TrainOptions, TrainReport,
};
pub use weights::{load_weights, save_weights, weights_from_bytes, weights_to_bytes, WEIGHTS_MAGIC, WEIGHTS_VERSION};
