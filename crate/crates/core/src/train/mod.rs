//! Negative sampling, ranking losses, Adam and the embedding training loop.

mod adam;
mod hpo;
mod loss;
mod negatives;
mod trainer;

pub use adam::Adam;
pub use hpo::{random_search, write_hpo_log, HpoResult, HpoSpec, HpoTrial};
pub use loss::{
    loss_pairwise_hinge, loss_pairwise_logistic, loss_pointwise_hinge, loss_pointwise_logistic, sigmoid, softplus,
    LossKind, LossValue,
};
pub use negatives::{sample_negatives, Sampling};
pub use trainer::{
    batch_loss, loss_gradients, mean_rank, rank_object, relative_loss, train_kge, write_training_log, LossConfig,
    TableGradients, TrainOptions, TrainState,
};
pub(crate) use trainer::{gradient_tensors, table_lens, table_tensors};

use thiserror::Error;

use crate::kg::KgError;
use crate::kge::KgeError;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("no negative exists for {0}")]
    NoNegative(String),
    #[error("no training triples")]
    NoTriples,
    #[error("relative loss needs at least one recorded epoch")]
    EmptyHistory,
    #[error("all {0} search trials diverged")]
    AllTrialsDiverged(usize),
    #[error(transparent)]
    Kge(#[from] KgeError),
    #[error(transparent)]
    Kg(#[from] KgError),
}

impl TrainError {
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            TrainError::NonFiniteGradient | TrainError::Diverged { .. } | TrainError::AllTrialsDiverged(_)
        )
    }
}
