//! Many-to-one stacked-LSTM classifier with exact backpropagation through
//! time, finite-difference gradient checking and a binary checkpoint format.

mod checkpoint;
mod gradcheck;
mod lstm;
mod train;

use thiserror::Error;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, gradient_check_groups, GradCheckReport, GroupCheck, MAX_GRADCHECK_PARAMS};
pub use lstm::{forward, Classifier, ForwardOutput, HiddenStates, KnowledgeGate, LstmLayer, LstmParams};
pub use train::{
    batch_gradient, batch_loss, epoch_hidden_summary, train, train_step, EpochLog, Example, HiddenSummary,
    InfusionLog, TrainConfig, TrainMode, TrainOutcome, DEFAULT_CLIP_NORM,
};

use crate::infusion::InfusionError;

#[derive(Debug, Error)]
pub enum NlmError {
    #[error("empty input sequence")]
    EmptySequence,
    #[error("empty batch or dataset")]
    EmptyBatch,
    #[error("width mismatch: expected {expected}, got {actual}")]
    Width { expected: usize, actual: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("model has {0} parameters; gradient checking is limited to {MAX_GRADCHECK_PARAMS}")]
    TooLarge(usize),
    #[error(transparent)]
    Infusion(#[from] InfusionError),
}
