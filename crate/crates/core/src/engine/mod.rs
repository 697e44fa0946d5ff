//! Experiment orchestration: configuration, datasets, training,
//! evaluation, checkpoints and synthetic corpora.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod synthetic;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{BatchSize, EmbeddingDim, ExperimentConfig, Task, CONFIG_KEYS};
pub use dataset::{CorpusStats, Dataset, Split};
pub use train::{
    batch_gradient, evaluate, evaluate_split, initial_model, train, train_with, EpochRecord, LearningCurve,
    SplitEvaluation, TrainOutcome, CURVE_HEADER,
};
