//! Experiment orchestration: configuration, training, evaluation,
//! fine-tuning, metrics files and summaries.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod summary;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{ExperimentConfig, NetworkWidths, OutputConfig, PartnerKind};
pub use eval::{estimation_mse, run_eval, safety_terminations, scripted_probe_states};
pub use metrics::{read_metrics, write_metrics, MetricsFile, MetricsRecord};
pub use summary::{export_summary, Summary, SummaryOptions};
pub use train::{
    finetune, run_training, run_training_seed, train_seed, train_seed_with, FinetuneOutcome,
    Team, TrainOutcome,
};
