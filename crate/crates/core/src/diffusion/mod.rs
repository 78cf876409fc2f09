//! Noise schedule, denoiser, training objective and training loop.

mod denoiser;
mod loss;
mod schedule;
mod train;

pub use denoiser::{cfg_mix, EmbeddingTable, InputLayout, NoisePredictor, TrainedDenoiser};
pub use loss::{
    categorical_ce, loss_from_predictions, loss_hybrid, loss_simple, network_loss, Batch,
    LossTerms, TargetKind, TaskLoss, CATEGORICAL_TEMPERATURE,
};
pub use schedule::{q_sample, NoiseSchedule, BETA_END, BETA_START};
pub use train::{task_for, train_denoiser, DiffusionConfig, SamplerKind, TrainingLog};
