//! Skill latent-variable model: posterior, decoder, skill prior, losses and training.

pub mod config;
pub mod model;
pub mod train;

pub use config::{PriorKind, SkillModelConfig};
pub use model::{copy_params, elbo_terms, joint_loss, prior_loss, LossTerms, SkillModel, SkillNet, WindowBatch};
pub use train::{finetune, fit, fit_with, pretrain, steps_per_epoch, train_on_demos_only, TrainLog};
