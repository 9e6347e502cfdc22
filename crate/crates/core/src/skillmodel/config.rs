use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What the learned skill prior conditions on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// `q(z | s_t, s_{t+H-1})`
    #[default]
    Inverse,
    /// `p(z | s_t)`
    StateOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkillModelConfig {
    pub horizon: usize,
    pub z_dim: usize,
    pub hidden: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub prior_layers: usize,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    /// Passes over the data per epoch, counted in transitions.
    pub pretrain_epoch_cycle: usize,
    pub finetune_epoch_cycle: usize,
    #[serde(default)]
    pub prior: PriorKind,
}

impl Default for SkillModelConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            z_dim: 128,
            hidden: 128,
            encoder_layers: 1,
            decoder_layers: 5,
            prior_layers: 5,
            beta: 1e-2,
            lr: 1e-3,
            batch_size: 128,
            pretrain_epochs: 200,
            finetune_epochs: 50,
            pretrain_epoch_cycle: 1,
            finetune_epoch_cycle: 10,
            prior: PriorKind::Inverse,
        }
    }
}

impl SkillModelConfig {
    /// Reduced widths and budgets for single-core runs.
    pub fn desk() -> Self {
        Self {
            z_dim: 8,
            hidden: 64,
            decoder_layers: 3,
            prior_layers: 3,
            batch_size: 64,
            pretrain_epochs: 20,
            ..Self::default()
        }
    }

    pub fn with_prior(mut self, prior: PriorKind) -> Self {
        self.prior = prior;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("z_dim", self.z_dim),
            ("hidden", self.hidden),
            ("decoder_layers", self.decoder_layers),
            ("prior_layers", self.prior_layers),
            ("batch_size", self.batch_size),
            ("pretrain_epoch_cycle", self.pretrain_epoch_cycle),
            ("finetune_epoch_cycle", self.finetune_epoch_cycle),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("skill model `{name}` must be positive")));
        }
        if self.horizon < 2 {
            return Err(Error::config("skill horizon must be at least 2"));
        }
        if self.encoder_layers != 1 {
            return Err(Error::config("the skill encoder has exactly one recurrent layer"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) || !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("beta must be nonnegative and lr positive"));
        }
        Ok(())
    }
}
