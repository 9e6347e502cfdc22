use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::config::SkillModelConfig;
use super::model::{standard_noise, LossTerms, SkillModel};
use crate::datastore::{StateNorm, TrajectoryDataset, WindowSampler};
use crate::error::{Error, Result};
use crate::maze::stream_rng;
use crate::numerics::{optimize_step, AdamConfig, AdamState, Tape};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Loss terms at every optimizer step, before the update.
    pub steps: Vec<LossTerms>,
    /// Mean over each epoch's steps.
    pub epochs: Vec<LossTerms>,
}

/// Optimizer steps per epoch: enough windows to cover the dataset's
/// transitions `cycle` times.
pub fn steps_per_epoch(num_transitions: usize, horizon: usize, batch: usize, cycle: usize) -> usize {
    (num_transitions * cycle).div_ceil(horizon * batch).max(1)
}

/// Runs `epochs` epochs of Adam on the joint loss over windows of `data`.
pub fn fit(
    model: &mut SkillModel,
    data: &TrajectoryDataset,
    epochs: usize,
    cycle: usize,
    rng: &mut dyn RngCore,
) -> Result<TrainLog> {
    fit_with(model, data, epochs, cycle, rng, &mut |_, _| {})
}

/// [`fit`] with a hook called after every epoch.
pub fn fit_with(
    model: &mut SkillModel,
    data: &TrajectoryDataset,
    epochs: usize,
    cycle: usize,
    rng: &mut dyn RngCore,
    on_epoch: &mut dyn FnMut(usize, &SkillModel),
) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    if epochs == 0 {
        return Ok(log);
    }
    let cfg = model.config.clone();
    let sampler = WindowSampler::new(data, cfg.horizon)?;
    let per_epoch = steps_per_epoch(data.num_transitions(), cfg.horizon, cfg.batch_size, cycle);
    let mut adam = AdamState::new(&model.params, AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    for epoch in 0..epochs {
        let start = log.steps.len();
        for _ in 0..per_epoch {
            let windows = sampler.sample(data, cfg.batch_size, rng);
            let batch = model.batch(&windows)?;
            let noise = standard_noise(batch.rows, model.z_dim(), rng);
            let net = &model.net;
            let mut terms = LossTerms::default();
            optimize_step(&mut model.params, &mut adam, |tape: &mut Tape, p| {
                let v = net.losses(tape, p, &batch, &noise, cfg.beta);
                terms = LossTerms::read(tape, &v);
                v.total
            })
            .map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("epoch {epoch}: {msg}")),
                other => other,
            })?;
            log.steps.push(terms);
        }
        log.epochs.push(LossTerms::mean(&log.steps[start..]));
        on_epoch(epoch, model);
    }
    Ok(log)
}

/// Trains a fresh model on the offline corpus.
pub fn pretrain(
    dataset: &TrajectoryDataset,
    config: &SkillModelConfig,
    norm: StateNorm,
    seed: u64,
) -> Result<(SkillModel, TrainLog)> {
    let mut model = SkillModel::new(config.clone(), dataset.meta.state_dim, dataset.meta.action_dim, norm, seed)?;
    let mut rng = stream_rng(seed, 1);
    let log = fit(&mut model, dataset, config.pretrain_epochs, config.pretrain_epoch_cycle, &mut rng)?;
    model.params.quantize_f32();
    Ok((model, log))
}

/// Continues joint training on demonstration windows; every parameter group
/// is updated.
pub fn finetune(model: &mut SkillModel, demos: &TrajectoryDataset, seed: u64) -> Result<TrainLog> {
    let (epochs, cycle) = (model.config.finetune_epochs, model.config.finetune_epoch_cycle);
    let mut rng = stream_rng(seed, 2);
    let log = fit(model, demos, epochs, cycle, &mut rng)?;
    model.params.quantize_f32();
    Ok(log)
}

/// A model trained for the fine-tuning budget on demonstrations alone.
pub fn train_on_demos_only(
    demos: &TrajectoryDataset,
    config: &SkillModelConfig,
    norm: StateNorm,
    seed: u64,
) -> Result<(SkillModel, TrainLog)> {
    let mut model = SkillModel::new(config.clone(), demos.meta.state_dim, demos.meta.action_dim, norm, seed)?;
    let log = finetune(&mut model, demos, seed)?;
    Ok((model, log))
}
