use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::datastore::{StateNorm, TrajectoryDataset, WindowSampler};
use crate::error::{Error, Result};
use crate::maze::stream_rng;
use crate::numerics::{optimize_step, AdamConfig, AdamState, Mlp, ParamSet, Tape, Tensor, Var};
use crate::skillmodel::{copy_params, SkillModelConfig};

/// Action regressor inputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BcKind {
    /// `pi(a_t | s_t)`
    Plain,
    /// `q(a_t | s_t, s_{t+H-1})`
    Goal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BcConfig {
    pub horizon: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub lr: f64,
    /// Examples per optimizer step.
    pub batch_rows: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub pretrain_epoch_cycle: usize,
    pub finetune_epoch_cycle: usize,
}

impl Default for BcConfig {
    fn default() -> Self {
        Self::matching(&SkillModelConfig::default())
    }
}

impl BcConfig {
    /// Same widths, optimizer and data budget per step as the skill decoder.
    pub fn matching(skills: &SkillModelConfig) -> Self {
        Self {
            horizon: skills.horizon,
            hidden: skills.hidden,
            hidden_layers: skills.decoder_layers,
            lr: skills.lr,
            batch_rows: skills.batch_size * skills.horizon,
            pretrain_epochs: skills.pretrain_epochs,
            finetune_epochs: skills.finetune_epochs,
            pretrain_epoch_cycle: skills.pretrain_epoch_cycle,
            finetune_epoch_cycle: skills.finetune_epoch_cycle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.horizon, self.hidden, self.batch_rows, self.pretrain_epoch_cycle, self.finetune_epoch_cycle].contains(&0) {
            return Err(Error::config("BC horizon, width, batch and epoch cycles must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("BC lr must be positive"));
        }
        Ok(())
    }
}

const BC_KIND: &str = "bc_policy";

#[derive(Serialize, Deserialize)]
struct BcMetadata {
    kind: String,
    policy: BcKind,
    config: BcConfig,
    state_dim: usize,
    action_dim: usize,
    norm: StateNorm,
}

/// Rows of `(s_t, s_{t+H-1}, a_t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BcBatch {
    pub inputs: Tensor,
    pub targets: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BcPolicy {
    pub kind: BcKind,
    pub config: BcConfig,
    pub norm: StateNorm,
    pub net: Mlp,
    pub params: ParamSet,
    state_dim: usize,
    action_dim: usize,
}

impl BcPolicy {
    pub fn new(kind: BcKind, config: BcConfig, state_dim: usize, action_dim: usize, norm: StateNorm, seed: u64) -> Result<Self> {
        config.validate()?;
        norm.validate(state_dim)?;
        let input = match kind {
            BcKind::Plain => state_dim,
            BcKind::Goal => 2 * state_dim,
        };
        let mut params = ParamSet::new();
        let net = Mlp::new(&mut params, "bc", input, config.hidden, config.hidden_layers, action_dim, &mut stream_rng(seed, 0));
        Ok(Self { kind, config, norm, net, params, state_dim, action_dim })
    }

    /// Window length that supplies one training example.
    pub fn span(&self) -> usize {
        match self.kind {
            BcKind::Plain => 1,
            BcKind::Goal => self.config.horizon,
        }
    }

    fn features(&self, s: &[f64], target: &[f64]) -> Vec<f64> {
        let mut x = self.norm.apply(s);
        if self.kind == BcKind::Goal {
            x.extend(self.norm.apply(target));
        }
        x
    }

    /// Examples at the given `(trajectory, start)` windows.
    pub fn batch(&self, data: &TrajectoryDataset, positions: &[(usize, usize)]) -> BcBatch {
        let span = self.span();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for &(i, j) in positions {
            let t = &data.trajectories()[i];
            inputs.extend(self.features(&t.state_f64(j), &t.state_f64(j + span - 1)));
            targets.extend(t.action_f64(j));
        }
        let rows = positions.len();
        BcBatch {
            inputs: Tensor::matrix(rows, inputs.len() / rows.max(1), inputs).expect("bc inputs"),
            targets: Tensor::matrix(rows, self.action_dim, targets).expect("bc targets"),
        }
    }

    /// Mean squared action error.
    pub fn loss_on_tape(&self, tape: &mut Tape, params: &ParamSet, batch: &BcBatch) -> Var {
        let x = tape.leaf(batch.inputs.clone());
        let y = tape.leaf(batch.targets.clone());
        let pred = self.net.forward(tape, params, x);
        let err = tape.sub(pred, y);
        let sq = tape.square(err);
        tape.mean(sq)
    }

    pub fn loss(&self, batch: &BcBatch) -> f64 {
        let mut tape = Tape::new();
        let l = self.loss_on_tape(&mut tape, &self.params, batch);
        tape.value(l).item()
    }

    /// Regressed action, clipped to the action box. `target` is ignored by
    /// a plain policy.
    pub fn act(&self, s: &[f64], target: &[f64]) -> Vec<f64> {
        self.net
            .eval(&self.params, &self.features(s, target))
            .into_iter()
            .map(|a| if a.is_finite() { a.clamp(-1.0, 1.0) } else { 0.0 })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = BcMetadata {
            kind: BC_KIND.into(),
            policy: self.kind,
            config: self.config.clone(),
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            norm: self.norm.clone(),
        };
        self.params.save(dir, serde_json::to_value(meta).expect("metadata serializes"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.join("manifest.json").exists() {
            return Err(Error::MissingArtifact { name: "BC policy checkpoint".into(), path: dir.to_path_buf() });
        }
        let (loaded, meta) = ParamSet::load(dir)?;
        let meta: BcMetadata =
            serde_json::from_value(meta).map_err(|e| Error::malformed(format!("BC policy metadata: {e}")))?;
        if meta.kind != BC_KIND {
            return Err(Error::malformed(format!("checkpoint holds `{}`, not a BC policy", meta.kind)));
        }
        let mut policy = Self::new(meta.policy, meta.config, meta.state_dim, meta.action_dim, meta.norm, 0)?;
        copy_params(&loaded, &mut policy.params)?;
        Ok(policy)
    }
}

/// Adam on the regression loss; returns the mean loss of every epoch.
pub fn fit_bc(
    policy: &mut BcPolicy,
    data: &TrajectoryDataset,
    epochs: usize,
    cycle: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    if epochs == 0 {
        return Ok(Vec::new());
    }
    let sampler = WindowSampler::new(data, policy.span())?;
    let rows = policy.config.batch_rows;
    let per_epoch = (data.num_transitions() * cycle).div_ceil(rows).max(1);
    let mut adam = AdamState::new(&policy.params, AdamConfig { lr: policy.config.lr, ..AdamConfig::default() });
    let mut out = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut total = 0.0;
        for _ in 0..per_epoch {
            let batch = policy.batch(data, &sampler.sample_positions(rows, rng));
            let mut params = std::mem::take(&mut policy.params);
            let result = optimize_step(&mut params, &mut adam, |tape, p| policy.loss_on_tape(tape, p, &batch));
            policy.params = params;
            total += result.map_err(|e| match e {
                Error::Divergence(msg) => Error::Divergence(format!("BC epoch {epoch}: {msg}")),
                other => other,
            })?;
        }
        out.push(total / per_epoch as f64);
    }
    policy.params.quantize_f32();
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BcLog {
    pub pretrain: Vec<f64>,
    pub finetune: Vec<f64>,
}

pub fn pretrain_bc(
    kind: BcKind,
    dataset: &TrajectoryDataset,
    config: &BcConfig,
    norm: StateNorm,
    seed: u64,
) -> Result<(BcPolicy, Vec<f64>)> {
    let mut policy = BcPolicy::new(kind, config.clone(), dataset.meta.state_dim, dataset.meta.action_dim, norm, seed)?;
    let log = fit_bc(&mut policy, dataset, config.pretrain_epochs, config.pretrain_epoch_cycle, &mut stream_rng(seed, 1))?;
    Ok((policy, log))
}

pub fn finetune_bc(policy: &mut BcPolicy, demos: &TrajectoryDataset, seed: u64) -> Result<Vec<f64>> {
    let (epochs, cycle) = (policy.config.finetune_epochs, policy.config.finetune_epoch_cycle);
    fit_bc(policy, demos, epochs, cycle, &mut stream_rng(seed, 2))
}

fn train(kind: BcKind, dataset: &TrajectoryDataset, demos: &TrajectoryDataset, config: &BcConfig, norm: StateNorm, seed: u64) -> Result<(BcPolicy, BcLog)> {
    if dataset.is_empty() || demos.is_empty() {
        return Err(Error::config("BC training needs a nonempty corpus and demo set"));
    }
    let (mut policy, pretrain) = pretrain_bc(kind, dataset, config, norm, seed)?;
    let finetune = finetune_bc(&mut policy, demos, seed)?;
    Ok((policy, BcLog { pretrain, finetune }))
}

/// `pi(a | s)` pretrained on the corpus, then fine-tuned on the demos.
pub fn train_bc(dataset: &TrajectoryDataset, demos: &TrajectoryDataset, config: &BcConfig, norm: StateNorm, seed: u64) -> Result<(BcPolicy, BcLog)> {
    train(BcKind::Plain, dataset, demos, config, norm, seed)
}

/// `q(a_t | s_t, s_{t+H-1})` pretrained on the corpus, then fine-tuned on the demos.
pub fn train_goal_bc(
    dataset: &TrajectoryDataset,
    demos: &TrajectoryDataset,
    config: &BcConfig,
    norm: StateNorm,
    seed: u64,
) -> Result<(BcPolicy, BcLog)> {
    train(BcKind::Goal, dataset, demos, config, norm, seed)
}
