use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::datastore::{StateNorm, SubTrajectory, TrajectoryDataset, WindowSampler};
use crate::error::{Error, Result};
use crate::maze::stream_rng;
use crate::numerics::{optimize_step, AdamConfig, AdamState, Mlp, ParamId, ParamSet, Tape, Tensor, Var};
use crate::skillmodel::copy_params;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    /// Pairs are `(s_t, s_{t+H-1})`.
    pub horizon: usize,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self { horizon: 10, hidden: 128, hidden_layers: 2, embed_dim: 32, lr: 1e-3, batch_size: 128, steps: 3000 }
    }
}

impl DistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.hidden == 0 || self.embed_dim == 0 {
            return Err(Error::config("distance horizon, hidden width and embedding size must be positive"));
        }
        if self.batch_size < 2 {
            return Err(Error::config("contrastive batches need at least two pairs"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config("distance lr must be positive"));
        }
        Ok(())
    }
}

const DISTANCE_KIND: &str = "distance_encoder";

#[derive(Serialize, Deserialize)]
struct DistanceMetadata {
    kind: String,
    config: DistanceConfig,
    state_dim: usize,
    norm: StateNorm,
}

/// State embedding `h(s)` plus the bilinear matrix used only for training logits.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceEncoder {
    pub config: DistanceConfig,
    pub norm: StateNorm,
    pub body: Mlp,
    pub w: ParamId,
    pub params: ParamSet,
    state_dim: usize,
}

impl DistanceEncoder {
    pub fn new(config: DistanceConfig, state_dim: usize, norm: StateNorm, seed: u64) -> Result<Self> {
        config.validate()?;
        norm.validate(state_dim)?;
        let mut params = ParamSet::new();
        let mut rng = stream_rng(seed, 0);
        let body = Mlp::new(&mut params, "distance.body", state_dim, config.hidden, config.hidden_layers, config.embed_dim, &mut rng);
        let k = config.embed_dim;
        let eye = (0..k * k).map(|i| if i / k == i % k { 1.0 } else { 0.0 }).collect();
        let w = params.add("distance.w", Tensor::matrix(k, k, eye)?);
        Ok(Self { config, norm, body, w, params, state_dim })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn embed(&self, s: &[f64]) -> Vec<f64> {
        self.body.eval(&self.params, &self.norm.apply(s))
    }

    fn embed_rows(&self, tape: &mut Tape, params: &ParamSet, states: &[&[f64]]) -> Var {
        let mut data = Vec::with_capacity(states.len() * self.state_dim);
        for s in states {
            data.extend_from_slice(s);
        }
        self.norm.apply_rows(&mut data);
        let x = tape.leaf(Tensor::matrix(states.len(), self.state_dim, data).expect("state rows"));
        self.body.forward(tape, params, x)
    }

    /// Contrastive loss on the tape: row `i` scores every key `j` with
    /// `h(q_i)^T W h(k_j)` and is cross-entropy against `j = i`.
    pub fn infonce_on_tape(&self, tape: &mut Tape, params: &ParamSet, queries: &[&[f64]], keys: &[&[f64]]) -> Var {
        let q = self.embed_rows(tape, params, queries);
        let k = self.embed_rows(tape, params, keys);
        let w = tape.param(params, self.w);
        let kw = tape.matmul_nt(k, w);
        let logits = tape.matmul_nt(q, kw);
        let targets: Vec<usize> = (0..queries.len()).collect();
        tape.softmax_xent(logits, &targets)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = DistanceMetadata {
            kind: DISTANCE_KIND.into(),
            config: self.config.clone(),
            state_dim: self.state_dim,
            norm: self.norm.clone(),
        };
        self.params.save(dir, serde_json::to_value(meta).expect("metadata serializes"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.join("manifest.json").exists() {
            return Err(Error::MissingArtifact { name: "distance encoder checkpoint".into(), path: dir.to_path_buf() });
        }
        let (loaded, meta) = ParamSet::load(dir)?;
        let meta: DistanceMetadata =
            serde_json::from_value(meta).map_err(|e| Error::malformed(format!("distance encoder metadata: {e}")))?;
        if meta.kind != DISTANCE_KIND {
            return Err(Error::malformed(format!("checkpoint holds `{}`, not a distance encoder", meta.kind)));
        }
        let mut enc = Self::new(meta.config, meta.state_dim, meta.norm, 0)?;
        copy_params(&loaded, &mut enc.params)?;
        Ok(enc)
    }
}

fn pair_rows<'a>(pairs: &[(&'a [f64], &'a [f64])]) -> (Vec<&'a [f64]>, Vec<&'a [f64]>) {
    pairs.iter().copied().unzip()
}

/// Mean InfoNCE loss of `(s_t, s_future)` pairs; other rows' futures are the negatives.
pub fn infonce_loss(encoder: &DistanceEncoder, pairs: &[(&[f64], &[f64])]) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::config(format!("InfoNCE needs at least 2 pairs, got {}", pairs.len())));
    }
    let (q, k) = pair_rows(pairs);
    let mut tape = Tape::new();
    let loss = encoder.infonce_on_tape(&mut tape, &encoder.params, &q, &k);
    Ok(tape.value(loss).item())
}

/// `||h(s) - h(s')||^2`.
pub fn distance(encoder: &DistanceEncoder, s: &[f64], s2: &[f64]) -> f64 {
    squared_distance(&encoder.embed(s), &encoder.embed(s2))
}

pub fn euclidean_distance(s: &[f64], s2: &[f64]) -> f64 {
    squared_distance(s, s2)
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "distance between vectors of different size");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// First and last state of each window.
pub fn window_pairs(windows: &[SubTrajectory]) -> Vec<(&[f64], &[f64])> {
    windows.iter().map(|w| (w.first_state(), w.last_state())).collect()
}

/// Runs `steps` Adam updates on `encoder` with pairs drawn from `data`.
pub fn fit_distance(
    encoder: &mut DistanceEncoder,
    data: &TrajectoryDataset,
    steps: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let cfg = encoder.config.clone();
    let sampler = WindowSampler::new(data, cfg.horizon)?;
    let mut adam = AdamState::new(&encoder.params, AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let windows = sampler.sample(data, cfg.batch_size, rng);
        let (q, k) = pair_rows(&window_pairs(&windows));
        let mut params = std::mem::take(&mut encoder.params);
        let result = optimize_step(&mut params, &mut adam, |tape, p| encoder.infonce_on_tape(tape, p, &q, &k));
        encoder.params = params;
        let loss = result.map_err(|e| match e {
            Error::Divergence(msg) => Error::Divergence(format!("distance step {step}: {msg}")),
            other => other,
        })?;
        losses.push(loss);
    }
    encoder.params.quantize_f32();
    Ok(losses)
}

/// Fresh encoder trained on the offline corpus.
pub fn train_distance(
    dataset: &TrajectoryDataset,
    config: &DistanceConfig,
    norm: StateNorm,
    seed: u64,
) -> Result<(DistanceEncoder, Vec<f64>)> {
    let mut enc = DistanceEncoder::new(config.clone(), dataset.meta.state_dim, norm, seed)?;
    let losses = fit_distance(&mut enc, dataset, config.steps, &mut stream_rng(seed, 1))?;
    Ok((enc, losses))
}
