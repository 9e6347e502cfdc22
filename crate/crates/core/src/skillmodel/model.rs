use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{PriorKind, SkillModelConfig};
use crate::datastore::{StateNorm, SubTrajectory};
use crate::error::{Error, Result};
use crate::maze::stream_rng;
use crate::numerics::gaussian::{kl_standard_vars, kl_vars, unit_nll_vars};
use crate::numerics::layers::gaussian_head;
use crate::numerics::{DiagGaussian, GaussianVars, Linear, LstmCell, Mlp, ParamSet, Tape, Tensor, Var};
use crate::numerics::{LOG_STD_MAX, LOG_STD_MIN};

/// A batch of windows laid out for the networks. States are normalized;
/// stacked rows are ordered window-major (`b0 t0, b0 t1, ...`).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowBatch {
    pub rows: usize,
    pub horizon: usize,
    /// Per step `t`: `rows x (state_dim + action_dim)` encoder inputs.
    pub steps: Vec<Tensor>,
    /// `(rows * H) x state_dim`
    pub states: Tensor,
    /// `(rows * H) x action_dim`
    pub actions: Tensor,
    /// `rows x prior_input`
    pub prior_input: Tensor,
}

impl WindowBatch {
    pub fn new(windows: &[SubTrajectory], norm: &StateNorm, prior: PriorKind) -> Result<Self> {
        let first = windows.first().ok_or_else(|| Error::config("skill losses need a nonempty batch"))?;
        let (h, sd, ad) = (first.horizon, first.state_dim(), first.action_dim());
        if windows.iter().any(|w| w.horizon != h || w.state_dim() != sd) {
            return Err(Error::config("windows in a batch must share horizon and dims"));
        }
        norm.validate(sd)?;
        let rows = windows.len();
        let mut states = Vec::with_capacity(rows * h * sd);
        let mut actions = Vec::with_capacity(rows * h * ad);
        let mut prior_input = Vec::new();
        for w in windows {
            let mut s = w.states.clone();
            norm.apply_rows(&mut s);
            prior_input.extend_from_slice(&s[..sd]);
            if prior == PriorKind::Inverse {
                prior_input.extend_from_slice(&s[(h - 1) * sd..]);
            }
            states.extend(s);
            actions.extend_from_slice(&w.actions);
        }
        let steps = (0..h)
            .map(|t| {
                let mut data = Vec::with_capacity(rows * (sd + ad));
                for b in 0..rows {
                    let r = b * h + t;
                    data.extend_from_slice(&states[r * sd..(r + 1) * sd]);
                    data.extend_from_slice(&actions[r * ad..(r + 1) * ad]);
                }
                Tensor::matrix(rows, sd + ad, data).expect("shape by construction")
            })
            .collect();
        let pw = prior_input.len() / rows;
        Ok(Self {
            rows,
            horizon: h,
            steps,
            states: Tensor::matrix(rows * h, sd, states)?,
            actions: Tensor::matrix(rows * h, ad, actions)?,
            prior_input: Tensor::matrix(rows, pw, prior_input)?,
        })
    }
}

/// Tape handles for every term of the joint objective.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub rec: Var,
    pub reg: Var,
    pub prior: Var,
    pub total: Var,
    pub posterior: GaussianVars,
    pub inverse: GaussianVars,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub rec: f64,
    pub reg: f64,
    pub prior: f64,
    pub total: f64,
}

impl LossTerms {
    pub fn read(tape: &Tape, v: &LossVars) -> Self {
        Self {
            rec: tape.value(v.rec).item(),
            reg: tape.value(v.reg).item(),
            prior: tape.value(v.prior).item(),
            total: tape.value(v.total).item(),
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.rec, self.reg, self.prior, self.total].iter().all(|v| v.is_finite())
    }

    pub fn mean(terms: &[LossTerms]) -> LossTerms {
        let n = terms.len().max(1) as f64;
        let sum = |f: fn(&LossTerms) -> f64| terms.iter().map(f).sum::<f64>() / n;
        LossTerms { rec: sum(|t| t.rec), reg: sum(|t| t.reg), prior: sum(|t| t.prior), total: sum(|t| t.total) }
    }
}

/// Network layout: recurrent posterior `q_phi`, decoder `pi_theta`, and the
/// skill prior `q_psi`. Parameters live in a separate [`ParamSet`] with
/// names prefixed `encoder.`, `decoder.` and `prior.`.
#[derive(Clone, Debug, PartialEq)]
pub struct SkillNet {
    pub encoder: LstmCell,
    pub enc_head: Linear,
    pub decoder: Mlp,
    pub prior: Mlp,
    pub state_dim: usize,
    pub action_dim: usize,
    pub z_dim: usize,
    pub prior_kind: PriorKind,
}

impl SkillNet {
    pub fn new(
        params: &mut ParamSet,
        config: &SkillModelConfig,
        state_dim: usize,
        action_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let (hid, z) = (config.hidden, config.z_dim);
        let encoder = LstmCell::new(params, "encoder.lstm", state_dim + action_dim, hid, rng);
        let enc_head = Linear::new(params, "encoder.head", hid, 2 * z, rng);
        let decoder = Mlp::new(params, "decoder", state_dim + z, hid, config.decoder_layers, action_dim, rng);
        let prior_in = match config.prior {
            PriorKind::Inverse => 2 * state_dim,
            PriorKind::StateOnly => state_dim,
        };
        let prior = Mlp::new(params, "prior", prior_in, hid, config.prior_layers, 2 * z, rng);
        Self { encoder, enc_head, decoder, prior, state_dim, action_dim, z_dim: z, prior_kind: config.prior }
    }

    pub fn posterior(&self, tape: &mut Tape, params: &ParamSet, batch: &WindowBatch) -> GaussianVars {
        let inputs: Vec<Var> = batch.steps.iter().map(|t| tape.leaf(t.clone())).collect();
        let (h, _) = self.encoder.unroll(tape, params, &inputs);
        let out = self.enc_head.forward(tape, params, h);
        let (mean, log_std) = gaussian_head(tape, out, self.z_dim);
        GaussianVars { mean, log_std }
    }

    pub fn inverse(&self, tape: &mut Tape, params: &ParamSet, batch: &WindowBatch) -> GaussianVars {
        let x = tape.leaf(batch.prior_input.clone());
        let out = self.prior.forward(tape, params, x);
        let (mean, log_std) = gaussian_head(tape, out, self.z_dim);
        GaussianVars { mean, log_std }
    }

    /// Action means for `rows` states (already normalized) and skills.
    pub fn decode(&self, tape: &mut Tape, params: &ParamSet, states: Var, z: Var) -> Var {
        let x = tape.concat(&[states, z]);
        self.decoder.forward(tape, params, x)
    }

    /// `L_rec + beta L_reg + L_prior`, with the posterior detached inside
    /// `L_prior`. `noise` is `rows x z_dim` standard-normal noise.
    pub fn losses(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        batch: &WindowBatch,
        noise: &Tensor,
        beta: f64,
    ) -> LossVars {
        self.losses_inner(tape, params, batch, noise, beta, None)
    }

    /// Same objective, but `L_prior` measures against a constant posterior
    /// `(mean, log_std)` supplied by the caller instead of the detached one.
    pub fn losses_against(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        batch: &WindowBatch,
        noise: &Tensor,
        beta: f64,
        posterior: (&Tensor, &Tensor),
    ) -> LossVars {
        self.losses_inner(tape, params, batch, noise, beta, Some(posterior))
    }

    fn losses_inner(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        batch: &WindowBatch,
        noise: &Tensor,
        beta: f64,
        fixed: Option<(&Tensor, &Tensor)>,
    ) -> LossVars {
        let posterior = self.posterior(tape, params, batch);
        let eps = tape.leaf(noise.clone());
        let z = posterior.rsample(tape, eps);
        let z_steps = tape.repeat_rows(z, batch.horizon);
        let states = tape.leaf(batch.states.clone());
        let mean = self.decode(tape, params, states, z_steps);
        let actions = tape.leaf(batch.actions.clone());
        let nll = unit_nll_vars(tape, mean, actions);
        let rec = tape.mean(nll);
        let kl0 = kl_standard_vars(tape, posterior);
        let reg = tape.mean(kl0);
        let inverse = self.inverse(tape, params, batch);
        let target = match fixed {
            Some((m, l)) => GaussianVars { mean: tape.leaf(m.clone()), log_std: tape.leaf(l.clone()) },
            None => posterior.detach(tape),
        };
        let klp = kl_vars(tape, target, inverse);
        let prior = tape.mean(klp);
        let breg = tape.scale(reg, beta);
        let partial = tape.add(rec, breg);
        let total = tape.add(partial, prior);
        LossVars { rec, reg, prior, total, posterior, inverse }
    }
}

fn split_gaussian(out: &[f64], z: usize) -> DiagGaussian {
    DiagGaussian {
        mean: out[..z].to_vec(),
        log_std: out[z..2 * z].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
    }
}

pub fn standard_noise(rows: usize, dim: usize, rng: &mut dyn RngCore) -> Tensor {
    let data = (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, dim, data).expect("shape by construction")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SkillMetadata {
    kind: String,
    config: SkillModelConfig,
    state_dim: usize,
    action_dim: usize,
    norm: StateNorm,
}

const SKILL_KIND: &str = "skill_model";

#[derive(Clone, Debug, PartialEq)]
pub struct SkillModel {
    pub config: SkillModelConfig,
    pub norm: StateNorm,
    pub net: SkillNet,
    pub params: ParamSet,
}

impl SkillModel {
    /// Fresh model with weights drawn from `seed`.
    pub fn new(config: SkillModelConfig, state_dim: usize, action_dim: usize, norm: StateNorm, seed: u64) -> Result<Self> {
        config.validate()?;
        norm.validate(state_dim)?;
        let mut params = ParamSet::new();
        let net = SkillNet::new(&mut params, &config, state_dim, action_dim, &mut stream_rng(seed, 0));
        Ok(Self { config, norm, net, params })
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn z_dim(&self) -> usize {
        self.net.z_dim
    }

    pub fn batch(&self, windows: &[SubTrajectory]) -> Result<WindowBatch> {
        if let Some(w) = windows.iter().find(|w| w.horizon != self.horizon() || w.state_dim() != self.net.state_dim) {
            return Err(Error::config(format!(
                "window (H={}, state dim {}) does not match the model (H={}, state dim {})",
                w.horizon,
                w.state_dim(),
                self.horizon(),
                self.net.state_dim
            )));
        }
        WindowBatch::new(windows, &self.norm, self.config.prior)
    }

    /// Forward evaluation of all loss terms. With `rng = None` the skill is
    /// the posterior mean.
    pub fn loss_terms(&self, windows: &[SubTrajectory], beta: f64, rng: Option<&mut dyn RngCore>) -> Result<LossTerms> {
        let batch = self.batch(windows)?;
        let noise = match rng {
            Some(rng) => standard_noise(batch.rows, self.z_dim(), rng),
            None => Tensor::zeros(&[batch.rows, self.z_dim()]),
        };
        let mut tape = Tape::new();
        let vars = self.net.losses(&mut tape, &self.params, &batch, &noise, beta);
        let terms = LossTerms::read(&tape, &vars);
        if !terms.is_finite() {
            return Err(non_finite(windows, &terms));
        }
        Ok(terms)
    }

    /// Posterior `q_phi(z | window)`.
    pub fn encode(&self, window: &SubTrajectory) -> Result<DiagGaussian> {
        let batch = self.batch(std::slice::from_ref(window))?;
        let mut tape = Tape::new();
        let q = self.net.posterior(&mut tape, &self.params, &batch);
        Ok(q.row(&tape, 0))
    }

    /// Prior over skills; `s_target` is ignored by a state-only prior.
    pub fn infer_skill(&self, s_now: &[f64], s_target: &[f64]) -> DiagGaussian {
        let mut x = self.norm.apply(s_now);
        if self.config.prior == PriorKind::Inverse {
            x.extend(self.norm.apply(s_target));
        }
        split_gaussian(&self.net.prior.eval(&self.params, &x), self.z_dim())
    }

    /// Decoder mean for `(s, z)`, clipped to the action box.
    pub fn decode_action(&self, s: &[f64], z: &[f64]) -> Vec<f64> {
        let mut x = self.norm.apply(s);
        x.extend_from_slice(z);
        self.net
            .decoder
            .eval(&self.params, &x)
            .into_iter()
            .map(|a| if a.is_finite() { a.clamp(-1.0, 1.0) } else { 0.0 })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = SkillMetadata {
            kind: SKILL_KIND.into(),
            config: self.config.clone(),
            state_dim: self.net.state_dim,
            action_dim: self.net.action_dim,
            norm: self.norm.clone(),
        };
        self.params.save(dir, serde_json::to_value(meta).expect("metadata serializes"))
    }

    /// Loads a checkpoint; `expected_horizon` refuses models trained with a
    /// different skill length.
    pub fn load(dir: &Path, expected_horizon: Option<usize>) -> Result<Self> {
        if !dir.join("manifest.json").exists() {
            return Err(Error::MissingArtifact { name: "skill model checkpoint".into(), path: dir.to_path_buf() });
        }
        let (loaded, meta) = ParamSet::load(dir)?;
        let meta: SkillMetadata =
            serde_json::from_value(meta).map_err(|e| Error::malformed(format!("skill model metadata: {e}")))?;
        if meta.kind != SKILL_KIND {
            return Err(Error::malformed(format!("checkpoint holds `{}`, not a skill model", meta.kind)));
        }
        if let Some(h) = expected_horizon {
            if h != meta.config.horizon {
                return Err(Error::config(format!(
                    "skill model was trained with H={}, but H={h} was requested",
                    meta.config.horizon
                )));
            }
        }
        let mut model = Self::new(meta.config, meta.state_dim, meta.action_dim, meta.norm, 0)?;
        copy_params(&loaded, &mut model.params)?;
        Ok(model)
    }
}

/// Copies values by name from `src` into `dst`, requiring identical names
/// and shapes.
pub fn copy_params(src: &ParamSet, dst: &mut ParamSet) -> Result<()> {
    if src.len() != dst.len() {
        return Err(Error::malformed(format!("checkpoint has {} parameters, model needs {}", src.len(), dst.len())));
    }
    let ids: Vec<_> = dst.ids().collect();
    for id in ids {
        let name = dst.name(id).to_string();
        let sid = src.find(&name).ok_or_else(|| Error::malformed(format!("checkpoint lacks parameter `{name}`")))?;
        if src.value(sid).shape() != dst.value(id).shape() {
            return Err(Error::malformed(format!("parameter `{name}` has shape {:?}", src.value(sid).shape())));
        }
        *dst.value_mut(id) = src.value(sid).clone();
    }
    Ok(())
}

fn non_finite(windows: &[SubTrajectory], terms: &LossTerms) -> Error {
    let ids: Vec<String> = windows.iter().take(4).map(|w| format!("({}, {})", w.trajectory, w.start)).collect();
    Error::Divergence(format!(
        "non-finite skill loss {terms:?} on a batch of {} windows starting with {}",
        windows.len(),
        ids.join(", ")
    ))
}

/// `(L_rec, L_reg)` with one reparameterized skill per window.
pub fn elbo_terms(model: &SkillModel, windows: &[SubTrajectory], beta: f64, rng: &mut dyn RngCore) -> Result<(f64, f64)> {
    let t = model.loss_terms(windows, beta, Some(rng))?;
    Ok((t.rec, t.reg))
}

/// Mean `KL(q_phi || q_psi)` over the batch.
pub fn prior_loss(model: &SkillModel, windows: &[SubTrajectory]) -> Result<f64> {
    Ok(model.loss_terms(windows, 0.0, None)?.prior)
}

pub fn joint_loss(model: &SkillModel, windows: &[SubTrajectory], beta: f64, rng: &mut dyn RngCore) -> Result<f64> {
    Ok(model.loss_terms(windows, beta, Some(rng))?.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::Trajectory;
    use crate::numerics::gaussian::gaussian_kl;
    use crate::numerics::gradcheck::{analytic_grads, check_param_grads};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_config() -> SkillModelConfig {
        SkillModelConfig {
            horizon: 3,
            z_dim: 3,
            hidden: 8,
            decoder_layers: 2,
            prior_layers: 2,
            batch_size: 4,
            ..SkillModelConfig::default()
        }
    }

    fn random_windows(n: usize, h: usize, sd: usize, ad: usize, rng: &mut ChaCha8Rng) -> Vec<SubTrajectory> {
        (0..n)
            .map(|i| {
                let s: Vec<f32> = (0..h * sd).map(|_| rng.random_range(-1.0..1.0)).collect();
                let a: Vec<f32> = (0..h * ad).map(|_| rng.random_range(-1.0..1.0)).collect();
                let t = Trajectory::new(sd, ad, s, a).unwrap();
                SubTrajectory::from_trajectory(&t, i, 0, h)
            })
            .collect()
    }

    fn zero_params(model: &mut SkillModel, prefix: &str) {
        let ids: Vec<_> = model.params.ids().filter(|&id| model.params.name(id).starts_with(prefix)).collect();
        for id in ids {
            model.params.value_mut(id).fill(0.0);
        }
    }

    #[test]
    fn standard_posterior_has_zero_regularizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut model = SkillModel::new(tiny_config(), 2, 1, StateNorm::identity(2), 1).unwrap();
        zero_params(&mut model, "encoder.head");
        let w = random_windows(3, 3, 2, 1, &mut rng);
        let (_, reg) = elbo_terms(&model, &w, 1.0, &mut rng).unwrap();
        assert_eq!(reg, 0.0);
    }

    #[test]
    fn zero_beta_total_is_reconstruction_plus_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = SkillModel::new(tiny_config(), 2, 1, StateNorm::identity(2), 1).unwrap();
        let w = random_windows(3, 3, 2, 1, &mut rng);
        let t = model.loss_terms(&w, 0.0, None).unwrap();
        assert_eq!(t.total, t.rec + t.prior);
        assert!(t.reg > 0.0);
    }

    #[test]
    fn reconstruction_hand_case() {
        // Decoder mean 0 (all decoder weights zero), action 1, one action dim.
        let mut model = SkillModel::new(tiny_config(), 1, 1, StateNorm::identity(1), 2).unwrap();
        zero_params(&mut model, "decoder");
        let t = Trajectory::new(1, 1, vec![0.3, -0.2, 0.9], vec![1.0; 3]).unwrap();
        let w = SubTrajectory::from_trajectory(&t, 0, 0, 3);
        let rec = model.loss_terms(&[w], 0.0, None).unwrap().rec;
        let oracle = 0.5 * (2.0 * std::f64::consts::PI).ln() + 0.5;
        assert!((rec - oracle).abs() < 1e-12);
        assert!((oracle - 1.41894).abs() < 1e-5);
    }

    #[test]
    fn prior_loss_matches_closed_form_per_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = SkillModel::new(tiny_config(), 2, 2, StateNorm::identity(2), 3).unwrap();
        let w = random_windows(5, 3, 2, 2, &mut rng);
        let l = prior_loss(&model, &w).unwrap();
        let mut sum = 0.0;
        for win in &w {
            let q = model.encode(win).unwrap();
            let p = model.infer_skill(win.first_state(), win.last_state());
            sum += gaussian_kl(&q, &p).unwrap();
        }
        assert!((l - sum / 5.0).abs() < 1e-10);
    }

    #[test]
    fn identical_prior_gives_zero_and_unit_shift_gives_half() {
        // Posterior head and prior head zeroed: both emit N(0, I).
        let mut model = SkillModel::new(tiny_config(), 2, 1, StateNorm::identity(2), 4).unwrap();
        zero_params(&mut model, "encoder.head");
        zero_params(&mut model, "prior.out");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = random_windows(2, 3, 2, 1, &mut rng);
        assert_eq!(prior_loss(&model, &w).unwrap(), 0.0);
        // Prior mean bias of one on every dim: KL(N(0,1) || N(1,1)) = 0.5 per dim.
        let b = model.params.find("prior.out.b").unwrap();
        for (k, v) in model.params.value_mut(b).data_mut().iter_mut().enumerate() {
            if k < 3 {
                *v = 1.0;
            }
        }
        assert!((prior_loss(&model, &w).unwrap() - 1.5).abs() < 1e-12);
    }

    fn grad_instance(seed: u64, prior: PriorKind) -> (SkillModel, WindowBatch, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = tiny_config().with_prior(prior);
        let model = SkillModel::new(config, 2, 2, StateNorm::identity(2), seed).unwrap();
        let w = random_windows(3, 3, 2, 2, &mut rng);
        let batch = model.batch(&w).unwrap();
        let noise = standard_noise(3, 3, &mut rng);
        (model, batch, noise)
    }

    /// Finite differences see through the stop-gradient, so the oracle
    /// objective holds the posterior inside `L_prior` at its value for the
    /// unperturbed parameters; its gradient is the one the detached loss
    /// should produce.
    #[test]
    fn joint_loss_gradients_match_finite_differences() {
        for (seed, prior) in [(10, PriorKind::Inverse), (11, PriorKind::StateOnly)] {
            let (mut model, batch, noise) = grad_instance(seed, prior);
            let net = model.net.clone();
            let (m0, l0) = {
                let mut tape = Tape::new();
                let q = net.posterior(&mut tape, &model.params, &batch);
                (tape.value(q.mean).clone(), tape.value(q.log_std).clone())
            };
            let detached = |tape: &mut Tape, p: &ParamSet| net.losses(tape, p, &batch, &noise, 0.3).total;
            let frozen =
                |tape: &mut Tape, p: &ParamSet| net.losses_against(tape, p, &batch, &noise, 0.3, (&m0, &l0)).total;
            let mut reference = model.params.clone();
            analytic_grads(&mut model.params, &detached);
            analytic_grads(&mut reference, &frozen);
            for id in model.params.ids() {
                assert_eq!(model.params.grad(id), reference.grad(id), "{}", model.params.name(id));
            }
            if let Err(m) = check_param_grads(&mut reference, &frozen, 1e-4) {
                panic!("seed {seed}: {m}");
            }
        }
    }

    fn group_grad_norm(params: &ParamSet, prefix: &str) -> f64 {
        params
            .ids()
            .filter(|&id| params.name(id).starts_with(prefix))
            .map(|id| params.grad(id).data().iter().map(|g| g * g).sum::<f64>())
            .sum()
    }

    #[test]
    fn stop_gradient_contract() {
        let (mut model, batch, noise) = grad_instance(12, PriorKind::Inverse);
        let net = model.net.clone();
        let pick = |which: usize| {
            let net = net.clone();
            let (batch, noise) = (batch.clone(), noise.clone());
            move |tape: &mut Tape, p: &ParamSet| {
                let v = net.losses(tape, p, &batch, &noise, 1.0);
                [v.prior, v.reg, v.rec][which]
            }
        };
        analytic_grads(&mut model.params, &pick(0));
        assert_eq!(group_grad_norm(&model.params, "encoder."), 0.0);
        assert_eq!(group_grad_norm(&model.params, "decoder."), 0.0);
        assert!(group_grad_norm(&model.params, "prior.") > 0.0);
        analytic_grads(&mut model.params, &pick(1));
        assert_eq!(group_grad_norm(&model.params, "prior."), 0.0);
        assert!(group_grad_norm(&model.params, "encoder.") > 0.0);
        analytic_grads(&mut model.params, &pick(2));
        assert_eq!(group_grad_norm(&model.params, "prior."), 0.0);
        assert!(group_grad_norm(&model.params, "decoder.") > 0.0);
    }

    #[test]
    fn infer_skill_is_deterministic_and_clamped() {
        let mut model = SkillModel::new(tiny_config(), 2, 1, StateNorm::identity(2), 5).unwrap();
        let a = model.infer_skill(&[0.1, 0.2], &[0.5, -0.5]);
        assert_eq!(a, model.infer_skill(&[0.1, 0.2], &[0.5, -0.5]));
        let b = model.params.find("prior.out.b").unwrap();
        model.params.value_mut(b).data_mut()[3..].iter_mut().for_each(|v| *v = 50.0);
        let g = model.infer_skill(&[0.1, 0.2], &[0.5, -0.5]);
        assert!(g.log_std.iter().all(|&l| (LOG_STD_MIN..=LOG_STD_MAX).contains(&l)));
        assert_eq!(g.log_std, vec![LOG_STD_MAX; 3]);
    }

    #[test]
    fn zero_decoder_returns_bias() {
        let mut model = SkillModel::new(tiny_config(), 2, 2, StateNorm::identity(2), 6).unwrap();
        zero_params(&mut model, "decoder");
        let b = model.params.find("decoder.out.b").unwrap();
        model.params.value_mut(b).data_mut().copy_from_slice(&[0.25, -3.0]);
        // Clipped into the action box.
        assert_eq!(model.decode_action(&[1.0, 2.0], &[0.0, 1.0, 2.0]), vec![0.25, -1.0]);
    }

    #[test]
    fn checkpoint_round_trip_and_horizon_guard() {
        let dir = tempfile::tempdir().unwrap();
        let mut model = SkillModel::new(tiny_config(), 2, 2, StateNorm::identity(2), 7).unwrap();
        model.params.quantize_f32();
        model.save(dir.path()).unwrap();
        let back = SkillModel::load(dir.path(), Some(3)).unwrap();
        assert_eq!(back, model);
        assert!(matches!(SkillModel::load(dir.path(), Some(10)), Err(Error::Config(_))));
        assert!(matches!(
            SkillModel::load(&dir.path().join("missing"), None),
            Err(Error::MissingArtifact { .. })
        ));
    }

    #[test]
    fn mismatched_window_is_rejected() {
        let model = SkillModel::new(tiny_config(), 2, 1, StateNorm::identity(2), 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = random_windows(1, 4, 2, 1, &mut rng);
        assert!(model.loss_terms(&w, 0.0, None).is_err());
        assert!(model.loss_terms(&[], 0.0, None).is_err());
    }
}
