use serde::{Deserialize, Serialize};

use super::params::ParamSet;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let m: Vec<Tensor> = params.ids().map(|id| Tensor::zeros(params.value(id).shape())).collect();
        Self { config, step: 0, v: m.clone(), m }
    }
}

/// One bias-corrected Adam update; gradients are zeroed afterwards.
///
/// Non-finite gradients abort before any parameter is touched.
pub fn adam_step(params: &mut ParamSet, state: &mut AdamState) -> Result<()> {
    for id in params.ids() {
        if !params.grad(id).is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite gradient in parameter `{}` at step {}",
                params.name(id),
                state.step + 1
            )));
        }
    }
    if state.m.len() != params.len() {
        return Err(Error::config("adam state does not match parameter set"));
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let bc1 = 1.0 - beta1.powi(state.step as i32);
    let bc2 = 1.0 - beta2.powi(state.step as i32);
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let i = id.index();
        let grad = params.grad(id).data().to_vec();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let value = params.value_mut(id).data_mut();
        for k in 0..grad.len() {
            let g = grad[k];
            m[k] = beta1 * m[k] + (1.0 - beta1) * g;
            v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            value[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    params.zero_grads();
    Ok(())
}

/// Builds the loss on a fresh tape, backpropagates and applies one Adam
/// update. Returns the loss value before the update.
pub fn optimize_step(
    params: &mut ParamSet,
    state: &mut AdamState,
    loss: impl FnOnce(&mut Tape, &ParamSet) -> Var,
) -> Result<f64> {
    let mut tape = Tape::new();
    let root = loss(&mut tape, params);
    let value = tape.value(root).item();
    if !value.is_finite() {
        return Err(Error::Divergence(format!("loss is {value} at step {}", state.step + 1)));
    }
    let grads = tape.backward(root);
    params.zero_grads();
    tape.accumulate_param_grads(&grads, params);
    adam_step(params, state)?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(x: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("x", Tensor::scalar(x));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = scalar_params(1.25);
        let mut s = AdamState::new(&p, AdamConfig::default());
        adam_step(&mut p, &mut s).unwrap();
        assert_eq!(p.value(p.find("x").unwrap()).item(), 1.25);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        for g in [3.0, -0.02] {
            let mut p = scalar_params(0.0);
            let id = p.find("x").unwrap();
            p.grad_mut(id).data_mut()[0] = g;
            let mut s = AdamState::new(&p, AdamConfig::default());
            adam_step(&mut p, &mut s).unwrap();
            let moved = p.value(id).item();
            assert!((moved + 1e-3 * f64::signum(g)).abs() < 1e-8);
            assert_eq!(p.grad(id).item(), 0.0);
        }
    }

    #[test]
    fn three_steps_on_quadratic_match_hand_stepped_oracle() {
        // f(x) = (x - 2)^2, grad = 2(x - 2)
        let mut p = scalar_params(0.5);
        let id = p.find("x").unwrap();
        let cfg = AdamConfig { lr: 0.1, ..AdamConfig::default() };
        let mut s = AdamState::new(&p, cfg);

        let (mut x, mut m, mut v) = (0.5f64, 0.0f64, 0.0f64);
        for t in 1..=3 {
            let g = 2.0 * (x - 2.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.1 * mh / (vh.sqrt() + 1e-8);

            let cur = p.value(id).item();
            p.grad_mut(id).data_mut()[0] = 2.0 * (cur - 2.0);
            adam_step(&mut p, &mut s).unwrap();
            assert!((p.value(id).item() - x).abs() < 1e-12);
        }
        assert_eq!(s.step, 3);
    }

    #[test]
    fn non_finite_gradient_names_the_parameter() {
        let mut p = scalar_params(0.0);
        p.add("bad", Tensor::row(vec![0.0, 0.0]));
        let bad = p.find("bad").unwrap();
        p.grad_mut(bad).data_mut()[1] = f64::NAN;
        let mut s = AdamState::new(&p, AdamConfig::default());
        let err = adam_step(&mut p, &mut s).unwrap_err().to_string();
        assert!(err.contains("`bad`"), "{err}");
        assert_eq!(s.step, 0);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut p = scalar_params(0.3);
            let id = p.find("x").unwrap();
            let mut s = AdamState::new(&p, AdamConfig::default());
            for k in 0..5 {
                p.grad_mut(id).data_mut()[0] = (k as f64 * 0.7).sin();
                adam_step(&mut p, &mut s).unwrap();
            }
            p.value(id).item().to_bits()
        };
        assert_eq!(run(), run());
    }
}
