//! Central finite-difference gradient checking.
//!
//! Only forward evaluations are used here, so the check is independent of
//! the reverse sweep it validates.

use super::params::ParamSet;
use super::tape::{Tape, Var};

pub const FD_STEP: f64 = 1e-5;

/// Absolute floor below which differences are treated as finite-difference noise.
const ABS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradMismatch {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl std::fmt::Display for GradMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}[{}]: analytic {:.9e} vs numeric {:.9e}",
            self.param, self.index, self.analytic, self.numeric
        )
    }
}

/// Analytic gradients of `loss` for every parameter, from a fresh tape.
pub fn analytic_grads(params: &mut ParamSet, loss: &dyn Fn(&mut Tape, &ParamSet) -> Var) -> f64 {
    params.zero_grads();
    let mut tape = Tape::new();
    let root = loss(&mut tape, params);
    let value = tape.value(root).item();
    let grads = tape.backward(root);
    tape.accumulate_param_grads(&grads, params);
    value
}

/// Compares analytic against central-difference gradients for every scalar
/// of every parameter. Returns the worst relative error on success.
pub fn check_param_grads(
    params: &mut ParamSet,
    loss: &dyn Fn(&mut Tape, &ParamSet) -> Var,
    rel_tol: f64,
) -> Result<f64, GradMismatch> {
    analytic_grads(params, loss);
    let eval = |params: &ParamSet| {
        let mut tape = Tape::new();
        let root = loss(&mut tape, params);
        tape.value(root).item()
    };
    let mut worst: f64 = 0.0;
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for i in 0..params.value(id).len() {
            let orig = params.value(id).data()[i];
            params.value_mut(id).data_mut()[i] = orig + FD_STEP;
            let plus = eval(params);
            params.value_mut(id).data_mut()[i] = orig - FD_STEP;
            let minus = eval(params);
            params.value_mut(id).data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = params.grad(id).data()[i];
            let diff = (analytic - numeric).abs();
            let scale = analytic.abs().max(numeric.abs());
            if diff > rel_tol * scale + ABS_FLOOR {
                return Err(GradMismatch { param: params.name(id).to_string(), index: i, analytic, numeric });
            }
            if scale > ABS_FLOOR {
                worst = worst.max(diff / scale);
            }
        }
    }
    Ok(worst)
}
