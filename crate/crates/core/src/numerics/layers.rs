//! Dense, feed-forward and recurrent layers built on the tape.

use rand::Rng;

use super::params::{ParamId, ParamSet};
use super::tape::{Tape, Var};
use super::tensor::{matmul_acc, Tensor};
use crate::error::{Error, Result};

/// Bounds applied to every network-emitted log standard deviation.
pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new(params: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let w = params.add_uniform(format!("{name}.w"), &[fan_in, fan_out], fan_in, rng);
        let b = params.add_uniform(format!("{name}.b"), &[1, fan_out], fan_in, rng);
        Self { w, b, fan_in, fan_out }
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Var {
        let w = tape.param(params, self.w);
        let b = tape.param(params, self.b);
        tape.linear(x, w, b)
    }
}

/// `y = x W + b` for a single input row, outside any tape.
pub fn linear_forward(x: &[f64], weights: &Tensor, bias: &Tensor) -> Result<Vec<f64>> {
    if weights.rows() != x.len() || bias.len() != weights.cols() {
        return Err(Error::config(format!(
            "linear: input {} / weights {:?} / bias {}",
            x.len(),
            weights.shape(),
            bias.len()
        )));
    }
    let mut y = bias.data().to_vec();
    matmul_acc(x, weights.data(), &mut y, 1, x.len(), weights.cols());
    Ok(y)
}

/// Feed-forward network: `hidden_layers` ReLU layers followed by a linear head.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        input: usize,
        hidden: usize,
        hidden_layers: usize,
        output: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut width = input;
        for i in 0..hidden_layers {
            layers.push(Linear::new(params, &format!("{name}.l{i}"), width, hidden, rng));
            width = hidden;
        }
        layers.push(Linear::new(params, &format!("{name}.out"), width, output, rng));
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("mlp has a head").fan_out
    }

    /// Tape-free forward pass for a single input row.
    pub fn eval(&self, params: &ParamSet, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = linear_forward(&h, params.value(layer.w), params.value(layer.b)).expect("mlp dimensions are consistent");
            if i < last {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        h
    }

    pub fn forward(&self, tape: &mut Tape, params: &ParamSet, x: Var) -> Var {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(tape, params, h);
            if i < last {
                h = tape.relu(h);
            }
        }
        h
    }
}

/// Splits a `rows x 2d` head output into `(mean, clamped log_std)`.
pub fn gaussian_head(tape: &mut Tape, out: Var, dim: usize) -> (Var, Var) {
    let mean = tape.slice(out, 0, dim);
    let raw = tape.slice(out, dim, dim);
    let log_std = tape.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
    (mean, log_std)
}

/// Single-layer LSTM cell; gate order is input, forget, candidate, output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmCell {
    pub gates: Linear,
    pub input: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(params: &mut ParamSet, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let gates = Linear::new(params, &format!("{name}.gates"), input + hidden, 4 * hidden, rng);
        Self { gates, input, hidden }
    }

    /// One step: returns `(h', c')`.
    pub fn step(&self, tape: &mut Tape, params: &ParamSet, x: Var, h: Var, c: Var) -> (Var, Var) {
        let xh = tape.concat(&[x, h]);
        let z = self.gates.forward(tape, params, xh);
        let n = self.hidden;
        let i = tape.slice(z, 0, n);
        let f = tape.slice(z, n, n);
        let g = tape.slice(z, 2 * n, n);
        let o = tape.slice(z, 3 * n, n);
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let fc = tape.mul(f, c);
        let ig = tape.mul(i, g);
        let c_next = tape.add(fc, ig);
        let tc = tape.tanh(c_next);
        let h_next = tape.mul(o, tc);
        (h_next, c_next)
    }

    /// Runs the cell over `inputs` from a zero state and returns the final `(h, c)`.
    pub fn unroll(&self, tape: &mut Tape, params: &ParamSet, inputs: &[Var]) -> (Var, Var) {
        let rows = tape.value(inputs[0]).rows();
        let mut h = tape.leaf(Tensor::zeros(&[rows, self.hidden]));
        let mut c = tape.leaf(Tensor::zeros(&[rows, self.hidden]));
        for &x in inputs {
            (h, c) = self.step(tape, params, x, h, c);
        }
        (h, c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_eval_matches_tape_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = ParamSet::new();
        let mlp = Mlp::new(&mut params, "m", 3, 5, 2, 2, &mut rng);
        let x = vec![0.3, -1.2, 0.7];
        let mut tape = Tape::new();
        let xv = tape.leaf(Tensor::row(x.clone()));
        let y = mlp.forward(&mut tape, &params, xv);
        let plain = mlp.eval(&params, &x);
        for (a, b) in tape.value(y).data().iter().zip(&plain) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    use crate::numerics::gradcheck::check_param_grads;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_zero_and_identity_cases() {
        let zero_w = Tensor::zeros(&[3, 2]);
        let b = Tensor::row(vec![0.5, -1.5]);
        assert_eq!(linear_forward(&[1.0, 2.0, 3.0], &zero_w, &b).unwrap(), vec![0.5, -1.5]);

        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let zb = Tensor::row(vec![0.0, 0.0]);
        assert_eq!(linear_forward(&[0.3, -0.7], &eye, &zb).unwrap(), vec![0.3, -0.7]);
    }

    #[test]
    fn linear_matches_dense_matmul_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Three inputs, two outputs.
        let w: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut expected = b.clone();
        for (j, e) in expected.iter_mut().enumerate() {
            for (k, xv) in x.iter().enumerate() {
                *e += xv * w[k * 2 + j];
            }
        }
        let got = linear_forward(&x, &Tensor::matrix(3, 2, w).unwrap(), &Tensor::row(b)).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn linear_rejects_mismatched_dims() {
        let w = Tensor::zeros(&[3, 2]);
        assert!(linear_forward(&[1.0, 2.0], &w, &Tensor::row(vec![0.0, 0.0])).is_err());
    }

    #[test]
    fn zero_lstm_stays_at_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut params = ParamSet::new();
        let cell = LstmCell::new(&mut params, "enc", 3, 4, &mut rng);
        for id in params.ids().collect::<Vec<_>>() {
            params.value_mut(id).fill(0.0);
        }
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2, 3]));
        let (h, c) = cell.unroll(&mut tape, &params, &[x]);
        assert!(tape.value(h).data().iter().all(|&v| v == 0.0));
        assert!(tape.value(c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unroll_of_length_one_equals_single_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = ParamSet::new();
        let cell = LstmCell::new(&mut params, "enc", 3, 4, &mut rng);
        let xin = Tensor::matrix(1, 3, vec![0.2, -0.1, 0.4]).unwrap();
        let mut t1 = Tape::new();
        let x = t1.leaf(xin.clone());
        let (h1, c1) = cell.unroll(&mut t1, &params, &[x]);
        let mut t2 = Tape::new();
        let x = t2.leaf(xin);
        let h0 = t2.leaf(Tensor::zeros(&[1, 4]));
        let c0 = t2.leaf(Tensor::zeros(&[1, 4]));
        let (h2, c2) = cell.step(&mut t2, &params, x, h0, c0);
        assert_eq!(t1.value(h1), t2.value(h2));
        assert_eq!(t1.value(c1), t2.value(c2));
    }

    #[test]
    fn lstm_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamSet::new();
        let cell = LstmCell::new(&mut params, "enc", 3, 4, &mut rng);
        let inputs: Vec<Tensor> = (0..4)
            .map(|_| Tensor::matrix(2, 3, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap())
            .collect();
        let loss = |tape: &mut Tape, params: &ParamSet| {
            let xs: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
            let (h, c) = cell.unroll(tape, params, &xs);
            let hc = tape.concat(&[h, c]);
            let sq = tape.square(hc);
            tape.mean(sq)
        };
        check_param_grads(&mut params, &loss, 1e-4).unwrap();
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut params = ParamSet::new();
        let mlp = Mlp::new(&mut params, "m", 3, 5, 2, 4, &mut rng);
        let x = Tensor::matrix(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let loss = |tape: &mut Tape, params: &ParamSet| {
            let xv = tape.leaf(x.clone());
            let y = mlp.forward(tape, params, xv);
            let (m, s) = gaussian_head(tape, y, 2);
            let e = tape.exp(s);
            let p = tape.mul(m, e);
            tape.mean(p)
        };
        check_param_grads(&mut params, &loss, 1e-4).unwrap();
    }
}
