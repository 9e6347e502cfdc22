//! Diagonal Gaussian calculus, both on plain vectors and on the tape.

use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::layers::{LOG_STD_MAX, LOG_STD_MIN};
use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::config(format!(
                "gaussian mean has {} dims but log_std has {}",
                mean.len(),
                log_std.len()
            )));
        }
        Ok(Self { mean, log_std })
    }

    pub fn standard(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], log_std: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| 0.5 * (1.0 + LN_2PI) + l).sum()
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        gaussian_log_prob(self, x)
    }

    pub fn rsample(&self, noise: &[f64]) -> Result<Vec<f64>> {
        gaussian_rsample(self, noise)
    }
}

fn check_dims(a: usize, b: usize, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::config(format!("{what}: dimension {a} vs {b}")));
    }
    Ok(())
}

/// Sum over dimensions of univariate Gaussian log-densities.
pub fn gaussian_log_prob(g: &DiagGaussian, x: &[f64]) -> Result<f64> {
    check_dims(g.dim(), x.len(), "log_prob")?;
    Ok(g.mean
        .iter()
        .zip(&g.log_std)
        .zip(x)
        .map(|((m, ls), x)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum())
}

/// Closed-form `KL(q || p)` summed over dimensions.
pub fn gaussian_kl(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64> {
    check_dims(q.dim(), p.dim(), "kl")?;
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let (mq, lq, mp, lp) = (q.mean[i], q.log_std[i], p.mean[i], p.log_std[i]);
        let var_q = (2.0 * lq).exp();
        let var_p = (2.0 * lp).exp();
        kl += lp - lq + (var_q + (mq - mp) * (mq - mp)) / (2.0 * var_p) - 0.5;
    }
    Ok(kl.max(0.0))
}

/// `mean + std * noise` with `log_std` clamped to the network bounds.
pub fn gaussian_rsample(g: &DiagGaussian, noise: &[f64]) -> Result<Vec<f64>> {
    check_dims(g.dim(), noise.len(), "rsample")?;
    Ok(g.mean
        .iter()
        .zip(&g.log_std)
        .zip(noise)
        .map(|((m, ls), n)| m + ls.clamp(LOG_STD_MIN, LOG_STD_MAX).exp() * n)
        .collect())
}

/// A batch of diagonal Gaussians living on a tape (`rows x dim` each).
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mean: Var,
    pub log_std: Var,
}

impl GaussianVars {
    pub fn detach(self, tape: &mut Tape) -> Self {
        Self { mean: tape.detach(self.mean), log_std: tape.detach(self.log_std) }
    }

    /// Row `r` as a plain distribution.
    pub fn row(&self, tape: &Tape, r: usize) -> DiagGaussian {
        DiagGaussian {
            mean: tape.value(self.mean).row_slice(r).to_vec(),
            log_std: tape.value(self.log_std).row_slice(r).to_vec(),
        }
    }

    /// Reparameterized sample with externally drawn standard-normal noise.
    pub fn rsample(&self, tape: &mut Tape, noise: Var) -> Var {
        let std = tape.exp(self.log_std);
        let scaled = tape.mul(std, noise);
        tape.add(self.mean, scaled)
    }
}

/// Per-row `KL(q || p)` as a `rows x 1` column.
pub fn kl_vars(tape: &mut Tape, q: GaussianVars, p: GaussianVars) -> Var {
    let two_lq = tape.scale(q.log_std, 2.0);
    let var_q = tape.exp(two_lq);
    let neg_two_lp = tape.scale(p.log_std, -2.0);
    let inv_var_p = tape.exp(neg_two_lp);
    let dm = tape.sub(q.mean, p.mean);
    let dm2 = tape.square(dm);
    let num = tape.add(var_q, dm2);
    let ratio = tape.mul(num, inv_var_p);
    let half = tape.scale(ratio, 0.5);
    let dl = tape.sub(p.log_std, q.log_std);
    let sum = tape.add(dl, half);
    let per_dim = tape.add_const(sum, -0.5);
    tape.sum_cols(per_dim)
}

/// Per-row `KL(q || N(0, I))`.
pub fn kl_standard_vars(tape: &mut Tape, q: GaussianVars) -> Var {
    let two_lq = tape.scale(q.log_std, 2.0);
    let var_q = tape.exp(two_lq);
    let m2 = tape.square(q.mean);
    let num = tape.add(var_q, m2);
    let half = tape.scale(num, 0.5);
    let minus = tape.sub(half, q.log_std);
    let per_dim = tape.add_const(minus, -0.5);
    tape.sum_cols(per_dim)
}

/// Per-row negative log-likelihood of `x` under `N(mean, I)`.
pub fn unit_nll_vars(tape: &mut Tape, mean: Var, x: Var) -> Var {
    let dim = tape.value(mean).cols() as f64;
    let d = tape.sub(x, mean);
    let d2 = tape.square(d);
    let s = tape.sum_cols(d2);
    let half = tape.scale(s, 0.5);
    tape.add_const(half, 0.5 * dim * LN_2PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn log_prob_closed_forms() {
        let g = DiagGaussian::standard(1);
        assert!((g.log_prob(&[0.0]).unwrap() + 0.918_938_533_204_672_7).abs() < 1e-12);
        let g = DiagGaussian::new(vec![1.5, -2.0, 0.3], vec![0.0; 3]).unwrap();
        let lp = g.log_prob(&[1.5, -2.0, 0.3]).unwrap();
        assert!((lp - 3.0 * (-0.5 * LN_2PI)).abs() < 1e-12);
    }

    #[test]
    fn log_prob_matches_direct_density_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mean: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let log_std: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = DiagGaussian::new(mean.clone(), log_std.clone()).unwrap();
        // Product of univariate densities, then log.
        let density: f64 = (0..4)
            .map(|i| {
                let s = log_std[i].exp();
                (-(x[i] - mean[i]).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            })
            .product();
        assert!((g.log_prob(&x).unwrap() - density.ln()).abs() < 1e-10);
    }

    #[test]
    fn kl_closed_forms() {
        let n = DiagGaussian::standard(1);
        assert_eq!(gaussian_kl(&n, &n).unwrap(), 0.0);
        let shifted = DiagGaussian::new(vec![1.0], vec![0.0]).unwrap();
        assert!((gaussian_kl(&shifted, &n).unwrap() - 0.5).abs() < 1e-12);
        let wide = DiagGaussian::new(vec![0.0], vec![2f64.ln()]).unwrap();
        // 0.5 * (4 - 1 - ln 4)
        assert!((gaussian_kl(&wide, &n).unwrap() - 0.806_852_819_440_054_7).abs() < 1e-10);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = DiagGaussian::standard(2);
        let b = DiagGaussian::standard(3);
        assert!(gaussian_kl(&a, &b).is_err());
        assert!(a.log_prob(&[0.0]).is_err());
        assert!(DiagGaussian::new(vec![0.0], vec![]).is_err());
    }

    #[test]
    fn rsample_degenerate_cases() {
        let g = DiagGaussian::new(vec![0.5, -1.0], vec![0.3, -0.2]).unwrap();
        assert_eq!(g.rsample(&[0.0, 0.0]).unwrap(), g.mean);
        let tight = DiagGaussian::new(vec![0.5, -1.0], vec![-1e9, -1e9]).unwrap();
        let s = tight.rsample(&[1.0, -1.0]).unwrap();
        for (a, b) in s.iter().zip(&tight.mean) {
            assert!((a - b).abs() < 0.01);
        }
    }

    #[test]
    fn rsample_mean_converges() {
        let g = DiagGaussian::new(vec![0.7], vec![0.4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| g.rsample(&[rng.sample::<f64, _>(StandardNormal)]).unwrap()[0])
            .sum::<f64>()
            / n as f64;
        let tol = 3.0 * g.std()[0] / (n as f64).sqrt();
        assert!((mean - 0.7).abs() < tol);
    }

    #[test]
    fn tape_versions_agree_with_plain_versions() {
        let q = DiagGaussian::new(vec![0.3, -0.4], vec![0.2, -0.6]).unwrap();
        let p = DiagGaussian::new(vec![-0.1, 0.5], vec![-0.3, 0.4]).unwrap();
        let mut tape = Tape::new();
        let qv = GaussianVars {
            mean: tape.leaf(Tensor::row(q.mean.clone())),
            log_std: tape.leaf(Tensor::row(q.log_std.clone())),
        };
        let pv = GaussianVars {
            mean: tape.leaf(Tensor::row(p.mean.clone())),
            log_std: tape.leaf(Tensor::row(p.log_std.clone())),
        };
        let kl = kl_vars(&mut tape, qv, pv);
        assert!((tape.value(kl).item() - gaussian_kl(&q, &p).unwrap()).abs() < 1e-12);
        let kls = kl_standard_vars(&mut tape, qv);
        let std = DiagGaussian::standard(2);
        assert!((tape.value(kls).item() - gaussian_kl(&q, &std).unwrap()).abs() < 1e-12);
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
        let nll = unit_nll_vars(&mut tape, qv.mean, x);
        let unit = DiagGaussian::new(q.mean.clone(), vec![0.0, 0.0]).unwrap();
        assert!((tape.value(nll).item() + unit.log_prob(&[1.0, 2.0]).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_finite_at_clamp_bounds() {
        let g = DiagGaussian::new(vec![0.0; 2], vec![LOG_STD_MIN, LOG_STD_MAX]).unwrap();
        assert!(g.entropy().is_finite());
    }
}
