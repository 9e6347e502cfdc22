use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maze::{EnvConfig, MazeLayout};

/// Fixed affine feature scaling `(s - offset) / scale` applied to states
/// before they enter any network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateNorm {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StateNorm {
    pub fn identity(dim: usize) -> Self {
        Self { offset: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Maps maze positions and velocities into roughly `[-1, 1]`.
    pub fn for_maze(layout: &MazeLayout, env: &EnvConfig) -> Self {
        let (hx, hy) = (layout.cols() as f64 / 2.0, layout.rows() as f64 / 2.0);
        Self { offset: vec![hx, hy, 0.0, 0.0], scale: vec![hx, hy, env.v_max, env.v_max] }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.offset.len() != dim || self.scale.len() != dim {
            return Err(Error::config(format!("state normalizer has dim {}, expected {dim}", self.offset.len())));
        }
        if !self.scale.iter().all(|s| s.is_finite() && *s > 0.0) || !self.offset.iter().all(|o| o.is_finite()) {
            return Err(Error::config("state normalizer must have finite offsets and positive scales"));
        }
        Ok(())
    }

    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        s.iter().zip(&self.offset).zip(&self.scale).map(|((v, o), k)| (v - o) / k).collect()
    }

    /// Normalizes a row-major block of states in place.
    pub fn apply_rows(&self, rows: &mut [f64]) {
        let d = self.dim();
        for row in rows.chunks_exact_mut(d) {
            for ((v, o), k) in row.iter_mut().zip(&self.offset).zip(&self.scale) {
                *v = (*v - o) / k;
            }
        }
    }
}
