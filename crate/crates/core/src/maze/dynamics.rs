use serde::{Deserialize, Serialize};

use super::layout::MazeLayout;
use crate::error::{Error, Result};

/// Gap kept between the point and a wall face it was clamped against, so the
/// point stays inside its free cell.
const WALL_GAP: f64 = 1e-6;

pub const STATE_DIM: usize = 4;
pub const ACTION_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl MazeState {
    pub fn at_rest(pos: [f64; 2]) -> Self {
        Self { x: pos[0], y: pos[1], vx: 0.0, vy: 0.0 }
    }

    pub fn to_vec(self) -> [f64; STATE_DIM] {
        [self.x, self.y, self.vx, self.vy]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { x: s[0], y: s[1], vx: s[2], vy: s[3] }
    }

    pub fn pos(self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn distance_to(self, p: [f64; 2]) -> f64 {
        ((self.x - p[0]).powi(2) + (self.y - p[1]).powi(2)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeAction {
    pub ax: f64,
    pub ay: f64,
}

impl MazeAction {
    /// Components clipped to `[-1, 1]`; non-finite components become 0.
    pub fn clipped(ax: f64, ay: f64) -> Self {
        let c = |v: f64| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
        Self { ax: c(ax), ay: c(ay) }
    }

    pub fn from_slice(a: &[f64]) -> Self {
        Self::clipped(a[0], a[1])
    }

    pub fn to_vec(self) -> [f64; ACTION_DIM] {
        [self.ax, self.ay]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub dt: f64,
    pub v_max: f64,
    pub max_steps: usize,
    pub goal_radius: f64,
    /// Acceleration produced by a unit action component.
    #[serde(default = "default_accel_gain")]
    pub accel_gain: f64,
}

fn default_accel_gain() -> f64 {
    5.0
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { dt: 0.1, v_max: 2.0, max_steps: 2000, goal_radius: 0.5, accel_gain: default_accel_gain() }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.dt, self.v_max, self.goal_radius, self.accel_gain].iter().all(|v| v.is_finite() && *v > 0.0);
        if !ok {
            return Err(Error::config(format!("environment constants must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Semi-implicit Euler step with per-axis wall resolution (x first, then y).
pub fn step(state: MazeState, action: MazeAction, layout: &MazeLayout, config: &EnvConfig) -> MazeState {
    let a = MazeAction::clipped(action.ax, action.ay);
    let mut vx = state.vx + config.accel_gain * a.ax * config.dt;
    let mut vy = state.vy + config.accel_gain * a.ay * config.dt;
    let speed = (vx * vx + vy * vy).sqrt();
    if speed > config.v_max {
        let k = config.v_max / speed;
        vx *= k;
        vy *= k;
    }

    let mut x = state.x + vx * config.dt;
    if !layout.is_free_point(x, state.y) {
        x = clamp_to_face(state.x, x);
        vx = 0.0;
    }
    let mut y = state.y + vy * config.dt;
    if !layout.is_free_point(x, y) {
        y = clamp_to_face(state.y, y);
        vy = 0.0;
    }
    MazeState { x, y, vx, vy }
}

/// Position on the face of the cell containing `from`, in the direction of `to`.
fn clamp_to_face(from: f64, to: f64) -> f64 {
    let cell = from.floor();
    if to > from {
        cell + 1.0 - WALL_GAP
    } else {
        cell
    }
}
