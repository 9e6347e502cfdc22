use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::controller::{Gains, WaypointController};
use super::dynamics::{step, EnvConfig, MazeAction, MazeState, ACTION_DIM, STATE_DIM};
use super::layout::{Cell, MazeLayout, Region};
use crate::datastore::{DatasetMeta, DemoSet, GoalDescriptor, Trajectory, TrajectoryDataset};
use crate::error::{Error, Result};

/// Offline corpus generator settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OfflineDataConfig {
    pub n_transitions: usize,
    /// Standard deviation of Gaussian noise added to each controller action.
    pub noise_std: f64,
    /// Transitions per stored trajectory; the last one may be shorter.
    pub traj_len: usize,
    pub env: EnvConfig,
    pub gains: Gains,
}

impl Default for OfflineDataConfig {
    fn default() -> Self {
        Self {
            n_transitions: 200_000,
            noise_std: 0.0,
            traj_len: 1000,
            env: EnvConfig::default(),
            gains: Gains::default(),
        }
    }
}

impl OfflineDataConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.traj_len == 0 {
            return Err(Error::config("traj_len must be positive"));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::config("noise_std must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// RNG for item `k` of a generator seeded with `seed`.
pub fn stream_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

fn random_cell(cells: &[Cell], rng: &mut impl Rng) -> Cell {
    cells[rng.random_range(0..cells.len())]
}

fn dataset_meta(seed: u64, config_hash: String) -> DatasetMeta {
    DatasetMeta { state_dim: STATE_DIM, action_dim: ACTION_DIM, seed, config_hash, extra: serde_json::Value::Null }
}

fn record(states: &mut Vec<f32>, actions: &mut Vec<f32>, s: MazeState, a: MazeAction) {
    states.extend(s.to_vec().iter().map(|&v| v as f32));
    actions.extend(a.to_vec().iter().map(|&v| v as f32));
}

/// Goal-reaching navigation data with the region walled off.
///
/// Trajectory `k` is drawn from its own stream of the master seed, so the
/// result does not depend on generation order.
pub fn generate_offline_data(
    layout: &MazeLayout,
    blocked: Option<Region>,
    config: &OfflineDataConfig,
    seed: u64,
    config_hash: String,
) -> Result<TrajectoryDataset> {
    config.validate()?;
    let maze = layout.with_blocked(blocked);
    let cells = maze.free_cells();
    if cells.len() < 2 {
        return Err(Error::config("need at least two free cells outside the blocked region"));
    }
    let noise = Normal::new(0.0, config.noise_std).map_err(|e| Error::config(e.to_string()))?;
    let mut trajectories = Vec::new();
    let mut remaining = config.n_transitions;
    let mut k = 0u64;
    while remaining > 0 {
        let len = remaining.min(config.traj_len);
        let mut rng = stream_rng(seed, k);
        let start = random_cell(&cells, &mut rng);
        let c = start.center();
        let mut s = MazeState::at_rest([c[0] + rng.random_range(-0.25..0.25), c[1] + rng.random_range(-0.25..0.25)]);
        let mut states = Vec::with_capacity(len * STATE_DIM);
        let mut actions = Vec::with_capacity(len * ACTION_DIM);
        let mut goal = start;
        let mut ctrl: Option<WaypointController> = None;
        for _ in 0..len {
            let arrived = s.distance_to(goal.center()) < config.env.goal_radius;
            if ctrl.is_none() || arrived {
                let here = maze.cell_at(s.x, s.y).expect("state stays on the grid");
                while goal == here {
                    goal = random_cell(&cells, &mut rng);
                }
                ctrl = Some(WaypointController::plan(&maze, s, goal, config.gains)?);
            }
            let a = ctrl.as_mut().expect("planned").act(s);
            let a = if config.noise_std > 0.0 {
                MazeAction::clipped(a.ax + noise.sample(&mut rng), a.ay + noise.sample(&mut rng))
            } else {
                a
            };
            record(&mut states, &mut actions, s, a);
            s = step(s, a, &maze, &config.env);
        }
        trajectories.push(Trajectory::new(STATE_DIM, ACTION_DIM, states, actions)?);
        remaining -= len;
        k += 1;
    }
    TrajectoryDataset::new(dataset_meta(seed, config_hash), trajectories)
}

/// `n` start cells, distinct while enough candidates exist, outside `avoid`
/// and never equal to `goal`.
pub fn sample_start_cells(
    layout: &MazeLayout,
    avoid: Option<Region>,
    goal: Option<Cell>,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Cell>> {
    let candidates: Vec<Cell> = layout
        .free_cells()
        .into_iter()
        .filter(|&c| avoid.is_none_or(|r| layout.region_of(c) != Some(r)) && Some(c) != goal)
        .collect();
    if candidates.is_empty() {
        return Err(Error::config("no candidate start cells"));
    }
    if n <= candidates.len() {
        Ok(sample(rng, candidates.len(), n).into_iter().map(|i| candidates[i]).collect())
    } else {
        Ok((0..n).map(|_| random_cell(&candidates, rng)).collect())
    }
}

/// Expert demonstrations from random starts outside the region to the
/// region's goal cell, on the unblocked layout.
pub fn generate_demos(
    layout: &MazeLayout,
    region: Region,
    m: usize,
    seed: u64,
    env: &EnvConfig,
    gains: Gains,
) -> Result<DemoSet> {
    env.validate()?;
    if m == 0 {
        return Err(Error::config("a demo set needs at least one trajectory"));
    }
    let goal = layout.region_goal(region)?;
    let starts = sample_start_cells(layout, Some(region), Some(goal), m, &mut stream_rng(seed, u64::MAX))?;
    let mut trajectories = Vec::with_capacity(m);
    for (k, start) in starts.into_iter().enumerate() {
        let s0 = MazeState::at_rest(start.center());
        let mut ctrl = WaypointController::plan(layout, s0, goal, gains)?;
        let mut s = s0;
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut arrived = false;
        for _ in 0..env.max_steps {
            let a = ctrl.act(s);
            record(&mut states, &mut actions, s, a);
            if s.distance_to(goal.center()) < env.goal_radius {
                arrived = true;
                break;
            }
            s = step(s, a, layout, env);
        }
        if !arrived {
            return Err(Error::Planning(format!("demo {k} from {start:?} did not reach {goal:?}")));
        }
        trajectories.push(Trajectory::new(STATE_DIM, ACTION_DIM, states, actions)?);
    }
    let descriptor = GoalDescriptor { region: Some(region), cell: goal, position: goal.center() };
    let dataset = TrajectoryDataset::new(dataset_meta(seed, String::new()), trajectories)?;
    DemoSet::new(dataset, descriptor)
}
