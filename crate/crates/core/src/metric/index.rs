use super::encoder::{squared_distance, DistanceEncoder};
use crate::datastore::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::maze::{step, EnvConfig, MazeLayout, MazeState, WaypointController};

/// Which embedding the nearest-state lookup compares in.
#[derive(Clone, Debug, PartialEq)]
pub enum StateMetric {
    Learned(DistanceEncoder),
    /// Raw state space.
    Euclidean,
}

impl StateMetric {
    pub fn embed(&self, s: &[f64]) -> Vec<f64> {
        match self {
            StateMetric::Learned(enc) => enc.embed(s),
            StateMetric::Euclidean => s.to_vec(),
        }
    }

    pub fn distance(&self, s: &[f64], s2: &[f64]) -> f64 {
        squared_distance(&self.embed(s), &self.embed(s2))
    }
}

/// Every demonstration state with its embedding under a fixed metric.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoIndex {
    metric: StateMetric,
    states: Vec<Vec<Vec<f64>>>,
    /// Flattened `(i, j, embedding)` in trajectory-major order.
    entries: Vec<(usize, usize, Vec<f64>)>,
}

impl DemoIndex {
    pub fn new(demos: &TrajectoryDataset, metric: StateMetric) -> Self {
        let states: Vec<Vec<Vec<f64>>> =
            demos.trajectories().iter().map(|t| (0..t.len()).map(|j| t.state_f64(j)).collect()).collect();
        let mut index = Self { metric, states, entries: Vec::new() };
        index.refresh();
        index
    }

    /// Recomputes every embedding, e.g. after the encoder changed.
    pub fn refresh(&mut self) {
        let mut entries = Vec::new();
        for (i, traj) in self.states.iter().enumerate() {
            for (j, s) in traj.iter().enumerate() {
                entries.push((i, j, self.metric.embed(s)));
            }
        }
        self.entries = entries;
    }

    pub fn set_metric(&mut self, metric: StateMetric) {
        self.metric = metric;
        self.refresh();
    }

    pub fn metric(&self) -> &StateMetric {
        &self.metric
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_trajectories(&self) -> usize {
        self.states.len()
    }

    pub fn trajectory_len(&self, i: usize) -> usize {
        self.states[i].len()
    }

    pub fn state(&self, i: usize, j: usize) -> &[f64] {
        &self.states[i][j]
    }

    /// Closest stored state by linear scan; ties go to the lowest `(i, j)`.
    pub fn nearest(&self, s: &[f64]) -> Result<(usize, usize)> {
        let q = self.metric.embed(s);
        let mut best: Option<(f64, usize, usize)> = None;
        for (i, j, e) in &self.entries {
            let d = squared_distance(&q, e);
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, *i, *j));
            }
        }
        best.map(|(_, i, j)| (i, j)).ok_or_else(|| Error::config("nearest-state lookup on an empty demo index"))
    }

    /// `s_{i, min(j + H - 1, T_i - 1)}`.
    pub fn lookahead(&self, i: usize, j: usize, horizon: usize) -> &[f64] {
        let traj = &self.states[i];
        assert!(j < traj.len(), "lookahead from ({i}, {j}) outside a trajectory of length {}", traj.len());
        &traj[lookahead_index(j, horizon, traj.len())]
    }
}

/// 0-based index `min(j + H - 1, T - 1)`; `H = 0` is treated as `H = 1`.
pub fn lookahead_index(j: usize, horizon: usize, len: usize) -> usize {
    (j + horizon.max(1) - 1).min(len - 1)
}

/// State the waypoint controller reaches after `H - 1` steps from `state`,
/// continuing from `controller`'s progress along its path.
pub fn oracle_lookahead(
    controller: &WaypointController,
    layout: &MazeLayout,
    state: MazeState,
    horizon: usize,
    env: &EnvConfig,
) -> MazeState {
    let mut ctrl = controller.clone();
    let mut s = state;
    for _ in 1..horizon {
        s = step(s, ctrl.act(s), layout, env);
    }
    s
}
