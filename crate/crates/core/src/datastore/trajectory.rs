use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One trajectory of `(state, action)` pairs, stored as `f32` so the on-disk
/// format round-trips exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    state_dim: usize,
    action_dim: usize,
    states: Vec<f32>,
    actions: Vec<f32>,
}

impl Trajectory {
    pub fn new(state_dim: usize, action_dim: usize, states: Vec<f32>, actions: Vec<f32>) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 {
            return Err(Error::config("trajectory dimensions must be positive"));
        }
        if !states.len().is_multiple_of(state_dim) || !actions.len().is_multiple_of(action_dim) {
            return Err(Error::config("trajectory arrays are not whole rows"));
        }
        let t = states.len() / state_dim;
        if t == 0 || actions.len() / action_dim != t {
            return Err(Error::config(format!(
                "trajectory needs equal, nonzero state/action counts ({} vs {})",
                t,
                actions.len() / action_dim
            )));
        }
        if !states.iter().chain(&actions).all(|v| v.is_finite()) {
            return Err(Error::config("trajectory contains non-finite values"));
        }
        Ok(Self { state_dim, action_dim, states, actions })
    }

    /// Builds from `f64` rows, rounding to `f32`.
    pub fn from_rows(states: &[Vec<f64>], actions: &[Vec<f64>]) -> Result<Self> {
        let sd = states.first().map_or(0, |s| s.len());
        let ad = actions.first().map_or(0, |a| a.len());
        let flat_s = states.iter().flat_map(|s| s.iter().map(|&v| v as f32)).collect();
        let flat_a = actions.iter().flat_map(|a| a.iter().map(|&v| v as f32)).collect();
        Self::new(sd, ad, flat_s, flat_a)
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state(&self, t: usize) -> &[f32] {
        &self.states[t * self.state_dim..(t + 1) * self.state_dim]
    }

    pub fn action(&self, t: usize) -> &[f32] {
        &self.actions[t * self.action_dim..(t + 1) * self.action_dim]
    }

    pub fn state_f64(&self, t: usize) -> Vec<f64> {
        self.state(t).iter().map(|&v| v as f64).collect()
    }

    pub fn action_f64(&self, t: usize) -> Vec<f64> {
        self.action(t).iter().map(|&v| v as f64).collect()
    }

    pub fn states_raw(&self) -> &[f32] {
        &self.states
    }

    pub fn actions_raw(&self) -> &[f32] {
        &self.actions
    }

    /// Steps `start..start + len` as a new trajectory.
    pub fn segment(&self, start: usize, len: usize) -> Trajectory {
        let (sd, ad) = (self.state_dim, self.action_dim);
        Trajectory {
            state_dim: sd,
            action_dim: ad,
            states: self.states[start * sd..(start + len) * sd].to_vec(),
            actions: self.actions[start * ad..(start + len) * ad].to_vec(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub state_dim: usize,
    pub action_dim: usize,
    pub seed: u64,
    /// Hex digest of the generator configuration.
    pub config_hash: String,
    /// Free-form descriptor, e.g. the goal of a demo set.
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub meta: DatasetMeta,
    trajectories: Vec<Trajectory>,
}

impl TrajectoryDataset {
    pub fn new(meta: DatasetMeta, trajectories: Vec<Trajectory>) -> Result<Self> {
        for (i, t) in trajectories.iter().enumerate() {
            if t.state_dim() != meta.state_dim || t.action_dim() != meta.action_dim {
                return Err(Error::config(format!(
                    "trajectory {i} has dims ({}, {}), dataset declares ({}, {})",
                    t.state_dim(),
                    t.action_dim(),
                    meta.state_dim,
                    meta.action_dim
                )));
            }
        }
        Ok(Self { meta, trajectories })
    }

    pub fn empty(meta: DatasetMeta) -> Self {
        Self { meta, trajectories: Vec::new() }
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn iter_states(&self) -> impl Iterator<Item = &[f32]> {
        self.trajectories.iter().flat_map(|t| (0..t.len()).map(move |i| t.state(i)))
    }
}

/// `H` consecutive steps cut from a dataset trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct SubTrajectory {
    pub trajectory: usize,
    pub start: usize,
    /// `H x state_dim`, row-major.
    pub states: Vec<f64>,
    /// `H x action_dim`, row-major.
    pub actions: Vec<f64>,
    pub horizon: usize,
}

impl SubTrajectory {
    pub fn from_trajectory(traj: &Trajectory, trajectory: usize, start: usize, horizon: usize) -> Self {
        let end = start + horizon;
        assert!(end <= traj.len(), "window exceeds trajectory");
        let (sd, ad) = (traj.state_dim(), traj.action_dim());
        Self {
            trajectory,
            start,
            states: traj.states_raw()[start * sd..end * sd].iter().map(|&v| v as f64).collect(),
            actions: traj.actions_raw()[start * ad..end * ad].iter().map(|&v| v as f64).collect(),
            horizon,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.states.len() / self.horizon
    }

    pub fn action_dim(&self) -> usize {
        self.actions.len() / self.horizon
    }

    pub fn state(&self, t: usize) -> &[f64] {
        let sd = self.state_dim();
        &self.states[t * sd..(t + 1) * sd]
    }

    pub fn action(&self, t: usize) -> &[f64] {
        let ad = self.action_dim();
        &self.actions[t * ad..(t + 1) * ad]
    }

    pub fn first_state(&self) -> &[f64] {
        self.state(0)
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.horizon - 1)
    }
}

/// Where a demo set is headed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalDescriptor {
    pub region: Option<crate::maze::Region>,
    pub cell: crate::maze::Cell,
    pub position: [f64; 2],
}

/// Downstream demonstrations; at least one trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct DemoSet {
    pub dataset: TrajectoryDataset,
    pub goal: GoalDescriptor,
}

impl DemoSet {
    pub fn new(mut dataset: TrajectoryDataset, goal: GoalDescriptor) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::config("a demo set needs at least one trajectory"));
        }
        dataset.meta.extra = serde_json::json!({ "goal": goal });
        Ok(Self { dataset, goal })
    }

    /// Recovers the goal from a dataset written by [`DemoSet::new`].
    pub fn from_dataset(dataset: TrajectoryDataset) -> Result<Self> {
        let goal: GoalDescriptor = serde_json::from_value(dataset.meta.extra["goal"].clone())
            .map_err(|e| Error::malformed(format!("demo set goal descriptor: {e}")))?;
        Self::new(dataset, goal)
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        self.dataset.trajectories()
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_invariants() {
        assert!(Trajectory::new(2, 1, vec![0.0; 4], vec![0.0; 2]).is_ok());
        assert!(Trajectory::new(2, 1, vec![0.0; 4], vec![0.0; 3]).is_err());
        assert!(Trajectory::new(2, 1, vec![], vec![]).is_err());
        assert!(Trajectory::new(2, 1, vec![0.0, f32::NAN], vec![0.0]).is_err());
    }

    #[test]
    fn dataset_rejects_mixed_dims() {
        let meta = DatasetMeta { state_dim: 2, action_dim: 1, ..Default::default() };
        let t = Trajectory::new(3, 1, vec![0.0; 3], vec![0.0]).unwrap();
        assert!(TrajectoryDataset::new(meta, vec![t]).is_err());
    }

    #[test]
    fn sub_trajectory_is_contiguous_copy() {
        let t = Trajectory::new(1, 1, (0..6).map(|v| v as f32).collect(), (10..16).map(|v| v as f32).collect())
            .unwrap();
        let w = SubTrajectory::from_trajectory(&t, 0, 2, 3);
        assert_eq!(w.states, vec![2.0, 3.0, 4.0]);
        assert_eq!(w.actions, vec![12.0, 13.0, 14.0]);
        assert_eq!(w.last_state(), &[4.0]);
    }
}
