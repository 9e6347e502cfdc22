use rand::Rng;

use super::trajectory::{SubTrajectory, TrajectoryDataset};
use crate::error::{Error, Result};

/// Uniform sampler over every `(trajectory, start)` window of length `H`.
///
/// Trajectories shorter than `H` contribute no windows. Draws are with
/// replacement.
#[derive(Clone, Debug)]
pub struct WindowSampler {
    horizon: usize,
    /// `(trajectory index, cumulative window count after it)`
    cumulative: Vec<(usize, usize)>,
}

impl WindowSampler {
    pub fn new(dataset: &TrajectoryDataset, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::config("window length must be positive"));
        }
        let mut total = 0;
        let mut cumulative = Vec::new();
        for (i, t) in dataset.trajectories().iter().enumerate() {
            if t.len() >= horizon {
                total += t.len() - horizon + 1;
                cumulative.push((i, total));
            }
        }
        if total == 0 {
            return Err(Error::EmptySupport { horizon });
        }
        Ok(Self { horizon, cumulative })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_windows(&self) -> usize {
        self.cumulative.last().map_or(0, |c| c.1)
    }

    /// Maps a flat window number to `(trajectory, start)`.
    pub fn locate(&self, k: usize) -> (usize, usize) {
        let pos = self.cumulative.partition_point(|&(_, cum)| cum <= k);
        let (traj, cum) = self.cumulative[pos];
        let before = if pos == 0 { 0 } else { self.cumulative[pos - 1].1 };
        debug_assert!(k < cum);
        (traj, k - before)
    }

    pub fn sample_positions<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<(usize, usize)> {
        let n = self.num_windows();
        (0..batch).map(|_| self.locate(rng.random_range(0..n))).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, dataset: &TrajectoryDataset, batch: usize, rng: &mut R) -> Vec<SubTrajectory> {
        self.sample_positions(batch, rng)
            .into_iter()
            .map(|(t, s)| SubTrajectory::from_trajectory(&dataset.trajectories()[t], t, s, self.horizon))
            .collect()
    }

    /// Every window exactly once, in order.
    pub fn all(&self, dataset: &TrajectoryDataset) -> Vec<SubTrajectory> {
        (0..self.num_windows())
            .map(|k| {
                let (t, s) = self.locate(k);
                SubTrajectory::from_trajectory(&dataset.trajectories()[t], t, s, self.horizon)
            })
            .collect()
    }
}

pub fn sample_subtrajectories(
    dataset: &TrajectoryDataset,
    horizon: usize,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<SubTrajectory>> {
    Ok(WindowSampler::new(dataset, horizon)?.sample(dataset, batch_size, rng))
}
