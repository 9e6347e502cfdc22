use super::trajectory::TrajectoryDataset;

/// A kept run of steps `start..start + len` in source trajectory `source`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub source: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Filtered {
    pub dataset: TrajectoryDataset,
    /// One entry per output trajectory, in output order.
    pub kept: Vec<Segment>,
}

/// Splits trajectories at every state inside the region and keeps the
/// maximal outside runs of at least `min_len` steps.
pub fn filter_region(
    dataset: &TrajectoryDataset,
    in_region: impl Fn(&[f32]) -> bool,
    min_len: usize,
) -> Filtered {
    let mut kept = Vec::new();
    let mut out = Vec::new();
    for (i, traj) in dataset.trajectories().iter().enumerate() {
        let mut run_start = None;
        for t in 0..=traj.len() {
            let inside = t == traj.len() || in_region(traj.state(t));
            match (inside, run_start) {
                (false, None) => run_start = Some(t),
                (true, Some(s)) => {
                    let len = t - s;
                    if len >= min_len.max(1) {
                        kept.push(Segment { source: i, start: s, len });
                        out.push(traj.segment(s, len));
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    let dataset = TrajectoryDataset::new(dataset.meta.clone(), out).expect("segments share dims");
    Filtered { dataset, kept }
}
