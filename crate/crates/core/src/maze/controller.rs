use serde::{Deserialize, Serialize};

use super::dynamics::{step, EnvConfig, MazeAction, MazeState};
use super::layout::{Cell, MazeLayout};
use super::planner::plan_waypoints;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub kp: f64,
    pub kd: f64,
    /// Distance at which the controller moves on to the next waypoint.
    pub advance_radius: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self { kp: 10.0, kd: 2.0, advance_radius: 0.25 }
    }
}

/// PD action toward `target`: `clip(kp (w - x) - kd v)`.
pub fn waypoint_policy(state: MazeState, target: [f64; 2], gains: &Gains) -> MazeAction {
    MazeAction::clipped(
        gains.kp * (target[0] - state.x) - gains.kd * state.vx,
        gains.kp * (target[1] - state.y) - gains.kd * state.vy,
    )
}

/// Follows a cell path centre to centre, replanning from the current cell
/// whenever the point leaves the cells around its current waypoint.
#[derive(Clone, Debug, PartialEq)]
pub struct WaypointController {
    layout: MazeLayout,
    path: Vec<Cell>,
    next: usize,
    gains: Gains,
    replans: usize,
}

impl WaypointController {
    pub fn new(layout: &MazeLayout, path: Vec<Cell>, gains: Gains) -> Self {
        assert!(!path.is_empty(), "waypoint path must be nonempty");
        Self { layout: layout.clone(), path, next: 0, gains, replans: 0 }
    }

    /// Plans from the state's cell to `goal`.
    pub fn plan(layout: &MazeLayout, state: MazeState, goal: Cell, gains: Gains) -> Result<Self> {
        let start = layout
            .cell_at(state.x, state.y)
            .ok_or_else(|| crate::Error::Planning(format!("state {state:?} is off the grid")))?;
        Ok(Self::new(layout, plan_waypoints(layout, start, goal)?, gains))
    }

    pub fn goal(&self) -> [f64; 2] {
        self.goal_cell().center()
    }

    pub fn goal_cell(&self) -> Cell {
        *self.path.last().expect("nonempty")
    }

    pub fn current_index(&self) -> usize {
        self.next
    }

    pub fn replans(&self) -> usize {
        self.replans
    }

    fn on_track(&self, cell: Cell) -> bool {
        let lo = self.next.saturating_sub(1);
        let hi = (self.next + 1).min(self.path.len() - 1);
        self.path[lo..=hi].contains(&cell)
    }

    pub fn act(&mut self, state: MazeState) -> MazeAction {
        if let Some(cell) = self.layout.cell_at(state.x, state.y) {
            if !self.on_track(cell) {
                if let Ok(path) = plan_waypoints(&self.layout, cell, self.goal_cell()) {
                    self.path = path;
                    self.next = 0;
                    self.replans += 1;
                }
            }
        }
        let here = self.layout.cell_at(state.x, state.y);
        while self.next + 1 < self.path.len()
            && (state.distance_to(self.path[self.next].center()) < self.gains.advance_radius
                || here == Some(self.path[self.next + 1]))
        {
            self.next += 1;
        }
        waypoint_policy(state, self.path[self.next].center(), &self.gains)
    }
}

/// Closed-loop rollout of the controller until the goal radius is reached.
/// Returns the visited states (including the first and last) or `None` on timeout.
pub fn rollout_to_goal(
    layout: &MazeLayout,
    start: MazeState,
    goal: Cell,
    gains: Gains,
    env: &EnvConfig,
) -> Result<Option<Vec<MazeState>>> {
    let mut ctrl = WaypointController::plan(layout, start, goal, gains)?;
    let mut s = start;
    let mut states = vec![s];
    for _ in 0..env.max_steps {
        if s.distance_to(goal.center()) < env.goal_radius {
            return Ok(Some(states));
        }
        s = step(s, ctrl.act(s), layout, env);
        states.push(s);
    }
    Ok(None)
}
