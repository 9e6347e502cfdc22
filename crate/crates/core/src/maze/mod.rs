//! Continuous point maze, waypoint oracle and data generation.

pub mod controller;
pub mod datagen;
pub mod dynamics;
pub mod layout;
pub mod planner;

pub use controller::{rollout_to_goal, waypoint_policy, Gains, WaypointController};
pub use datagen::{generate_demos, generate_offline_data, sample_start_cells, stream_rng, OfflineDataConfig};
pub use dynamics::{step, EnvConfig, MazeAction, MazeState, ACTION_DIM, STATE_DIM};
pub use layout::{Cell, MazeLayout, Region, DEFAULT_LAYOUT};
pub use planner::plan_waypoints;
