//! Trajectory containers, window sampling, region filtering and persistence.

pub mod filter;
pub mod io;
pub mod norm;
pub mod sampling;
pub mod trajectory;

pub use filter::{filter_region, Filtered, Segment};
pub use io::{decode_dataset, encode_dataset, load_dataset, save_dataset, DatasetManifest, DATASET_VERSION};
pub use norm::StateNorm;
pub use sampling::{sample_subtrajectories, WindowSampler};
pub use trajectory::{DatasetMeta, DemoSet, GoalDescriptor, SubTrajectory, Trajectory, TrajectoryDataset};
