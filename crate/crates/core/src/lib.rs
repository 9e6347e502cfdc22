//! Few-shot imitation with skill transition models on a native point maze.

pub mod error;
pub mod imitator;
pub mod datastore;
pub mod maze;
pub mod metric;
pub mod numerics;
pub mod pipeline;
pub mod skillmodel;

pub use error::{Error, Result};
