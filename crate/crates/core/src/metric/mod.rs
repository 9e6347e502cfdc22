//! Contrastive state distance, nearest-demo search and lookahead.

pub mod encoder;
pub mod index;

pub use encoder::{
    distance, euclidean_distance, fit_distance, infonce_loss, train_distance, window_pairs, DistanceConfig,
    DistanceEncoder,
};
pub use index::{lookahead_index, oracle_lookahead, DemoIndex, StateMetric};
