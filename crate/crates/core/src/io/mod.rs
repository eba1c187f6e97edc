//! File formats: model files, trajectory files, logs and DOT export.

mod dot;
mod logs;
mod model;
mod trajectories;

pub use dot::axis_trees_to_dot;
pub use logs::{write_epoch_csv, write_flags_csv, write_growth_log};
pub use model::{ModelFile, ModelMetadata, FORMAT_VERSION};
pub use trajectories::{read_trajectories, read_trajectory_file, write_trajectories, write_trajectory_file};
