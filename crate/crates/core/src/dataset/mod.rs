//! Parameter grids, trajectory sets and supervised training pairs.

mod grid;
mod set;
mod supervised;

pub use grid::{sample_uniform, train_test_grids, Axis, Exclusion, ParamGrid};
pub use set::{load_trajectories, save_trajectories, TrajectorySet};
pub use supervised::{
    build_supervised, build_supervised_with, finite_differences, ColumnTransform, Normalization, SupervisedOptions,
    SupervisedSet, BURN_IN_FRACTION,
};
