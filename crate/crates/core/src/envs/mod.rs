//! Toy goal-reaching tasks and their offline datasets.

pub mod behavior;
pub mod corruption;
pub mod dataset;
pub mod format;
pub mod maze;

pub use behavior::{behavior_policy_action, next_waypoint};
pub use corruption::{corrupt_action, CorruptionProfile, Variant};
pub use dataset::{
    behavior_success_rate, generate_dataset, generate_dataset_with, reacher, standardize_rewards, DatasetMetadata,
    GenerationStats, OfflineDataset, StartMode, Transition, ACT_DIM, GENERATOR_VERSION, OBS_DIM,
};
pub use format::{read_dataset, write_dataset};
pub use maze::{Maze, MazeSpec, MazeState, StepOutcome};
