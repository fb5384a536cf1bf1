//! Actor-critic learner regularized by a discriminator and an auxiliary
//! generator, plus a behavior-cloning baseline.

pub mod config;
pub mod networks;
pub mod train;
pub mod updates;

pub use config::{Ablations, AgentConfig, InstanceNoiseConfig, InstanceNoiseSchedule};
pub use networks::{mean_action, policy_sample, tanh_gaussian_log_prob, AgentNetworks, PolicySample};
pub use train::{
    evaluate_policy, evaluate_with, load_networks, load_policy, save_checkpoint, train, train_bc, Algo,
    CheckpointConfig, EvalEnv, EvalReport, MetricsRow, TrainOutcome,
};
pub use updates::{
    aux_generator_update, critic_targets, critic_update, discriminator_update, policy_update, q_weight, Batch,
    CriticStats, DiscStats, PolicyStats,
};
