//! One- and two-dimensional dual-generator GAN on static mixture data.
//!
//! A primary generator is trained to fool the discriminator while pushing a
//! secondary objective; an auxiliary generator only fools the discriminator.
//! The discriminator is shown the two generators' equal mixture as fakes, so
//! the mixture can match the data while the primary concentrates on the best
//! in-support region.

pub mod data;
pub mod metrics;
pub mod train;

pub use data::{make_bimodal_data, Objective, StaticDataSpec};
pub use metrics::{
    eval_support_metrics, histogram_jsd, in_support_rate, Binning, SupportMetrics, HIST_BINS, SUPPORT_K,
};
pub use train::{generate, train_dual_gan, GanAbort, GanConfig, GanMetricsRow, GanRun};
