use std::path::{Path, PathBuf};

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, ValueEnum};
use dasco_core::agent::train::REACHER_SUCCESS;
use dasco_core::envs::{
    generate_dataset_with, reacher, standardize_rewards, write_dataset, GenerationStats, Maze, StartMode, Variant,
    GENERATOR_VERSION,
};
use serde::Serialize;

use crate::config::write_json;
use crate::CmdResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartArg {
    /// Any free cell other than the goal.
    Anywhere,
    /// The maze's start cells only.
    StartRegion,
}

pub fn variant_parser() -> impl clap::builder::TypedValueParser<Value = Variant> {
    PossibleValuesParser::new(["clean", "noisy", "biased"]).map(|s| s.parse::<Variant>().expect("listed variant"))
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// toy-open, toy-medium, toy-large or toy-reacher.
    #[arg(long, default_value = "toy-medium")]
    pub env: String,
    #[arg(long, value_parser = variant_parser())]
    pub variant: Variant,
    #[arg(long, default_value_t = 500)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where episodes start.
    #[arg(long, value_enum, default_value_t = StartArg::Anywhere)]
    pub start: StartArg,
    /// Divide rewards by the best-minus-worst episode return.
    #[arg(long)]
    pub standardize_rewards: bool,
    /// Dataset file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest path; defaults to `<out>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct GenDataConfig<'a> {
    command: &'static str,
    env: &'a str,
    variant: Variant,
    episodes: usize,
    seed: u64,
    start: StartArg,
    standardize_rewards: bool,
    generator_version: u32,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    config: GenDataConfig<'a>,
    dataset: String,
    stats: Option<GenerationStats>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn run(a: GenDataArgs) -> CmdResult {
    let manifest = a.manifest.clone().unwrap_or_else(|| manifest_path(&a.out));
    let mut m = Manifest {
        config: GenDataConfig {
            command: "gen-data",
            env: &a.env,
            variant: a.variant,
            episodes: a.episodes,
            seed: a.seed,
            start: a.start,
            standardize_rewards: a.standardize_rewards,
            generator_version: GENERATOR_VERSION,
        },
        dataset: a.out.display().to_string(),
        stats: None,
    };
    write_json(&manifest, &m)?;

    let (ds, stats) = if a.env == reacher::NAME {
        let ds = reacher::generate(a.variant, a.episodes, a.seed)?;
        let hits = ds.rewards.iter().filter(|&&r| r >= REACHER_SUCCESS).count();
        let stats = GenerationStats {
            episodes: a.episodes,
            transitions: ds.len(),
            success_rate: hits as f64 / a.episodes as f64,
            mean_episode_length: 1.0,
        };
        (ds, stats)
    } else {
        let maze = Maze::named(&a.env)?;
        let start = match a.start {
            StartArg::Anywhere => StartMode::Anywhere,
            StartArg::StartRegion => StartMode::StartRegion,
        };
        generate_dataset_with(&maze, a.variant, a.episodes, a.seed, start)?
    };
    let ds = if a.standardize_rewards {
        standardize_rewards(ds)?
    } else {
        ds
    };
    write_dataset(&ds, &a.out)?;
    log::info!(
        "wrote {} transitions from {} episodes to {} (behavior success {:.3})",
        stats.transitions,
        stats.episodes,
        a.out.display(),
        stats.success_rate
    );
    m.stats = Some(stats);
    write_json(&manifest, &m)
}
