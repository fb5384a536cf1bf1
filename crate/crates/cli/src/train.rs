use std::path::PathBuf;

use clap::{Args, ValueEnum};
use dasco_core::agent::train::{eval_seed, read_checkpoint_config};
use dasco_core::agent::{evaluate_policy, load_policy, train, train_bc, AgentConfig, Algo, EvalEnv};
use dasco_core::envs::read_dataset;
use serde::Serialize;

use crate::config::{layered, write_json};
use crate::{CmdResult, Failure};

pub const RUN_CONFIG_FILE: &str = "run_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Dasco,
    Bc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Toy,
    Maze,
    Dense,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset file written by gen-data.
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluation environment; defaults to the dataset's.
    #[arg(long)]
    pub env: Option<String>,
    /// Output directory for metrics.csv, checkpoints and the run config.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = PresetArg::Toy)]
    pub preset: PresetArg,
    /// JSON object overriding preset fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AlgoArg::Dasco)]
    pub algo: AlgoArg,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Divisor of the value term in the policy loss.
    #[arg(long)]
    pub w: Option<f32>,
    #[arg(long)]
    pub no_aux_generator: bool,
    #[arg(long)]
    pub no_q_weight: bool,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
}

#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    command: &'static str,
    data: String,
    env: &'a str,
    algo: Algo,
    seed: u64,
    agent: &'a AgentConfig,
}

/// Preset, then config file, then flags.
pub fn resolve_agent_config(a: &TrainArgs) -> Result<AgentConfig, Failure> {
    let preset = match a.preset {
        PresetArg::Toy => AgentConfig::toy(),
        PresetArg::Maze => AgentConfig::maze(),
        PresetArg::Dense => AgentConfig::dense(),
    };
    let mut cfg = layered(&preset, a.config.as_deref())?;
    if let Some(s) = a.steps {
        cfg.total_steps = s;
    }
    if let Some(w) = a.w {
        cfg.w = w;
    }
    if a.no_aux_generator {
        cfg.ablations.use_aux_generator = false;
    }
    if a.no_q_weight {
        cfg.ablations.use_q_weight = false;
    }
    if let Some(i) = a.eval_interval {
        cfg.eval_interval = i;
    }
    if let Some(e) = a.eval_episodes {
        cfg.eval_episodes = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run_train(a: TrainArgs) -> CmdResult {
    let cfg = resolve_agent_config(&a)?;
    let ds = read_dataset(&a.data)?;
    let env_name = a.env.clone().unwrap_or_else(|| ds.metadata.env.clone());
    let env = EvalEnv::named(&env_name)?;
    let algo = match a.algo {
        AlgoArg::Dasco => Algo::Dasco,
        AlgoArg::Bc => Algo::Bc,
    };
    write_json(
        &a.out.join(RUN_CONFIG_FILE),
        &RunConfig {
            command: "train",
            data: a.data.display().to_string(),
            env: &env_name,
            algo,
            seed: a.seed,
            agent: &cfg,
        },
    )?;
    log::info!(
        "training {algo:?} on {} ({} transitions) for {} steps",
        a.data.display(),
        ds.len(),
        cfg.total_steps
    );
    let last = match algo {
        Algo::Dasco => train(&ds, &env, &cfg, a.seed, Some(&a.out))?.rows.pop(),
        Algo::Bc => train_bc(&ds, &env, &cfg, a.seed, Some(&a.out))?.1.pop(),
    };
    if let Some(row) = last {
        log::info!(
            "final eval: return {:.2}, success {:.2}",
            row.eval_return,
            row.eval_success
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint directory written by train.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Defaults to the environment recorded in the checkpoint.
    #[arg(long)]
    pub env: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub episodes: usize,
    /// Seed of the start states; defaults to the one used during training.
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn run_eval(a: EvalArgs) -> CmdResult {
    let meta = read_checkpoint_config(&a.checkpoint)?;
    let (_, policy) = load_policy(&a.checkpoint)?;
    let env = EvalEnv::named(a.env.as_deref().unwrap_or(&meta.env))?;
    if a.episodes == 0 {
        return Err(Failure::Usage("episodes must be positive".into()));
    }
    let report = evaluate_policy(
        &policy,
        &env,
        a.episodes,
        a.seed.unwrap_or_else(|| eval_seed(meta.seed)),
    )?;
    println!("{}", serde_json::to_string(&report).unwrap());
    Ok(())
}
