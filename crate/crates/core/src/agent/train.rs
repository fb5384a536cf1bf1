use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AgentConfig, InstanceNoiseSchedule};
use super::networks::{mean_action, standard_normal, AgentNetworks};
use super::updates::{aux_generator_update, critic_update, discriminator_update, policy_update, Batch, DiscStats};
use crate::envs::{reacher, Maze, OfflineDataset, ACT_DIM, OBS_DIM};
use crate::nn::{checkpoint, Activation, AdamState, Graph, Mlp, Mode, Tensor};
use crate::{Error, Result};

/// One evaluation record. Fields that do not apply to a run are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub step: usize,
    pub q1_loss: Option<f32>,
    pub q2_loss: Option<f32>,
    pub policy_loss: Option<f32>,
    pub aux_loss: Option<f32>,
    pub disc_loss: Option<f32>,
    pub mean_weight: Option<f32>,
    #[serde(rename = "mean_D_real")]
    pub mean_d_real: Option<f32>,
    #[serde(rename = "mean_D_fake")]
    pub mean_d_fake: Option<f32>,
    pub eval_return: f64,
    pub eval_success: f64,
}

/// Environment used for evaluation rollouts.
#[derive(Debug, Clone)]
pub enum EvalEnv {
    Maze(Maze),
    Reacher,
}

impl EvalEnv {
    pub fn named(name: &str) -> Result<Self> {
        if name == reacher::NAME {
            Ok(EvalEnv::Reacher)
        } else {
            Ok(EvalEnv::Maze(Maze::named(name)?))
        }
    }

    pub fn name(&self) -> &str {
        match self {
            EvalEnv::Maze(m) => m.name(),
            EvalEnv::Reacher => reacher::NAME,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_return: f64,
    pub success_rate: f64,
    pub episodes: usize,
}

/// Reacher rollouts count as successes at or above this reward.
pub const REACHER_SUCCESS: f32 = 0.9;

/// Rolls out `act` from the environment's start distribution. Maze returns
/// use the shifted per-step reward (-1 per step, 0 on reaching the goal).
pub fn evaluate_with<F>(env: &EvalEnv, episodes: usize, seed: u64, mut act: F) -> Result<EvalReport>
where
    F: FnMut(&[f32; OBS_DIM], &crate::envs::MazeState) -> Result<[f32; ACT_DIM]>,
{
    if episodes == 0 {
        return Err(Error::Contract("episodes must be at least 1".into()));
    }
    let mut total = 0.0;
    let mut successes = 0;
    for ep in 0..episodes {
        let mut rng = crate::envs::dataset::episode_rng(seed, ep);
        match env {
            EvalEnv::Maze(maze) => {
                let mut state = maze.reset(&mut rng);
                loop {
                    let a = act(&maze.observe(&state), &state)?;
                    let out = maze.step(state, a);
                    total += (out.reward - 1.0) as f64;
                    state = out.next;
                    if out.done() {
                        successes += out.reached_goal as usize;
                        break;
                    }
                }
            }
            EvalEnv::Reacher => {
                let obs = reacher::sample_observation(&mut rng);
                let dummy = crate::envs::MazeState {
                    pos: [obs[0], obs[1]],
                    steps: 0,
                };
                let a = act(&obs, &dummy)?;
                let r = reacher::reward(&obs, &a);
                total += r as f64;
                successes += (r >= REACHER_SUCCESS) as usize;
            }
        }
    }
    Ok(EvalReport {
        mean_return: total / episodes as f64,
        success_rate: successes as f64 / episodes as f64,
        episodes,
    })
}

/// Evaluates the deterministic action `tanh(mean)` of a policy network.
pub fn evaluate_policy(policy: &Mlp, env: &EvalEnv, episodes: usize, seed: u64) -> Result<EvalReport> {
    if policy.input_dim() != OBS_DIM || policy.output_dim() != 2 * ACT_DIM {
        return Err(Error::Contract(format!(
            "policy maps {} -> {}, environment needs {OBS_DIM} -> {}",
            policy.input_dim(),
            policy.output_dim(),
            2 * ACT_DIM
        )));
    }
    evaluate_with(env, episodes, seed, |obs, _| {
        let a = mean_action(policy, &Tensor::matrix(1, OBS_DIM, obs.to_vec())?, ACT_DIM)?;
        Ok([a.data()[0], a.data()[1]])
    })
}

/// Which learner produced a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Dasco,
    Bc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointConfig {
    pub algo: Algo,
    pub env: String,
    pub seed: u64,
    pub step: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub agent: AgentConfig,
}

pub const CONFIG_FILE: &str = "config.json";
pub const NETWORK_FILES: [&str; 7] = [
    "qf1",
    "qf2",
    "target_qf1",
    "target_qf2",
    "policy",
    "aux_generator",
    "discriminator",
];

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).unwrap();
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn net_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.nnc"))
}

pub fn save_checkpoint(dir: &Path, nets: &AgentNetworks, meta: &CheckpointConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let all = [
        &nets.qf1,
        &nets.qf2,
        &nets.target_qf1,
        &nets.target_qf2,
        &nets.policy,
        &nets.aux_generator,
        &nets.discriminator,
    ];
    for (name, net) in NETWORK_FILES.iter().zip(all) {
        checkpoint::save_mlp(&net_path(dir, name), net)?;
    }
    write_json(&dir.join(CONFIG_FILE), meta)
}

pub fn read_checkpoint_config(dir: &Path) -> Result<CheckpointConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(CONFIG_FILE, e.to_string()))
}

pub fn load_policy(dir: &Path) -> Result<(CheckpointConfig, Mlp)> {
    let meta = read_checkpoint_config(dir)?;
    let policy = checkpoint::load_mlp(&net_path(dir, "policy"), Activation::Relu)?;
    Ok((meta, policy))
}

/// Reloads every network of a full checkpoint with fresh optimizer state.
pub fn load_networks(dir: &Path) -> Result<(CheckpointConfig, AgentNetworks)> {
    let meta = read_checkpoint_config(dir)?;
    let load = |name: &str| checkpoint::load_mlp(&net_path(dir, name), Activation::Relu);
    let mut nets = AgentNetworks::from_parts(
        meta.obs_dim,
        meta.act_dim,
        &meta.agent,
        load("qf1")?,
        load("qf2")?,
        load("policy")?,
        load("aux_generator")?,
        load("discriminator")?,
    );
    nets.target_qf1 = load("target_qf1")?;
    nets.target_qf2 = load("target_qf2")?;
    Ok((meta, nets))
}

pub const METRICS_FILE: &str = "metrics.csv";

/// Appends rows as they are produced so an aborted run keeps its history.
struct MetricsSink {
    writer: Option<csv::Writer<std::fs::File>>,
    path: PathBuf,
}

impl MetricsSink {
    fn new(dir: Option<&Path>) -> Result<Self> {
        let Some(dir) = dir else {
            return Ok(Self {
                writer: None,
                path: PathBuf::new(),
            });
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(METRICS_FILE);
        let writer =
            csv::Writer::from_path(&path).map_err(|e| Error::io(&path, std::io::Error::other(e.to_string())))?;
        Ok(Self {
            writer: Some(writer),
            path,
        })
    }

    fn push(&mut self, row: &MetricsRow) -> Result<()> {
        if let Some(w) = &mut self.writer {
            let io = |e: csv::Error| Error::io(&self.path, std::io::Error::other(e.to_string()));
            w.serialize(row).map_err(io)?;
            w.flush().map_err(|e| Error::io(&self.path, e))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub networks: AgentNetworks,
    pub rows: Vec<MetricsRow>,
}

/// Seed of the evaluation start states, fixed per training seed so every
/// evaluation of a run sees the same episodes.
pub fn eval_seed(seed: u64) -> u64 {
    seed ^ 0x5EED_E7A1
}

/// Runs the full learner. When `out_dir` is given, the initial networks,
/// every evaluated snapshot and the metrics CSV are written there; a numeric
/// failure returns the error and leaves the last snapshot on disk.
pub fn train(
    ds: &OfflineDataset,
    env: &EvalEnv,
    cfg: &AgentConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ds.validate()?;
    if ds.is_empty() {
        return Err(Error::Contract("dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = AgentNetworks::new(OBS_DIM, ACT_DIM, cfg, &mut rng)?;
    let schedule = InstanceNoiseSchedule::new(&cfg.instance_noise, cfg.total_steps);
    let mut meta = CheckpointConfig {
        algo: Algo::Dasco,
        env: env.name().to_string(),
        seed,
        step: 0,
        obs_dim: OBS_DIM,
        act_dim: ACT_DIM,
        agent: cfg.clone(),
    };
    if let Some(dir) = out_dir {
        save_checkpoint(dir, &nets, &meta)?;
    }
    let mut sink = MetricsSink::new(out_dir)?;
    let mut rows = Vec::new();

    for step in 1..=cfg.total_steps {
        let batch = Batch::sample(ds, cfg.batch_size, &mut rng)?;
        let critic = critic_update(&batch, &mut nets, cfg, &mut rng)?;
        let policy = policy_update(&batch, &mut nets, cfg, &mut rng)?;
        let aux_loss = if cfg.ablations.use_aux_generator {
            Some(aux_generator_update(&batch, &mut nets, cfg, &mut rng)?)
        } else {
            None
        };
        let sigma = schedule.sigma(step - 1);
        let mut disc = DiscStats {
            loss: 0.0,
            mean_d_real: 0.0,
            mean_d_fake: 0.0,
        };
        for _ in 0..cfg.disc_steps_per_gen_step {
            disc = discriminator_update(&batch, &mut nets, cfg, sigma, &mut rng)?;
        }

        if step % cfg.eval_interval == 0 || step == cfg.total_steps {
            let report = evaluate_policy(&nets.policy, env, cfg.eval_episodes, eval_seed(seed))?;
            let row = MetricsRow {
                step,
                q1_loss: Some(critic.q1_loss),
                q2_loss: Some(critic.q2_loss),
                policy_loss: Some(policy.loss),
                aux_loss,
                disc_loss: Some(disc.loss),
                mean_weight: Some(policy.mean_weight),
                mean_d_real: Some(disc.mean_d_real),
                mean_d_fake: Some(disc.mean_d_fake),
                eval_return: report.mean_return,
                eval_success: report.success_rate,
            };
            log::info!(
                "step {step}: q1 {:.4} policy {:.4} disc {:.4} weight {:.3} success {:.2}",
                critic.q1_loss,
                policy.loss,
                disc.loss,
                policy.mean_weight,
                report.success_rate
            );
            sink.push(&row)?;
            rows.push(row);
            if let Some(dir) = out_dir {
                meta.step = step;
                save_checkpoint(dir, &nets, &meta)?;
            }
        }
    }
    Ok(TrainOutcome { networks: nets, rows })
}

/// Behavior cloning: regresses `tanh(mean)` of the policy head onto dataset
/// actions. Checkpoints contain the policy and `config.json` only.
pub fn train_bc(
    ds: &OfflineDataset,
    env: &EvalEnv,
    cfg: &AgentConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<(Mlp, Vec<MetricsRow>)> {
    cfg.validate()?;
    ds.validate()?;
    if ds.is_empty() {
        return Err(Error::Contract("dataset is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![OBS_DIM];
    sizes.extend_from_slice(&cfg.policy_hidden);
    sizes.push(2 * ACT_DIM);
    let mut policy = Mlp::new(&sizes, Activation::Relu, &mut rng)?;
    let mut opt = AdamState::new(&policy.params, cfg.adam());
    let mut meta = CheckpointConfig {
        algo: Algo::Bc,
        env: env.name().to_string(),
        seed,
        step: 0,
        obs_dim: OBS_DIM,
        act_dim: ACT_DIM,
        agent: cfg.clone(),
    };
    let save = |dir: &Path, policy: &Mlp, meta: &CheckpointConfig| -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        checkpoint::save_mlp(&net_path(dir, "policy"), policy)?;
        write_json(&dir.join(CONFIG_FILE), meta)
    };
    if let Some(dir) = out_dir {
        save(dir, &policy, &meta)?;
    }
    let mut sink = MetricsSink::new(out_dir)?;
    let mut rows = Vec::new();
    for step in 1..=cfg.total_steps {
        let batch = Batch::sample(ds, cfg.batch_size, &mut rng)?;
        let mut g = Graph::new();
        let obs = g.constant(batch.obs.clone());
        let (head, vars) = policy.forward(&mut g, obs, Mode::Train)?;
        let mean = g.slice_cols(head, 0, ACT_DIM);
        let act = g.tanh(mean);
        let target = g.constant(batch.actions.clone());
        let loss = g.mse(act, target);
        let grads = g.backward(loss)?;
        let loss_value = g.value(loss).item()?;
        grads.assign(&vars.0, &mut policy.params)?;
        opt.step(&mut policy.params)?;

        if step % cfg.eval_interval == 0 || step == cfg.total_steps {
            let report = evaluate_policy(&policy, env, cfg.eval_episodes, eval_seed(seed))?;
            let row = MetricsRow {
                step,
                q1_loss: None,
                q2_loss: None,
                policy_loss: Some(loss_value),
                aux_loss: None,
                disc_loss: None,
                mean_weight: None,
                mean_d_real: None,
                mean_d_fake: None,
                eval_return: report.mean_return,
                eval_success: report.success_rate,
            };
            sink.push(&row)?;
            rows.push(row);
            if let Some(dir) = out_dir {
                meta.step = step;
                save(dir, &policy, &meta)?;
            }
        }
    }
    Ok((policy, rows))
}

/// Draws an action from the policy's Gaussian instead of its mean.
pub fn stochastic_action<R: Rng + ?Sized>(
    policy: &Mlp,
    obs: &[f32],
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<[f32; ACT_DIM]> {
    let x = Tensor::matrix(1, OBS_DIM, obs.to_vec())?;
    let mut g = Graph::new();
    let input = g.constant(x);
    let (head, _) = policy.forward(&mut g, input, Mode::Frozen)?;
    let eps = g.constant(standard_normal(1, ACT_DIM, rng));
    let s = super::networks::policy_sample(&mut g, head, ACT_DIM, eps, cfg);
    let a = g.value(s.action).data();
    Ok([a[0], a[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{behavior_policy_action, generate_dataset, Variant};

    fn quick_cfg(steps: usize) -> AgentConfig {
        AgentConfig {
            q_hidden: vec![8],
            policy_hidden: vec![8],
            disc_hidden: vec![8],
            aux_hidden: vec![8],
            batch_size: 16,
            total_steps: steps,
            eval_interval: 5,
            eval_episodes: 2,
            ..AgentConfig::toy()
        }
    }

    fn data() -> OfflineDataset {
        let m = Maze::named("toy-open").unwrap();
        generate_dataset(&m, Variant::Noisy, 5, 3).unwrap().0
    }

    #[test]
    fn zero_steps_checkpoint_is_initialization() {
        let ds = data();
        let env = EvalEnv::named("toy-open").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_cfg(0);
        let out = train(&ds, &env, &cfg, 9, Some(dir.path())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = AgentNetworks::new(OBS_DIM, ACT_DIM, &cfg, &mut rng).unwrap();
        assert_eq!(out.networks.policy, init.policy);
        let (_, loaded) = load_networks(dir.path()).unwrap();
        assert_eq!(loaded.qf1, init.qf1);
        assert_eq!(loaded.target_qf2, init.qf2);
        assert!(out.rows.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let ds = data();
        let env = EvalEnv::named("toy-open").unwrap();
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        train(&ds, &env, &quick_cfg(10), 1, Some(a.path())).unwrap();
        train(&ds, &env, &quick_cfg(10), 1, Some(b.path())).unwrap();
        for f in ["metrics.csv", "policy.nnc", "discriminator.nnc", "config.json"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
        let csv = std::fs::read_to_string(a.path().join("metrics.csv")).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "step,q1_loss,q2_loss,policy_loss,aux_loss,disc_loss,mean_weight,mean_D_real,mean_D_fake,eval_return,eval_success"
        );
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn no_aux_run_leaves_aux_column_empty() {
        let ds = data();
        let env = EvalEnv::named("toy-open").unwrap();
        let mut cfg = quick_cfg(5);
        cfg.ablations.use_aux_generator = false;
        let out = train(&ds, &env, &cfg, 2, None).unwrap();
        assert_eq!(out.rows[0].aux_loss, None);
    }

    #[test]
    fn random_policy_rarely_reaches_medium_goal() {
        let env = EvalEnv::named("toy-medium").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let nets = AgentNetworks::new(OBS_DIM, ACT_DIM, &AgentConfig::toy(), &mut rng).unwrap();
        let r = evaluate_policy(&nets.policy, &env, 20, 0).unwrap();
        assert!(r.success_rate <= 0.05, "{}", r.success_rate);
    }

    #[test]
    fn scripted_policy_through_harness() {
        let maze = Maze::named("toy-medium").unwrap();
        let env = EvalEnv::Maze(maze.clone());
        let r = evaluate_with(&env, 20, 0, |_, s| behavior_policy_action(&maze, s)).unwrap();
        assert!(r.success_rate >= 0.95);
    }

    #[test]
    fn eval_rejects_mismatched_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = Mlp::new(&[3, 4, 4], Activation::Relu, &mut rng).unwrap();
        let env = EvalEnv::named("toy-open").unwrap();
        assert!(matches!(evaluate_policy(&p, &env, 1, 0), Err(Error::Contract(_))));
    }
}
