use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::behavior::behavior_policy_action;
use super::corruption::{corrupt_action, CorruptionProfile, Variant};
use super::maze::Maze;
use crate::{Error, Result};

pub const OBS_DIM: usize = 4;
pub const ACT_DIM: usize = 2;
pub const GENERATOR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub env: String,
    pub variant: Variant,
    pub seed: u64,
    pub generator_version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<'a> {
    pub obs: &'a [f32],
    pub action: &'a [f32],
    pub reward: f32,
    pub next_obs: &'a [f32],
    pub terminal: bool,
}

/// Columnar transition store. `episode_ends[i] == 1` marks the last
/// transition of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub observations: Vec<f32>,
    pub actions: Vec<f32>,
    pub rewards: Vec<f32>,
    pub terminals: Vec<u8>,
    pub next_observations: Vec<f32>,
    pub episode_ends: Vec<u8>,
    pub metadata: DatasetMetadata,
}

impl OfflineDataset {
    pub fn empty(metadata: DatasetMetadata) -> Self {
        Self {
            observations: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminals: Vec::new(),
            next_observations: Vec::new(),
            episode_ends: Vec::new(),
            metadata,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(
        &mut self,
        obs: &[f32],
        action: &[f32],
        reward: f32,
        next_obs: &[f32],
        terminal: bool,
        episode_end: bool,
    ) {
        self.observations.extend_from_slice(obs);
        self.actions.extend_from_slice(action);
        self.rewards.push(reward);
        self.next_observations.extend_from_slice(next_obs);
        self.terminals.push(terminal as u8);
        self.episode_ends.push(episode_end as u8);
    }

    pub fn get(&self, i: usize) -> Transition<'_> {
        Transition {
            obs: &self.observations[i * OBS_DIM..(i + 1) * OBS_DIM],
            action: &self.actions[i * ACT_DIM..(i + 1) * ACT_DIM],
            reward: self.rewards[i],
            next_obs: &self.next_observations[i * OBS_DIM..(i + 1) * OBS_DIM],
            terminal: self.terminals[i] != 0,
        }
    }

    /// Checks column lengths and that the last transition closes an episode.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let checks = [
            ("observations", self.observations.len(), n * OBS_DIM),
            ("actions", self.actions.len(), n * ACT_DIM),
            ("terminals", self.terminals.len(), n),
            ("next_observations", self.next_observations.len(), n * OBS_DIM),
            ("episode_ends", self.episode_ends.len(), n),
        ];
        for (field, got, want) in checks {
            if got != want {
                return Err(Error::format(field, format!("length {got}, expected {want}")));
            }
        }
        if n > 0 && self.episode_ends[n - 1] == 0 {
            return Err(Error::format("episode_ends", "last transition does not end an episode"));
        }
        Ok(())
    }

    pub fn episodes(&self) -> Vec<Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for (i, &e) in self.episode_ends.iter().enumerate() {
            if e != 0 {
                out.push(start..i + 1);
                start = i + 1;
            }
        }
        out
    }

    pub fn episode_returns(&self) -> Vec<f64> {
        self.episodes()
            .into_iter()
            .map(|r| self.rewards[r].iter().map(|&x| x as f64).sum())
            .collect()
    }
}

/// Where dataset episodes begin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// The maze's start cells, as in evaluation.
    StartRegion,
    /// Any free cell other than the goal.
    Anywhere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationStats {
    pub episodes: usize,
    pub transitions: usize,
    pub success_rate: f64,
    pub mean_episode_length: f64,
}

/// Per-episode generator: ChaCha8 seeded with `seed`, stream = episode index.
pub fn episode_rng(seed: u64, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(episode as u64);
    rng
}

pub fn generate_dataset(
    maze: &Maze,
    variant: Variant,
    episodes: usize,
    seed: u64,
) -> Result<(OfflineDataset, GenerationStats)> {
    generate_dataset_with(maze, variant, episodes, seed, StartMode::Anywhere)
}

/// Rolls out the scripted controller through the corruption model. Stored
/// rewards are shifted by -1, so a step is -1 unless it lands in the goal.
pub fn generate_dataset_with(
    maze: &Maze,
    variant: Variant,
    episodes: usize,
    seed: u64,
    start: StartMode,
) -> Result<(OfflineDataset, GenerationStats)> {
    if episodes == 0 {
        return Err(Error::Contract("episodes must be at least 1".into()));
    }
    let profile = CorruptionProfile::scaled_to(maze.width());
    let mut ds = OfflineDataset::empty(DatasetMetadata {
        env: maze.name().to_string(),
        variant,
        seed,
        generator_version: GENERATOR_VERSION,
    });
    let mut successes = 0;
    for ep in 0..episodes {
        let mut rng = episode_rng(seed, ep);
        let mut state = match start {
            StartMode::StartRegion => maze.reset(&mut rng),
            StartMode::Anywhere => maze.reset_anywhere(&mut rng),
        };
        loop {
            let clean = behavior_policy_action(maze, &state)?;
            let action = corrupt_action(clean, state.pos[0], &profile, variant, &mut rng);
            let out = maze.step(state, action);
            ds.push(
                &maze.observe(&state),
                &action,
                out.reward - 1.0,
                &maze.observe(&out.next),
                out.reached_goal,
                out.done(),
            );
            state = out.next;
            if out.done() {
                successes += out.reached_goal as usize;
                break;
            }
        }
    }
    let stats = GenerationStats {
        episodes,
        transitions: ds.len(),
        success_rate: successes as f64 / episodes as f64,
        mean_episode_length: ds.len() as f64 / episodes as f64,
    };
    Ok((ds, stats))
}

/// Runs the scripted controller (optionally corrupted) from the evaluation
/// start region and reports the goal-reach rate.
pub fn behavior_success_rate(maze: &Maze, variant: Variant, episodes: usize, seed: u64) -> Result<f64> {
    let (_, stats) = generate_dataset_with(maze, variant, episodes, seed, StartMode::StartRegion)?;
    Ok(stats.success_rate)
}

/// Divides every reward by the spread of episode returns.
pub fn standardize_rewards(mut ds: OfflineDataset) -> Result<OfflineDataset> {
    let returns = ds.episode_returns();
    if returns.len() < 2 {
        return Err(Error::Contract("need at least two episodes to standardize".into()));
    }
    let max = returns.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = returns.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if !(range > 0.0) {
        return Err(Error::Contract("all episode returns are equal".into()));
    }
    ds.rewards.iter_mut().for_each(|r| *r = (*r as f64 / range) as f32);
    Ok(ds)
}

/// One-step dense-reward task: observation `(x, y, target_x, target_y)` in
/// the unit square, best action `clip(2 (target - position))`, reward
/// `1 - |a - best| / (2 sqrt 2)`.
pub mod reacher {
    use super::*;

    pub const NAME: &str = "toy-reacher";

    pub fn best_action(obs: &[f32]) -> [f32; 2] {
        [
            (2.0 * (obs[2] - obs[0])).clamp(-1.0, 1.0),
            (2.0 * (obs[3] - obs[1])).clamp(-1.0, 1.0),
        ]
    }

    pub fn reward(obs: &[f32], action: &[f32]) -> f32 {
        let b = best_action(obs);
        let d = ((action[0] - b[0]).powi(2) + (action[1] - b[1]).powi(2)).sqrt();
        1.0 - d / (2.0 * std::f32::consts::SQRT_2)
    }

    pub fn sample_observation<R: Rng + ?Sized>(rng: &mut R) -> [f32; 4] {
        [rng.random(), rng.random(), rng.random(), rng.random()]
    }

    pub fn generate(variant: Variant, episodes: usize, seed: u64) -> Result<OfflineDataset> {
        if episodes == 0 {
            return Err(Error::Contract("episodes must be at least 1".into()));
        }
        let profile = CorruptionProfile::scaled_to(1.0);
        let mut ds = OfflineDataset::empty(DatasetMetadata {
            env: NAME.into(),
            variant,
            seed,
            generator_version: GENERATOR_VERSION,
        });
        for ep in 0..episodes {
            let mut rng = episode_rng(seed, ep);
            let obs = sample_observation(&mut rng);
            let action = corrupt_action(best_action(&obs), obs[0], &profile, variant, &mut rng);
            ds.push(&obs, &action, reward(&obs, &action), &obs, true, true);
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_open_maze_mostly_succeeds() {
        let m = Maze::named("toy-open").unwrap();
        let (_, stats) = generate_dataset(&m, Variant::Clean, 100, 3).unwrap();
        assert!(stats.success_rate >= 0.95, "{}", stats.success_rate);
    }

    #[test]
    fn rewards_and_actions_in_range() {
        let m = Maze::named("toy-medium").unwrap();
        for v in [Variant::Clean, Variant::Noisy, Variant::Biased] {
            let (ds, _) = generate_dataset(&m, v, 20, 5).unwrap();
            ds.validate().unwrap();
            assert!(ds.rewards.iter().all(|&r| r == -1.0 || r == 0.0));
            assert!(ds.actions.iter().all(|a| (-1.0..=1.0).contains(a)));
            for i in 0..ds.len() {
                let t = ds.get(i);
                assert_eq!(t.terminal, t.reward == 0.0);
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let m = Maze::named("toy-medium").unwrap();
        let (a, _) = generate_dataset(&m, Variant::Noisy, 10, 42).unwrap();
        let (b, _) = generate_dataset(&m, Variant::Noisy, 10, 42).unwrap();
        let (c, _) = generate_dataset(&m, Variant::Noisy, 10, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn episodes_partition_the_index_range() {
        let m = Maze::named("toy-open").unwrap();
        let (ds, stats) = generate_dataset(&m, Variant::Biased, 7, 1).unwrap();
        let eps = ds.episodes();
        assert_eq!(eps.len(), stats.episodes);
        assert_eq!(eps[0].start, 0);
        assert_eq!(eps.last().unwrap().end, ds.len());
        assert!(eps.windows(2).all(|w| w[0].end == w[1].start));
    }

    fn meta() -> DatasetMetadata {
        DatasetMetadata {
            env: "hand".into(),
            variant: Variant::Clean,
            seed: 0,
            generator_version: GENERATOR_VERSION,
        }
    }

    #[test]
    fn standardize_divides_by_return_spread() {
        let mut ds = OfflineDataset::empty(meta());
        let o = [0.0; OBS_DIM];
        let a = [0.0; ACT_DIM];
        ds.push(&o, &a, 4.0, &o, false, false);
        ds.push(&o, &a, 6.0, &o, true, true);
        ds.push(&o, &a, 0.0, &o, true, true);
        let s = standardize_rewards(ds).unwrap();
        assert_eq!(s.rewards, vec![0.4, 0.6, 0.0]);
    }

    #[test]
    fn standardize_rejects_flat_returns() {
        let mut ds = OfflineDataset::empty(meta());
        let o = [0.0; OBS_DIM];
        ds.push(&o, &[0.0; 2], 1.0, &o, true, true);
        ds.push(&o, &[0.0; 2], 1.0, &o, true, true);
        assert!(matches!(standardize_rewards(ds), Err(Error::Contract(_))));
    }

    #[test]
    fn standardized_reacher_spread_is_one() {
        let ds = reacher::generate(Variant::Noisy, 200, 9).unwrap();
        let s = standardize_rewards(ds).unwrap();
        let r = s.episode_returns();
        let spread =
            r.iter().copied().fold(f64::NEG_INFINITY, f64::max) - r.iter().copied().fold(f64::INFINITY, f64::min);
        assert!((spread - 1.0).abs() < 1e-6, "{spread}");
    }

    #[test]
    fn reacher_best_action_scores_one() {
        let obs = [0.2, 0.3, 0.5, 0.1];
        assert_eq!(reacher::reward(&obs, &reacher::best_action(&obs)), 1.0);
    }
}
