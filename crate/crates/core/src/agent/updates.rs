//! The four per-step updates. Each builds a fresh tape, takes one Adam step
//! on the network it owns and leaves every other network untouched.

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::AgentConfig;
use super::networks::{
    apply_pair, aux_action, concat_cols, policy_sample, sample_action, standard_normal, AgentNetworks,
};
use crate::envs::OfflineDataset;
use crate::nn::{soft_update, Graph, Mode, Tensor};
use crate::{Error, Result};

/// A uniformly sampled minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Tensor,
    pub actions: Tensor,
    pub rewards: Vec<f32>,
    pub terminals: Vec<f32>,
    pub next_obs: Tensor,
}

impl Batch {
    pub fn from_indices(ds: &OfflineDataset, idx: &[usize]) -> Result<Self> {
        let (od, ad) = (crate::envs::OBS_DIM, crate::envs::ACT_DIM);
        let mut obs = Vec::with_capacity(idx.len() * od);
        let mut actions = Vec::with_capacity(idx.len() * ad);
        let mut next_obs = Vec::with_capacity(idx.len() * od);
        let mut rewards = Vec::with_capacity(idx.len());
        let mut terminals = Vec::with_capacity(idx.len());
        for &i in idx {
            let t = ds.get(i);
            obs.extend_from_slice(t.obs);
            actions.extend_from_slice(t.action);
            next_obs.extend_from_slice(t.next_obs);
            rewards.push(t.reward);
            terminals.push(if t.terminal { 1.0 } else { 0.0 });
        }
        let n = idx.len();
        Ok(Self {
            obs: Tensor::matrix(n, od, obs)?,
            actions: Tensor::matrix(n, ad, actions)?,
            rewards,
            terminals,
            next_obs: Tensor::matrix(n, od, next_obs)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(ds: &OfflineDataset, size: usize, rng: &mut R) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::Contract("cannot sample from an empty dataset".into()));
        }
        let idx: Vec<usize> = (0..size).map(|_| rng.random_range(0..ds.len())).collect();
        Self::from_indices(ds, &idx)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

fn column(values: Vec<f32>) -> Tensor {
    let n = values.len();
    Tensor::matrix(n, 1, values).unwrap()
}

/// `r + (1 - terminal) * gamma * min(q1, q2)`.
pub fn critic_targets(rewards: &[f32], terminals: &[f32], tq1: &[f32], tq2: &[f32], gamma: f32) -> Vec<f32> {
    rewards
        .iter()
        .zip(terminals)
        .zip(tq1.iter().zip(tq2))
        .map(|((&r, &d), (&a, &b))| r + (1.0 - d) * gamma * a.min(b))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticStats {
    pub q1_loss: f32,
    pub q2_loss: f32,
}

pub fn critic_update<R: Rng + ?Sized>(
    batch: &Batch,
    nets: &mut AgentNetworks,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<CriticStats> {
    let next_a = sample_action(&nets.policy, &batch.next_obs, nets.act_dim, cfg, rng)?;
    let next_in = concat_cols(&batch.next_obs, &next_a);
    let tq1 = nets.target_qf1.predict(&next_in)?;
    let tq2 = nets.target_qf2.predict(&next_in)?;
    let y = critic_targets(&batch.rewards, &batch.terminals, tq1.data(), tq2.data(), cfg.gamma);

    let mut g = Graph::new();
    let input = g.constant(concat_cols(&batch.obs, &batch.actions));
    let target = g.constant(column(y));
    let (q1, v1) = nets.qf1.forward(&mut g, input, Mode::Train)?;
    let (q2, v2) = nets.qf2.forward(&mut g, input, Mode::Train)?;
    let l1 = g.mse(q1, target);
    let l2 = g.mse(q2, target);
    let total = g.add(l1, l2);
    let grads = g.backward(total)?;
    let stats = CriticStats {
        q1_loss: g.value(l1).item()?,
        q2_loss: g.value(l2).item()?,
    };
    grads.assign(&v1.0, &mut nets.qf1.params)?;
    grads.assign(&v2.0, &mut nets.qf2.params)?;
    nets.qf1_opt.step(&mut nets.qf1.params)?;
    nets.qf2_opt.step(&mut nets.qf2.params)?;
    soft_update(&mut nets.target_qf1.params, &nets.qf1.params, cfg.tau)?;
    soft_update(&mut nets.target_qf2.params, &nets.qf2.params, cfg.tau)?;
    Ok(stats)
}

fn log_sigmoid(x: f32) -> f32 {
    -((-x.abs()).exp().ln_1p() + (-x).max(0.0))
}

/// `min(D(s, a), D(s, a_data)) / D(s, a_data)` from the two logits,
/// evaluated in log space so tiny probabilities do not divide to NaN.
/// Floors at the smallest positive normal float.
pub fn q_weight(policy_logit: f32, data_logit: f32) -> f32 {
    let gap = log_sigmoid(policy_logit) - log_sigmoid(data_logit);
    gap.min(0.0).exp().max(f32::MIN_POSITIVE)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStats {
    pub loss: f32,
    pub mean_weight: f32,
}

/// Maximizes `weight * Q1 / w + log D` over reparameterized policy samples,
/// minus the optional pre-tanh penalty.
pub fn policy_update<R: Rng + ?Sized>(
    batch: &Batch,
    nets: &mut AgentNetworks,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<PolicyStats> {
    let n = batch.len();
    let act_dim = nets.act_dim;
    let data_logits = nets.discriminator.predict(&concat_cols(&batch.obs, &batch.actions))?;

    let mut g = Graph::new();
    let obs = g.constant(batch.obs.clone());
    let (head, pv) = nets.policy.forward(&mut g, obs, Mode::Train)?;
    let eps = g.constant(standard_normal(n, act_dim, rng));
    let sample = policy_sample(&mut g, head, act_dim, eps, cfg);
    let qv = nets.qf1.bind(&mut g, Mode::Frozen);
    let q = apply_pair(&mut g, &nets.qf1, &qv, obs, sample.action)?;
    let dv = nets.discriminator.bind(&mut g, Mode::Frozen);
    let logit = apply_pair(&mut g, &nets.discriminator, &dv, obs, sample.action)?;

    let weights: Vec<f32> = if cfg.ablations.use_q_weight {
        g.value(logit)
            .data()
            .iter()
            .zip(data_logits.data())
            .map(|(&lp, &ld)| q_weight(lp, ld))
            .collect()
    } else {
        vec![1.0; n]
    };
    let mean_weight = weights.iter().sum::<f32>() / n as f32;
    let wv = g.constant(column(weights));
    let weighted = g.mul(wv, q);
    let value_term = g.mul_scalar(weighted, 1.0 / cfg.w);
    let log_d = g.log_sigmoid(logit);
    let objective = g.add(value_term, log_d);
    let mean = g.mean(objective);
    let mut loss = g.neg(mean);
    if cfg.policy_reg > 0.0 {
        let m2 = g.square(sample.mean);
        let s2 = g.square(sample.log_std);
        let (m2, s2) = (g.mean(m2), g.mean(s2));
        let reg = g.add(m2, s2);
        let reg = g.mul_scalar(reg, cfg.policy_reg);
        loss = g.add(loss, reg);
    }
    let grads = g.backward(loss)?;
    let loss_value = g.value(loss).item()?;
    grads.assign(&pv.0, &mut nets.policy.params)?;
    nets.policy_opt.step(&mut nets.policy.params)?;
    Ok(PolicyStats {
        loss: loss_value,
        mean_weight,
    })
}

/// Non-saturating generator loss: BCE of `D(s, G(s, z))` against the real label.
pub fn aux_generator_update<R: Rng + ?Sized>(
    batch: &Batch,
    nets: &mut AgentNetworks,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<f32> {
    let n = batch.len();
    let mut g = Graph::new();
    let obs = g.constant(batch.obs.clone());
    let z = g.constant(standard_normal(n, cfg.aux_noise_dim, rng));
    let input = g.concat_cols(obs, z);
    let (raw, av) = nets.aux_generator.forward(&mut g, input, Mode::Train)?;
    let action = g.tanh(raw);
    let dv = nets.discriminator.bind(&mut g, Mode::Frozen);
    let logit = apply_pair(&mut g, &nets.discriminator, &dv, obs, action)?;
    let loss = g.bce_with_logits(logit, 1.0);
    let grads = g.backward(loss)?;
    let value = g.value(loss).item()?;
    grads.assign(&av.0, &mut nets.aux_generator.params)?;
    nets.aux_opt.step(&mut nets.aux_generator.params)?;
    Ok(value)
}

/// Adds clamped Gaussian instance noise of scale `sigma`.
pub fn add_instance_noise<R: Rng + ?Sized>(t: &Tensor, sigma: f32, clamp: f32, rng: &mut R) -> Tensor {
    let mut out = t.clone();
    for v in out.data_mut() {
        let e: f32 = rng.sample::<f32, _>(StandardNormal) * sigma;
        *v += e.clamp(-clamp, clamp);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscStats {
    pub loss: f32,
    pub mean_d_real: f32,
    pub mean_d_fake: f32,
}

/// Least-squares loss on sigmoid outputs: real actions toward 1, policy and
/// auxiliary actions toward 0, each term halved.
pub fn discriminator_update<R: Rng + ?Sized>(
    batch: &Batch,
    nets: &mut AgentNetworks,
    cfg: &AgentConfig,
    sigma: f32,
    rng: &mut R,
) -> Result<DiscStats> {
    let n = batch.len();
    let clamp = cfg.instance_noise.clamp;
    let real = add_instance_noise(&batch.actions, sigma, clamp, rng);
    let pi = sample_action(&nets.policy, &batch.obs, nets.act_dim, cfg, rng)?;
    let mut fakes = vec![add_instance_noise(&pi, sigma, clamp, rng)];
    if cfg.ablations.use_aux_generator {
        let aux = aux_action(&nets.aux_generator, &batch.obs, cfg.aux_noise_dim, rng)?;
        fakes.push(add_instance_noise(&aux, sigma, clamp, rng));
    }

    let mut g = Graph::new();
    let obs = g.constant(batch.obs.clone());
    let dv = nets.discriminator.bind(&mut g, Mode::Train);
    let ones = g.constant(Tensor::full(&[n, 1], 1.0));
    let zeros = g.constant(Tensor::zeros(&[n, 1]));

    let real_a = g.constant(real);
    let real_logit = apply_pair(&mut g, &nets.discriminator, &dv, obs, real_a)?;
    let real_p = g.sigmoid(real_logit);
    let real_mse = g.mse(real_p, ones);
    let mut loss = g.mul_scalar(real_mse, 0.5);
    let mean_d_real = g.value(real_p).data().iter().sum::<f32>() / n as f32;

    let mut fake_sum = 0.0;
    for fake in &fakes {
        let a = g.constant(fake.clone());
        let logit = apply_pair(&mut g, &nets.discriminator, &dv, obs, a)?;
        let p = g.sigmoid(logit);
        fake_sum += g.value(p).data().iter().sum::<f32>();
        let mse = g.mse(p, zeros);
        let half = g.mul_scalar(mse, 0.5);
        loss = g.add(loss, half);
    }
    let grads = g.backward(loss)?;
    let value = g.value(loss).item()?;
    grads.assign(&dv.0, &mut nets.discriminator.params)?;
    nets.disc_opt.step(&mut nets.discriminator.params)?;
    Ok(DiscStats {
        loss: value,
        mean_d_real,
        mean_d_fake: fake_sum / (n * fakes.len()) as f32,
    })
}
