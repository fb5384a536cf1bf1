use rand::Rng;
use rand_distr::StandardNormal;

use super::config::AgentConfig;
use crate::nn::{Activation, AdamState, Graph, Mlp, MlpVars, Mode, Tensor, Var};
use crate::Result;

/// All learned functions plus one optimizer per trained network.
#[derive(Debug, Clone)]
pub struct AgentNetworks {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub qf1: Mlp,
    pub qf2: Mlp,
    pub target_qf1: Mlp,
    pub target_qf2: Mlp,
    /// Outputs the mean and log-std of a diagonal Gaussian before tanh.
    pub policy: Mlp,
    /// `(obs, z) -> pre-tanh action`.
    pub aux_generator: Mlp,
    /// `(obs, action) -> logit`.
    pub discriminator: Mlp,
    pub qf1_opt: AdamState,
    pub qf2_opt: AdamState,
    pub policy_opt: AdamState,
    pub aux_opt: AdamState,
    pub disc_opt: AdamState,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl AgentNetworks {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, cfg: &AgentConfig, rng: &mut R) -> Result<Self> {
        let relu = Activation::Relu;
        let qf1 = Mlp::new(&sizes(obs_dim + act_dim, &cfg.q_hidden, 1), relu, rng)?;
        let qf2 = Mlp::new(&sizes(obs_dim + act_dim, &cfg.q_hidden, 1), relu, rng)?;
        let policy = Mlp::new(&sizes(obs_dim, &cfg.policy_hidden, 2 * act_dim), relu, rng)?;
        let aux_generator = Mlp::new(&sizes(obs_dim + cfg.aux_noise_dim, &cfg.aux_hidden, act_dim), relu, rng)?;
        let discriminator = Mlp::new(&sizes(obs_dim + act_dim, &cfg.disc_hidden, 1), relu, rng)?;
        Ok(Self::from_parts(
            obs_dim,
            act_dim,
            cfg,
            qf1,
            qf2,
            policy,
            aux_generator,
            discriminator,
        ))
    }

    /// Targets start as exact copies of the online critics.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        obs_dim: usize,
        act_dim: usize,
        cfg: &AgentConfig,
        qf1: Mlp,
        qf2: Mlp,
        policy: Mlp,
        aux_generator: Mlp,
        discriminator: Mlp,
    ) -> Self {
        let adam = cfg.adam();
        Self {
            obs_dim,
            act_dim,
            target_qf1: qf1.clone(),
            target_qf2: qf2.clone(),
            qf1_opt: AdamState::new(&qf1.params, adam),
            qf2_opt: AdamState::new(&qf2.params, adam),
            policy_opt: AdamState::new(&policy.params, adam),
            aux_opt: AdamState::new(&aux_generator.params, adam),
            disc_opt: AdamState::new(&discriminator.params, adam),
            qf1,
            qf2,
            policy,
            aux_generator,
            discriminator,
        }
    }
}

/// Row-wise `[a ‖ b]` outside of any tape.
pub fn concat_cols(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, ca, cb) = (a.rows(), a.cols(), b.cols());
    let mut data = Vec::with_capacity(n * (ca + cb));
    for r in 0..n {
        data.extend_from_slice(&a.data()[r * ca..(r + 1) * ca]);
        data.extend_from_slice(&b.data()[r * cb..(r + 1) * cb]);
    }
    Tensor::matrix(n, ca + cb, data).unwrap()
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Tape nodes of a reparameterized tanh-Gaussian sample.
#[derive(Debug, Clone, Copy)]
pub struct PolicySample {
    pub mean: Var,
    pub log_std: Var,
    pub pre_tanh: Var,
    pub action: Var,
}

/// `action = tanh(mean + exp(log_std) * eps)` with the log-std clamped.
pub fn policy_sample(g: &mut Graph, head: Var, act_dim: usize, eps: Var, cfg: &AgentConfig) -> PolicySample {
    let mean = g.slice_cols(head, 0, act_dim);
    let raw = g.slice_cols(head, act_dim, 2 * act_dim);
    let log_std = g.clamp(raw, cfg.log_std_min, cfg.log_std_max);
    let std = g.exp(log_std);
    let scaled = g.mul(std, eps);
    let pre_tanh = g.add(mean, scaled);
    let action = g.tanh(pre_tanh);
    PolicySample {
        mean,
        log_std,
        pre_tanh,
        action,
    }
}

/// Per-row log-density of a tanh-squashed diagonal Gaussian sample, with the
/// change-of-variables term `-sum log(1 - a^2 + 1e-6)`. Returns `[n, 1]`.
pub fn tanh_gaussian_log_prob(g: &mut Graph, sample: &PolicySample, eps: Var) -> Var {
    let half_log_two_pi = 0.5 * (2.0 * std::f32::consts::PI).ln();
    let e2 = g.square(eps);
    let quad = g.mul_scalar(e2, -0.5);
    let gauss = g.sub(quad, sample.log_std);
    let gauss = g.add_scalar(gauss, -half_log_two_pi);
    let a2 = g.square(sample.action);
    let one_minus = g.neg(a2);
    let one_minus = g.add_scalar(one_minus, 1.0 + 1e-6);
    let log_jac = g.log(one_minus);
    let per_dim = g.sub(gauss, log_jac);
    g.sum_cols(per_dim)
}

/// Deterministic evaluation action `tanh(mean)` for a batch of observations.
pub fn mean_action(policy: &Mlp, obs: &Tensor, act_dim: usize) -> Result<Tensor> {
    let head = policy.predict(obs)?;
    let n = obs.rows();
    let mut data = Vec::with_capacity(n * act_dim);
    for r in 0..n {
        data.extend(
            head.data()[r * 2 * act_dim..r * 2 * act_dim + act_dim]
                .iter()
                .map(|m| m.tanh()),
        );
    }
    Tensor::matrix(n, act_dim, data)
}

/// Sampled action outside the tape (used for critic targets and fakes).
pub fn sample_action<R: Rng + ?Sized>(
    policy: &Mlp,
    obs: &Tensor,
    act_dim: usize,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let x = g.constant(obs.clone());
    let (head, _) = policy.forward(&mut g, x, Mode::Frozen)?;
    let eps = g.constant(standard_normal(obs.rows(), act_dim, rng));
    let s = policy_sample(&mut g, head, act_dim, eps, cfg);
    g.check()?;
    Ok(g.value(s.action).clone())
}

/// Auxiliary generator output `tanh(G(obs, z))`, outside the tape.
pub fn aux_action<R: Rng + ?Sized>(aux: &Mlp, obs: &Tensor, noise_dim: usize, rng: &mut R) -> Result<Tensor> {
    let z = standard_normal(obs.rows(), noise_dim, rng);
    let mut out = aux.predict(&concat_cols(obs, &z))?;
    out.data_mut().iter_mut().for_each(|v| *v = v.tanh());
    Ok(out)
}

/// Applies `net` with parameters bound as `vars` to `[a ‖ b]` on the tape.
pub fn apply_pair(g: &mut Graph, net: &Mlp, vars: &MlpVars, a: Var, b: Var) -> Result<Var> {
    let x = g.concat_cols(a, b);
    net.apply(g, vars, x)
}
