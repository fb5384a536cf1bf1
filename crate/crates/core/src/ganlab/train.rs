use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{make_bimodal_data, StaticDataSpec};
use super::metrics::{eval_support_metrics, SupportMetrics};
use crate::agent::networks::standard_normal;
use crate::nn::{Activation, AdamConfig, AdamState, Graph, Mlp, Mode, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanConfig {
    pub noise_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    pub learning_rate: f32,
    /// Learning rate at the last step as a fraction of `learning_rate`,
    /// reached by linear decay.
    pub final_lr_fraction: f32,
    pub adam_beta1: f32,
    pub batch_size: usize,
    pub steps: usize,
    pub disc_steps_per_gen_step: usize,
    /// Scale of the objective term in the primary generator's loss.
    pub f_weight: f32,
    /// Maximize the objective rather than minimize it.
    pub maximize: bool,
    pub metrics_interval: usize,
    /// Samples drawn from each generator when computing metrics.
    pub eval_samples: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            noise_dim: 8,
            gen_hidden: vec![64, 64],
            disc_hidden: vec![64, 64],
            learning_rate: 5e-4,
            final_lr_fraction: 0.1,
            adam_beta1: 0.5,
            batch_size: 128,
            steps: 20_000,
            disc_steps_per_gen_step: 5,
            f_weight: 0.1,
            maximize: true,
            metrics_interval: 500,
            eval_samples: 10_000,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.noise_dim > 0
            && !self.gen_hidden.is_empty()
            && !self.gen_hidden.contains(&0)
            && !self.disc_hidden.is_empty()
            && !self.disc_hidden.contains(&0)
            && self.learning_rate > 0.0
            && (0.0..=1.0).contains(&self.final_lr_fraction)
            && (0.0..1.0).contains(&self.adam_beta1)
            && self.batch_size > 0
            && self.disc_steps_per_gen_step > 0
            && self.f_weight.is_finite()
            && self.metrics_interval > 0
            && self.eval_samples > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Contract(format!("invalid gan config {self:?}")))
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            ..AdamConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GanMetricsRow {
    pub step: usize,
    pub disc_loss: f32,
    pub primary_loss: f32,
    pub aux_loss: Option<f32>,
    pub in_support_rate: f64,
    pub primary_mean_f: f64,
    pub data_mean_f: f64,
    pub mixture_jsd_estimate: f64,
}

impl GanMetricsRow {
    pub fn metrics(&self) -> SupportMetrics {
        SupportMetrics {
            in_support_rate: self.in_support_rate,
            primary_mean_f: self.primary_mean_f,
            data_mean_f: self.data_mean_f,
            mixture_jsd_estimate: self.mixture_jsd_estimate,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GanRun {
    pub primary: Mlp,
    pub aux: Option<Mlp>,
    pub discriminator: Mlp,
    pub data: Tensor,
    pub history: Vec<GanMetricsRow>,
}

impl GanRun {
    pub fn final_metrics(&self) -> Option<SupportMetrics> {
        self.history.last().map(GanMetricsRow::metrics)
    }
}

/// A run stopped by a non-finite value, with every row logged before it.
#[derive(Debug)]
pub struct GanAbort {
    pub error: Error,
    pub history: Vec<GanMetricsRow>,
}

impl std::fmt::Display for GanAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} after {} metric rows", self.error, self.history.len())
    }
}

impl std::error::Error for GanAbort {}

/// `n` generator samples for fresh standard-normal noise.
pub fn generate<R: Rng + ?Sized>(generator: &Mlp, n: usize, noise_dim: usize, rng: &mut R) -> Result<Tensor> {
    generator.predict(&standard_normal(n, noise_dim, rng))
}

fn minibatch<R: Rng + ?Sized>(data: &Tensor, n: usize, rng: &mut R) -> Tensor {
    let dim = data.cols();
    let mut out = Vec::with_capacity(n * dim);
    for _ in 0..n {
        let i = rng.random_range(0..data.rows());
        out.extend_from_slice(&data.data()[i * dim..(i + 1) * dim]);
    }
    Tensor::matrix(n, dim, out).unwrap()
}

/// Stacks the rows of `a` and `b`.
fn stack(a: &Tensor, b: &Tensor) -> Tensor {
    let mut d = a.data().to_vec();
    d.extend_from_slice(b.data());
    Tensor::matrix(a.rows() + b.rows(), a.cols(), d).unwrap()
}

struct Players {
    primary: Mlp,
    aux: Option<Mlp>,
    disc: Mlp,
    primary_opt: AdamState,
    aux_opt: Option<AdamState>,
    disc_opt: AdamState,
}

/// Vanilla GAN discriminator step; with an auxiliary generator each fake
/// source carries half the weight so the fakes form an equal mixture.
fn disc_step<R: Rng + ?Sized>(p: &mut Players, data: &Tensor, cfg: &GanConfig, rng: &mut R) -> Result<f32> {
    let n = cfg.batch_size;
    let real = minibatch(data, n, rng);
    let mut fakes = vec![generate(&p.primary, n, cfg.noise_dim, rng)?];
    if let Some(aux) = &p.aux {
        fakes.push(generate(aux, n, cfg.noise_dim, rng)?);
    }
    let share = 1.0 / fakes.len() as f32;
    let mut g = Graph::new();
    let dv = p.disc.bind(&mut g, Mode::Train);
    let x = g.constant(real);
    let logit = p.disc.apply(&mut g, &dv, x)?;
    let mut loss = g.bce_with_logits(logit, 1.0);
    for fake in fakes {
        let x = g.constant(fake);
        let logit = p.disc.apply(&mut g, &dv, x)?;
        let l = g.bce_with_logits(logit, 0.0);
        let l = g.mul_scalar(l, share);
        loss = g.add(loss, l);
    }
    let grads = g.backward(loss)?;
    grads.assign(&dv.0, &mut p.disc.params)?;
    p.disc_opt.step(&mut p.disc.params)?;
    g.value(loss).item()
}

/// Non-saturating generator step, plus the signed objective term when
/// `spec` is given.
fn gen_step<R: Rng + ?Sized>(
    gen: &mut Mlp,
    opt: &mut AdamState,
    disc: &Mlp,
    spec: Option<&StaticDataSpec>,
    cfg: &GanConfig,
    rng: &mut R,
) -> Result<f32> {
    let mut g = Graph::new();
    let z = g.constant(standard_normal(cfg.batch_size, cfg.noise_dim, rng));
    let (x, gv) = gen.forward(&mut g, z, Mode::Train)?;
    let (logit, _) = disc.forward(&mut g, x, Mode::Frozen)?;
    let mut loss = g.bce_with_logits(logit, 1.0);
    if let Some(spec) = spec {
        let f = spec.objective.on_tape(&mut g, x);
        let mean_f = g.mean(f);
        let sign = if cfg.maximize { -1.0 } else { 1.0 };
        let term = g.mul_scalar(mean_f, sign * cfg.f_weight);
        loss = g.add(loss, term);
    }
    let grads = g.backward(loss)?;
    grads.assign(&gv.0, &mut gen.params)?;
    opt.step(&mut gen.params)?;
    g.value(loss).item()
}

fn measure<R: Rng + ?Sized>(
    p: &Players,
    data: &Tensor,
    spec: &StaticDataSpec,
    cfg: &GanConfig,
    rng: &mut R,
) -> Result<SupportMetrics> {
    let primary = generate(&p.primary, cfg.eval_samples, cfg.noise_dim, rng)?;
    let mixture = match &p.aux {
        Some(aux) => {
            let half = cfg.eval_samples.div_ceil(2);
            let a = generate(&p.primary, half, cfg.noise_dim, rng)?;
            let b = generate(aux, half, cfg.noise_dim, rng)?;
            stack(&a, &b)
        }
        None => primary.clone(),
    };
    eval_support_metrics(data, &primary, &mixture, spec)
}

/// Trains the primary generator (GAN loss plus objective), optionally an
/// auxiliary generator (GAN loss only) and a discriminator that sees real
/// samples against the generators' equal mixture. Metrics are logged every
/// `metrics_interval` steps and after the last step.
pub fn train_dual_gan(
    spec: &StaticDataSpec,
    cfg: &GanConfig,
    seed: u64,
    use_aux: bool,
) -> std::result::Result<GanRun, GanAbort> {
    let abort = |error: Error, history: &[GanMetricsRow]| GanAbort {
        error,
        history: history.to_vec(),
    };
    spec.validate().map_err(|e| abort(e, &[]))?;
    cfg.validate().map_err(|e| abort(e, &[]))?;
    let data = make_bimodal_data(spec, seed).map_err(|e| abort(e, &[]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6A4_0000);
    let dim = spec.dim();

    let build = |hidden: &[usize], input: usize, output: usize, rng: &mut ChaCha8Rng| {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        Mlp::new(&sizes, Activation::Relu, rng)
    };
    let setup = (|| -> Result<Players> {
        let primary = build(&cfg.gen_hidden, cfg.noise_dim, dim, &mut rng)?;
        let aux = if use_aux {
            Some(build(&cfg.gen_hidden, cfg.noise_dim, dim, &mut rng)?)
        } else {
            None
        };
        let disc = build(&cfg.disc_hidden, dim, 1, &mut rng)?;
        Ok(Players {
            primary_opt: AdamState::new(&primary.params, cfg.adam()),
            aux_opt: aux.as_ref().map(|a| AdamState::new(&a.params, cfg.adam())),
            disc_opt: AdamState::new(&disc.params, cfg.adam()),
            primary,
            aux,
            disc,
        })
    })();
    let mut p = setup.map_err(|e| abort(e, &[]))?;

    let mut history = Vec::new();
    for step in 1..=cfg.steps {
        let progress = (step - 1) as f32 / cfg.steps.max(2).saturating_sub(1) as f32;
        let lr = cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * progress);
        p.disc_opt.config.learning_rate = lr;
        p.primary_opt.config.learning_rate = lr;
        if let Some(opt) = &mut p.aux_opt {
            opt.config.learning_rate = lr;
        }
        let result = (|| -> Result<(f32, f32, Option<f32>)> {
            let mut disc_loss = 0.0;
            for _ in 0..cfg.disc_steps_per_gen_step {
                disc_loss = disc_step(&mut p, &data, cfg, &mut rng)?;
            }
            let primary_loss = gen_step(&mut p.primary, &mut p.primary_opt, &p.disc, Some(spec), cfg, &mut rng)?;
            let aux_loss = match (&mut p.aux, &mut p.aux_opt) {
                (Some(aux), Some(opt)) => Some(gen_step(aux, opt, &p.disc, None, cfg, &mut rng)?),
                _ => None,
            };
            Ok((disc_loss, primary_loss, aux_loss))
        })();
        let (disc_loss, primary_loss, aux_loss) = result.map_err(|e| abort(e, &history))?;
        if step % cfg.metrics_interval == 0 || step == cfg.steps {
            let m = measure(&p, &data, spec, cfg, &mut rng).map_err(|e| abort(e, &history))?;
            log::debug!(
                "gan step {step}: jsd {:.4} support {:.3}",
                m.mixture_jsd_estimate,
                m.in_support_rate
            );
            history.push(GanMetricsRow {
                step,
                disc_loss,
                primary_loss,
                aux_loss,
                in_support_rate: m.in_support_rate,
                primary_mean_f: m.primary_mean_f,
                data_mean_f: m.data_mean_f,
                mixture_jsd_estimate: m.mixture_jsd_estimate,
            });
        }
    }
    Ok(GanRun {
        primary: p.primary,
        aux: p.aux,
        discriminator: p.disc,
        data,
        history,
    })
}
