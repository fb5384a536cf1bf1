//! Tape gradients checked against central finite differences of an
//! independent f64 forward pass.
//!
//! Each case draws a small tanh network, inputs and targets from a seed,
//! differentiates the loss on the f32 tape and compares the full gradient
//! vector (parameters and inputs) with f64 central differences. The error
//! is `|g_tape - g_fd| / max(|g_fd|, 1e-6)` in the Euclidean norm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, Graph, Mlp, Mode, Tensor, Var};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossCase {
    Mse,
    BceWithLogits,
    LogSigmoid,
    /// Mean log-density of a reparameterized tanh-squashed Gaussian sample.
    TanhGaussianLogDensity,
    /// Mean of the elementwise minimum of two networks.
    Min,
    /// Squared error of a sigmoid output against 1.
    SigmoidMse,
}

impl LossCase {
    pub const ALL: [LossCase; 6] = [
        LossCase::Mse,
        LossCase::BceWithLogits,
        LossCase::LogSigmoid,
        LossCase::TanhGaussianLogDensity,
        LossCase::Min,
        LossCase::SigmoidMse,
    ];
}

const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;

/// Everything one check needs, drawn from a seed.
struct Problem {
    nets: Vec<Mlp>,
    x: Tensor,
    target: Tensor,
    eps: Tensor,
    label: f32,
}

fn draw(case: LossCase, seed: u64) -> Result<Problem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(1..=4);
    let input = rng.random_range(1..=4);
    let hidden = rng.random_range(2..=6);
    let act = rng.random_range(1..=3);
    let out = if case == LossCase::TanhGaussianLogDensity {
        2 * act
    } else {
        act
    };
    let count = if case == LossCase::Min { 2 } else { 1 };
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        nets.push(Mlp::new(&[input, hidden, out], Activation::Tanh, &mut rng)?);
    }
    let mut uniform = |n: usize, scale: f32| -> Vec<f32> { (0..n).map(|_| rng.random_range(-scale..scale)).collect() };
    let x = Tensor::matrix(rows, input, uniform(rows * input, 1.5))?;
    let target = Tensor::matrix(rows, act, uniform(rows * act, 1.0))?;
    let eps = Tensor::matrix(rows, act, uniform(rows * act, 1.5))?;
    let label = if seed % 2 == 0 { 1.0 } else { 0.0 };
    Ok(Problem {
        nets,
        x,
        target,
        eps,
        label,
    })
}

/// Loss on the tape given the network outputs.
fn tape_loss(case: LossCase, g: &mut Graph, outs: &[Var], p: &Problem) -> Var {
    let y = outs[0];
    match case {
        LossCase::Mse => {
            let t = g.constant(p.target.clone());
            g.mse(y, t)
        }
        LossCase::BceWithLogits => g.bce_with_logits(y, p.label),
        LossCase::LogSigmoid => {
            let l = g.log_sigmoid(y);
            g.mean(l)
        }
        LossCase::TanhGaussianLogDensity => {
            let act = p.eps.cols();
            let eps = g.constant(p.eps.clone());
            let mean = g.slice_cols(y, 0, act);
            let raw = g.slice_cols(y, act, 2 * act);
            let log_std = g.clamp(raw, LOG_STD_MIN as f32, LOG_STD_MAX as f32);
            let std = g.exp(log_std);
            let scaled = g.mul(std, eps);
            let pre = g.add(mean, scaled);
            let a = g.tanh(pre);
            let e2 = g.square(eps);
            let quad = g.mul_scalar(e2, -0.5);
            let gauss = g.sub(quad, log_std);
            let gauss = g.add_scalar(gauss, -0.5 * (2.0 * std::f32::consts::PI).ln());
            let a2 = g.square(a);
            let om = g.neg(a2);
            let om = g.add_scalar(om, 1.0 + 1e-6);
            let jac = g.log(om);
            let per = g.sub(gauss, jac);
            let rows = g.sum_cols(per);
            g.mean(rows)
        }
        LossCase::Min => {
            let m = g.min(outs[0], outs[1]);
            g.mean(m)
        }
        LossCase::SigmoidMse => {
            let s = g.sigmoid(y);
            let ones = g.constant(Tensor::full(g.shape(y), 1.0));
            g.mse(s, ones)
        }
    }
}

/// Plain f64 tanh MLP. `params` follows the `Mlp` layout.
fn forward64(sizes: &[usize], params: &[Vec<f64>], x: &[f64], rows: usize) -> Vec<f64> {
    let mut h = x.to_vec();
    let layers = sizes.len() - 1;
    for l in 0..layers {
        let (fin, fout) = (sizes[l], sizes[l + 1]);
        let (w, b) = (&params[2 * l], &params[2 * l + 1]);
        let mut next = vec![0.0; rows * fout];
        for r in 0..rows {
            for o in 0..fout {
                let mut acc = b[o];
                for i in 0..fin {
                    acc += w[o * fin + i] * h[r * fin + i];
                }
                next[r * fout + o] = if l + 1 < layers { acc.tanh() } else { acc };
            }
        }
        h = next;
    }
    h
}

fn log_sigmoid64(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn loss64(case: LossCase, outs: &[Vec<f64>], p: &Problem) -> f64 {
    let y = &outs[0];
    match case {
        LossCase::Mse => mean(
            &y.iter()
                .zip(p.target.data())
                .map(|(a, &t)| (a - t as f64).powi(2))
                .collect::<Vec<_>>(),
        ),
        LossCase::BceWithLogits => {
            let t = p.label as f64;
            -mean(
                &y.iter()
                    .map(|&v| t * log_sigmoid64(v) + (1.0 - t) * log_sigmoid64(-v))
                    .collect::<Vec<_>>(),
            )
        }
        LossCase::LogSigmoid => mean(&y.iter().map(|&v| log_sigmoid64(v)).collect::<Vec<_>>()),
        LossCase::TanhGaussianLogDensity => {
            let act = p.eps.cols();
            let rows = p.eps.rows();
            let mut total = 0.0;
            for r in 0..rows {
                for j in 0..act {
                    let mu = y[r * 2 * act + j];
                    let ls = y[r * 2 * act + act + j].clamp(LOG_STD_MIN, LOG_STD_MAX);
                    let e = p.eps.data()[r * act + j] as f64;
                    let a = (mu + ls.exp() * e).tanh();
                    total += -0.5 * e * e - ls - 0.5 * (2.0 * std::f64::consts::PI).ln() - (1.0 - a * a + 1e-6).ln();
                }
            }
            total / rows as f64
        }
        LossCase::Min => mean(&y.iter().zip(&outs[1]).map(|(a, b)| a.min(*b)).collect::<Vec<_>>()),
        LossCase::SigmoidMse => mean(
            &y.iter()
                .map(|&v| (1.0 / (1.0 + (-v).exp()) - 1.0).powi(2))
                .collect::<Vec<_>>(),
        ),
    }
}

/// Flattened `[params of every net..., input]` in f64.
fn flatten(p: &Problem) -> Vec<f64> {
    let mut v: Vec<f64> = p
        .nets
        .iter()
        .flat_map(|n| n.params.iter())
        .flat_map(|t| t.data().iter().map(|&x| x as f64))
        .collect();
    v.extend(p.x.data().iter().map(|&x| x as f64));
    v
}

fn eval64(case: LossCase, p: &Problem, flat: &[f64]) -> f64 {
    let rows = p.x.rows();
    let mut cursor = 0;
    let mut per_net = Vec::new();
    for net in &p.nets {
        let params: Vec<Vec<f64>> = net
            .params
            .iter()
            .map(|t| {
                let s = flat[cursor..cursor + t.len()].to_vec();
                cursor += t.len();
                s
            })
            .collect();
        per_net.push((net.sizes().to_vec(), params));
    }
    let x = &flat[cursor..];
    let outs: Vec<Vec<f64>> = per_net.iter().map(|(s, ps)| forward64(s, ps, x, rows)).collect();
    loss64(case, &outs, p)
}

/// Relative gradient error for one case and seed.
pub fn check(case: LossCase, seed: u64) -> Result<f64> {
    let p = draw(case, seed)?;

    let mut g = Graph::new();
    let x = g.param(&p.x);
    let mut outs = Vec::new();
    let mut param_vars = Vec::new();
    for net in &p.nets {
        let (y, vars) = net.forward(&mut g, x, Mode::Train)?;
        outs.push(y);
        param_vars.extend(vars.0);
    }
    let loss = tape_loss(case, &mut g, &outs, &p);
    let grads = g.backward(loss)?;
    let mut tape: Vec<f64> = param_vars
        .iter()
        .flat_map(|&v| grads.wrt(v))
        .map(|v| v as f64)
        .collect();
    tape.extend(grads.wrt(x).iter().map(|&v| v as f64));

    let flat = flatten(&p);
    let h = 1e-6;
    let mut fd = Vec::with_capacity(flat.len());
    let mut probe = flat.clone();
    for i in 0..flat.len() {
        probe[i] = flat[i] + h;
        let up = eval64(case, &p, &probe);
        probe[i] = flat[i] - h;
        let down = eval64(case, &p, &probe);
        probe[i] = flat[i];
        fd.push((up - down) / (2.0 * h));
    }
    let diff: f64 = tape.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(diff / norm.max(1e-6))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_loss_on_a_few_seeds() {
        for case in LossCase::ALL {
            for seed in 0..5 {
                let err = check(case, seed).unwrap();
                assert!(err < 1e-3, "{case:?} seed {seed}: {err:e}");
            }
        }
    }

    #[test]
    fn oracle_agrees_with_tape_forward() {
        for case in LossCase::ALL {
            let p = draw(case, 7).unwrap();
            let mut g = Graph::new();
            let x = g.constant(p.x.clone());
            let outs: Vec<Var> = p
                .nets
                .iter()
                .map(|n| n.forward(&mut g, x, Mode::Frozen).unwrap().0)
                .collect();
            let loss = tape_loss(case, &mut g, &outs, &p);
            let tape = g.value(loss).item().unwrap() as f64;
            let oracle = eval64(case, &p, &flatten(&p));
            assert!(
                (tape - oracle).abs() < 1e-4 * (1.0 + oracle.abs()),
                "{case:?}: {tape} vs {oracle}"
            );
        }
    }
}
