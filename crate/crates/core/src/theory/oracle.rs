//! Brute-force references for the closed-form solvers, plus the randomized
//! verification sweep behind `theory check`.
//!
//! None of these reuse the closed-form code paths: the single-generator
//! oracle is exponentiated-gradient descent on the simplex, the dual oracle
//! enumerates the vertices of the capped simplex.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use super::{kahan_sum, kkt_check, solve_dual_greedy, solve_single_generator, DiscreteProblem};
use crate::{Error, Result};

pub const MIRROR_RESTARTS: usize = 20;
pub const MIRROR_ITERS: usize = 10_000;
pub const MIRROR_STEP: f64 = 0.05;
pub const LP_MAX_N: usize = 12;

fn objective_gradient(prob: &DiscreteProblem, g: &[f64], out: &mut [f64]) {
    for i in 0..g.len() {
        let p = prob.p_data()[i];
        // d/dg 2 JSD(p || g) = log(2g / (p + g)), log 2 when p = 0.
        let log_ratio = if p > 0.0 {
            (2.0 * g[i] / (p + g[i])).ln()
        } else {
            std::f64::consts::LN_2
        };
        out[i] = log_ratio + prob.f()[i];
    }
}

/// Minimizes `2 JSD(p_data || g) + g·f` over the simplex with
/// exponentiated-gradient steps from random starting points.
pub fn oracle_single_generator(prob: &DiscreteProblem, seed: u64) -> Vec<f64> {
    let n = prob.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = prob.p_data().to_vec();
    let mut best_value = prob.single_generator_objective(&best);
    let mut grad = vec![0.0; n];

    for _ in 0..MIRROR_RESTARTS {
        let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = raw.iter().sum();
        let mut g: Vec<f64> = raw.iter().map(|v| v / total).collect();
        for _ in 0..MIRROR_ITERS {
            objective_gradient(prob, &g, &mut grad);
            // Shift by the max exponent for stability before normalizing.
            let shift = grad.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            for i in 0..n {
                g[i] *= (-MIRROR_STEP * (grad[i] - shift)).exp();
            }
            let z = kahan_sum(g.iter().copied());
            g.iter_mut().for_each(|v| *v /= z);
            let value = prob.single_generator_objective(&g);
            if value < best_value {
                best_value = value;
                best.copy_from_slice(&g);
            }
        }
    }
    best
}

/// Two-point problems only: scans `g = (t, 1 - t)` at the given resolution.
pub fn grid_search_n2(prob: &DiscreteProblem, resolution: f64) -> Vec<f64> {
    assert_eq!(prob.n(), 2, "grid search is for two-point problems");
    let steps = (1.0 / resolution).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let v = prob.single_generator_objective(&[t, 1.0 - t]);
        if v < best.0 {
            best = (v, t);
        }
    }
    vec![best.1, 1.0 - best.1]
}

/// Minimizes `E_p[f]` over `{0 <= p <= 2 p_data, sum p = 1}` by checking
/// every vertex: all coordinates but one sit at a bound.
pub fn oracle_dual_lp(prob: &DiscreteProblem) -> Result<Vec<f64>> {
    let n = prob.n();
    if n > LP_MAX_N {
        return Err(Error::Contract(format!(
            "vertex enumeration limited to n <= {LP_MAX_N}, got {n}"
        )));
    }
    let caps: Vec<f64> = prob.p_data().iter().map(|p| 2.0 * p).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut p = vec![0.0; n];
    for free in 0..n {
        let others: Vec<usize> = (0..n).filter(|&i| i != free).collect();
        for mask in 0u32..(1u32 << others.len()) {
            for (bit, &i) in others.iter().enumerate() {
                p[i] = if mask & (1 << bit) != 0 { caps[i] } else { 0.0 };
            }
            let rest = 1.0 - kahan_sum(others.iter().map(|&i| p[i]));
            if rest < -1e-12 || rest > caps[free] + 1e-12 {
                continue;
            }
            p[free] = rest.max(0.0);
            let value = prob.expected_f(&p);
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, p.clone()));
            }
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| Error::Numeric("no feasible vertex".into()))
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Tolerances used by [`verify_instances`].
pub const TV_TOL: f64 = 1e-3;
pub const KKT_TOL: f64 = 1e-6;
pub const LP_GAP_TOL: f64 = 1e-9;

/// Per-instance outcome of the randomized verification sweep.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceCheck {
    pub instance: usize,
    pub n: usize,
    pub nu: f64,
    pub tv_closed_form_vs_mirror: f64,
    pub max_stationarity_residual: f64,
    pub min_lambda: f64,
    pub greedy_objective: f64,
    pub lp_objective: f64,
    pub greedy_lp_gap: f64,
    pub pass: bool,
}

/// Draws `count` random problems with `n` uniform in `2..=max_n` and checks
/// both closed forms against their oracles.
pub fn verify_instances(count: usize, seed: u64, max_n: usize) -> Result<Vec<InstanceCheck>> {
    if !(2..=LP_MAX_N).contains(&max_n) {
        return Err(Error::Contract(format!("max-n must be in 2..={LP_MAX_N}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for instance in 0..count {
        let n = rng.random_range(2..=max_n);
        let prob = DiscreteProblem::random(n, &mut rng);
        let oracle_seed: u64 = rng.random();

        let sol = solve_single_generator(&prob)?;
        let mirror = oracle_single_generator(&prob, oracle_seed);
        let kkt = kkt_check(&prob, &sol);
        let max_res = kkt.stationarity_residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        let min_lambda = kkt.lambda.iter().copied().fold(f64::INFINITY, f64::min);

        let dual = solve_dual_greedy(&prob);
        let lp = oracle_dual_lp(&prob)?;
        let lp_objective = prob.expected_f(&lp);
        let gap = (dual.objective_value - lp_objective).abs();
        let tv = total_variation(&sol.p_g, &mirror);

        out.push(InstanceCheck {
            instance,
            n,
            nu: sol.nu,
            tv_closed_form_vs_mirror: tv,
            max_stationarity_residual: max_res,
            min_lambda,
            greedy_objective: dual.objective_value,
            lp_objective,
            greedy_lp_gap: gap,
            pass: tv < TV_TOL && max_res < KKT_TOL && min_lambda >= -1e-9 && gap <= LP_GAP_TOL,
        });
    }
    Ok(out)
}
