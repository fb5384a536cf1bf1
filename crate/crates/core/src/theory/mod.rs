//! Exact optima of the single- and dual-generator objectives on a finite
//! sample space.
//!
//! Everything here works in f64 and minimizes the secondary objective `f`.
//! Callers that think in terms of maximization build the problem with
//! [`DiscreteProblem::maximizing`].

pub mod oracle;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::{Error, Result};

/// Probabilities below this are treated as outside the data support.
pub const SUPPORT_EPS: f64 = 1e-12;
const SIMPLEX_TOL: f64 = 1e-9;
const BISECTION_TOL: f64 = 1e-10;
const BISECTION_MAX_ITERS: usize = 200;

/// Compensated summation.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Contract(format!("{name} is empty")));
    }
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::Contract(format!("{name} has negative or non-finite entries")));
    }
    let s = kahan_sum(p.iter().copied());
    if (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Contract(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Finite sample space with data distribution `p_data` and objective `f`
/// (to be minimized).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteProblem {
    p_data: Vec<f64>,
    f: Vec<f64>,
}

impl DiscreteProblem {
    pub fn new(p_data: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        check_distribution(&p_data, "p_data")?;
        if f.len() != p_data.len() {
            return Err(Error::Dimension(format!(
                "p_data has {} entries, f has {}",
                p_data.len(),
                f.len()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::Contract("f must be finite".into()));
        }
        Ok(Self { p_data, f })
    }

    /// Problem whose `f` is to be maximized; stored negated.
    pub fn maximizing(p_data: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        Self::new(p_data, f.into_iter().map(|v| -v).collect())
    }

    /// Random instance: `p_data ~ Dirichlet(1)`, `f ~ U[-2, 2]`.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        let p_data = raw.iter().map(|v| v / total).collect();
        let f = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        Self { p_data, f }
    }

    pub fn n(&self) -> usize {
        self.p_data.len()
    }

    pub fn p_data(&self) -> &[f64] {
        &self.p_data
    }

    pub fn f(&self) -> &[f64] {
        &self.f
    }

    pub fn in_support(&self, i: usize) -> bool {
        self.p_data[i] >= SUPPORT_EPS
    }

    pub fn expected_f(&self, p: &[f64]) -> f64 {
        kahan_sum(p.iter().zip(&self.f).map(|(a, b)| a * b))
    }

    /// `2 JSD(p_data || g) + E_g[f]`.
    pub fn single_generator_objective(&self, g: &[f64]) -> f64 {
        2.0 * jsd_unchecked(&self.p_data, g) + self.expected_f(g)
    }
}

fn xlogy_ratio(x: f64, m: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * (x / m).ln()
    }
}

fn jsd_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let terms = p.iter().zip(q).map(|(&a, &b)| {
        let m = 0.5 * (a + b);
        0.5 * xlogy_ratio(a, m) + 0.5 * xlogy_ratio(b, m)
    });
    kahan_sum(terms).max(0.0)
}

/// Jensen-Shannon divergence in nats, `0 log 0 = 0`.
pub fn jsd(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("{} vs {} entries", p.len(), q.len())));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    Ok(jsd_unchecked(p, q))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleGeneratorSolution {
    pub p_g: Vec<f64>,
    pub nu: f64,
    pub objective_value: f64,
}

/// Unnormalized optimum for a fixed multiplier:
/// `p_g(x) = p_data(x) e^{-f(x)-nu} / (2 - e^{-f(x)-nu})` on the support.
pub fn generator_for_multiplier(prob: &DiscreteProblem, nu: f64) -> Vec<f64> {
    (0..prob.n())
        .map(|i| {
            if !prob.in_support(i) {
                return 0.0;
            }
            let c = (-prob.f[i] - nu).exp();
            prob.p_data[i] * c / (2.0 - c)
        })
        .collect()
}

/// `sum_i p_g[i](nu)`; strictly decreasing on `(nu_min, inf)`.
pub fn normalization_sum(prob: &DiscreteProblem, nu: f64) -> f64 {
    kahan_sum(generator_for_multiplier(prob, nu))
}

/// Smallest multiplier for which every in-support denominator is positive.
pub fn multiplier_lower_bound(prob: &DiscreteProblem) -> f64 {
    (0..prob.n())
        .filter(|&i| prob.in_support(i))
        .map(|i| -prob.f[i])
        .fold(f64::NEG_INFINITY, f64::max)
        - std::f64::consts::LN_2
}

/// Optimum of the single-generator objective, by bisection on the
/// normalization constraint.
pub fn solve_single_generator(prob: &DiscreteProblem) -> Result<SingleGeneratorSolution> {
    let lo_bound = multiplier_lower_bound(prob);
    if !lo_bound.is_finite() {
        return Err(Error::Numeric("cannot bracket the multiplier".into()));
    }
    // The sum diverges as nu -> lo_bound from above, so any point strictly
    // inside has sum > 1 once close enough.
    let mut lo = lo_bound;
    let mut step = 1.0;
    let mut hi = lo_bound + step;
    while normalization_sum(prob, hi) > 1.0 {
        lo = hi;
        step *= 2.0;
        hi = lo_bound + step;
        if !hi.is_finite() || step > 1e6 {
            return Err(Error::Numeric("failed to bracket the multiplier".into()));
        }
    }

    let mut nu = 0.5 * (lo + hi);
    for _ in 0..BISECTION_MAX_ITERS {
        nu = 0.5 * (lo + hi);
        let s = normalization_sum(prob, nu);
        if !s.is_finite() || s > 1.0 {
            lo = nu;
        } else {
            hi = nu;
        }
        if s.is_finite() && (s - 1.0).abs() < BISECTION_TOL {
            break;
        }
        if hi - lo <= f64::EPSILON * nu.abs().max(1.0) {
            break;
        }
    }
    let raw = generator_for_multiplier(prob, nu);
    let total = kahan_sum(raw.iter().copied());
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::Numeric(format!("normalization sum {total} at nu = {nu}")));
    }
    let p_g: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let objective_value = prob.single_generator_objective(&p_g);
    Ok(SingleGeneratorSolution {
        p_g,
        nu,
        objective_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSolution {
    pub p_g: Vec<f64>,
    pub p_aux: Vec<f64>,
    pub objective_value: f64,
}

impl DualSolution {
    pub fn mixture(&self) -> Vec<f64> {
        self.p_g.iter().zip(&self.p_aux).map(|(a, b)| 0.5 * (a + b)).collect()
    }
}

/// Optimal primary generator when the mixture must equal the data: fill the
/// in-support points in ascending order of `f` up to the cap `2 p_data`.
pub fn solve_dual_greedy(prob: &DiscreteProblem) -> DualSolution {
    let n = prob.n();
    let mut order: Vec<usize> = (0..n).filter(|&i| prob.in_support(i)).collect();
    // Stable sort keeps ascending index among equal f.
    order.sort_by(|&a, &b| prob.f[a].total_cmp(&prob.f[b]));

    let mut p_g = vec![0.0; n];
    let mut assigned: Vec<f64> = Vec::with_capacity(n);
    for &i in &order {
        let running = kahan_sum(assigned.iter().copied());
        let cap = 2.0 * prob.p_data[i];
        if running + cap < 1.0 {
            p_g[i] = cap;
            assigned.push(cap);
        } else {
            // Boundary point takes the remainder; everything after gets zero.
            p_g[i] = 1.0 - running;
            break;
        }
    }
    let p_aux: Vec<f64> = prob
        .p_data
        .iter()
        .zip(&p_g)
        .map(|(&p, &g)| (2.0 * p - g).max(0.0))
        .collect();
    let objective_value = prob.expected_f(&p_g);
    DualSolution {
        p_g,
        p_aux,
        objective_value,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// Stationarity residual per point; zero where `p_g` is zero.
    pub stationarity_residuals: Vec<f64>,
    /// Inequality multipliers; zero where `p_g` is positive.
    pub lambda: Vec<f64>,
    pub max_violation: f64,
}

/// Evaluates the KKT conditions of the single-generator problem at `sol`.
pub fn kkt_check(prob: &DiscreteProblem, sol: &SingleGeneratorSolution) -> KktReport {
    let n = prob.n();
    let mut residuals = vec![0.0; n];
    let mut lambda = vec![0.0; n];
    for i in 0..n {
        let (p, g) = (prob.p_data[i], sol.p_g[i]);
        // d/dg 2 JSD = log(2g / (p + g)); its limit at p = g = 0 is log 2.
        let log_ratio = if g > 0.0 {
            (2.0 * g / (p + g)).ln()
        } else if p > 0.0 {
            f64::NEG_INFINITY
        } else {
            std::f64::consts::LN_2
        };
        let derivative = log_ratio + prob.f[i] + sol.nu;
        if g > 0.0 {
            residuals[i] = derivative;
        } else {
            lambda[i] = derivative;
        }
    }
    let primal = (kahan_sum(sol.p_g.iter().copied()) - 1.0).abs();
    let max_violation = residuals
        .iter()
        .map(|r| r.abs())
        .chain(lambda.iter().map(|l| (-l).max(0.0)))
        .chain(std::iter::once(primal))
        .fold(0.0, f64::max);
    KktReport {
        stationarity_residuals: residuals,
        lambda,
        max_violation,
    }
}

/// Both optima on the two-action instance `p_data = (0.5, 0.5)`,
/// `f = (1.3, 0.7)` maximized. Expectations are reported in the maximization
/// convention.
#[derive(Debug, Clone, Serialize)]
pub struct Example1dReport {
    pub p_data: Vec<f64>,
    pub f: Vec<f64>,
    pub single_p_g: Vec<f64>,
    pub single_expected_f: f64,
    pub single_nu: f64,
    pub dual_p_g: Vec<f64>,
    pub dual_p_aux: Vec<f64>,
    pub dual_mixture: Vec<f64>,
    pub dual_expected_f: f64,
}

pub fn example_1d() -> Example1dReport {
    let p_data = vec![0.5, 0.5];
    let f = vec![1.3, 0.7];
    let prob = DiscreteProblem::maximizing(p_data.clone(), f.clone()).expect("fixed instance is valid");
    let single = solve_single_generator(&prob).expect("fixed instance brackets");
    let dual = solve_dual_greedy(&prob);
    Example1dReport {
        single_expected_f: -prob.expected_f(&single.p_g),
        single_nu: single.nu,
        single_p_g: single.p_g,
        dual_expected_f: -dual.objective_value,
        dual_mixture: dual.mixture(),
        dual_p_g: dual.p_g,
        dual_p_aux: dual.p_aux,
        p_data,
        f,
    }
}
