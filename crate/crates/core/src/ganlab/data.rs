use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::nn::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Secondary objective scored on generator samples. Values are to be
/// maximized or minimized depending on the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Objective {
    /// `f ≡ 0`; the game reduces to plain distribution matching.
    Zero,
    /// Sum of coordinates.
    Linear,
    /// Negative Euclidean distance to `target`.
    NegDistance { target: Vec<f32> },
    /// `sigmoid(sharpness * (sum(x) - threshold))`, a differentiable step.
    Step { threshold: f32, sharpness: f32 },
}

const DIST_EPS: f32 = 1e-8;

impl Objective {
    /// Parses the command-line names `zero`, `linear`, `neg-distance` and `step`.
    /// `neg-distance` targets the origin and `step` switches at 0.
    pub fn named(name: &str, dim: usize) -> Result<Self> {
        match name {
            "zero" => Ok(Self::Zero),
            "linear" => Ok(Self::Linear),
            "neg-distance" => Ok(Self::NegDistance { target: vec![0.0; dim] }),
            "step" => Ok(Self::Step {
                threshold: 0.0,
                sharpness: 10.0,
            }),
            other => Err(Error::Contract(format!("unknown objective `{other}`"))),
        }
    }

    pub fn value(&self, x: &[f32]) -> f64 {
        let sum: f64 = x.iter().map(|&v| v as f64).sum();
        match self {
            Self::Zero => 0.0,
            Self::Linear => sum,
            Self::NegDistance { target } => {
                let s: f64 = x.iter().zip(target).map(|(&a, &t)| ((a - t) as f64).powi(2)).sum();
                -(s + DIST_EPS as f64).sqrt()
            }
            Self::Step { threshold, sharpness } => {
                1.0 / (1.0 + (-(*sharpness as f64) * (sum - *threshold as f64)).exp())
            }
        }
    }

    /// Per-row objective of `x: [n, dim]` on the tape, shape `[n, 1]`.
    pub fn on_tape(&self, g: &mut Graph, x: Var) -> Var {
        let n = g.shape(x)[0];
        match self {
            Self::Zero => g.constant(Tensor::zeros(&[n, 1])),
            Self::Linear => g.sum_cols(x),
            Self::NegDistance { target } => {
                let t: Vec<f32> = (0..n).flat_map(|_| target.iter().copied()).collect();
                let t = g.constant(Tensor::matrix(n, target.len(), t).unwrap());
                let d = g.sub(x, t);
                let sq = g.square(d);
                let s = g.sum_cols(sq);
                let s = g.add_scalar(s, DIST_EPS);
                let log = g.log(s);
                let half = g.mul_scalar(log, 0.5);
                let dist = g.exp(half);
                g.neg(dist)
            }
            Self::Step { threshold, sharpness } => {
                let s = g.sum_cols(x);
                let s = g.add_scalar(s, -threshold);
                let s = g.mul_scalar(s, *sharpness);
                g.sigmoid(s)
            }
        }
    }
}

/// An isotropic Gaussian mixture in one or two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticDataSpec {
    pub mode_centers: Vec<Vec<f32>>,
    pub mode_weights: Vec<f64>,
    pub mode_stddev: f32,
    pub sample_count: usize,
    pub objective: Objective,
}

impl StaticDataSpec {
    /// Equal-weight 1D modes with stddev 0.1 and 10k samples.
    pub fn one_dimensional(centers: &[f32], objective: Objective) -> Self {
        let k = centers.len().max(1);
        Self {
            mode_centers: centers.iter().map(|&c| vec![c]).collect(),
            mode_weights: vec![1.0 / k as f64; centers.len()],
            mode_stddev: 0.1,
            sample_count: 10_000,
            objective,
        }
    }

    pub fn dim(&self) -> usize {
        self.mode_centers.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        if self.mode_centers.is_empty() || self.mode_centers.len() != self.mode_weights.len() {
            return fail("need one weight per mode and at least one mode".into());
        }
        let dim = self.dim();
        if !(dim == 1 || dim == 2) || self.mode_centers.iter().any(|c| c.len() != dim) {
            return fail("mode centers must all be 1D or all be 2D".into());
        }
        if self.mode_centers.iter().flatten().any(|v| !v.is_finite()) {
            return fail("mode centers must be finite".into());
        }
        if self.mode_weights.iter().any(|&w| !(w >= 0.0)) || (self.mode_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return fail(format!(
                "mode weights {:?} must be non-negative and sum to 1",
                self.mode_weights
            ));
        }
        if !(self.mode_stddev > 0.0) || !self.mode_stddev.is_finite() {
            return fail("mode_stddev must be positive".into());
        }
        if self.sample_count < 1000 {
            return fail(format!("sample_count {} is below 1000", self.sample_count));
        }
        if let Objective::NegDistance { target } = &self.objective {
            if target.len() != dim {
                return fail(format!(
                    "distance target has {} coordinates, data has {dim}",
                    target.len()
                ));
            }
        }
        Ok(())
    }

    fn pick_mode<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.mode_weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.mode_weights.len() - 1
    }
}

/// `sample_count` mixture samples as a `[n, dim]` tensor, deterministic in `seed`.
pub fn make_bimodal_data(spec: &StaticDataSpec, seed: u64) -> Result<Tensor> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = spec.dim();
    let mut data = Vec::with_capacity(spec.sample_count * dim);
    for _ in 0..spec.sample_count {
        let m = spec.pick_mode(&mut rng);
        for &c in &spec.mode_centers[m] {
            let z: f32 = rng.sample(StandardNormal);
            data.push(c + spec.mode_stddev * z);
        }
    }
    Tensor::matrix(spec.sample_count, dim, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn density(spec: &StaticDataSpec, x: f64) -> f64 {
        let s = spec.mode_stddev as f64;
        spec.mode_centers
            .iter()
            .zip(&spec.mode_weights)
            .map(|(c, w)| {
                w * (-(x - c[0] as f64).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            })
            .sum()
    }

    #[test]
    fn single_mode_mean() {
        let spec = StaticDataSpec::one_dimensional(&[0.0], Objective::Zero);
        let x = make_bimodal_data(&spec, 3).unwrap();
        let mean = x.data().iter().map(|&v| v as f64).sum::<f64>() / x.len() as f64;
        assert!(mean.abs() < 0.01, "{mean}");
    }

    #[test]
    fn symmetric_modes_split_evenly() {
        let spec = StaticDataSpec::one_dimensional(&[-1.0, 1.0], Objective::Linear);
        let x = make_bimodal_data(&spec, 11).unwrap();
        let frac = x.data().iter().filter(|&&v| v > 0.0).count() as f64 / x.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn histogram_matches_density() {
        // Bin probabilities by Simpson integration of the analytic density;
        // 40 bins, chi-square against the 0.999 quantile for 39 dof (~72.1).
        let spec = StaticDataSpec {
            mode_weights: vec![0.3, 0.7],
            sample_count: 20_000,
            mode_stddev: 0.25,
            ..StaticDataSpec::one_dimensional(&[-1.0, 1.0], Objective::Zero)
        };
        let x = make_bimodal_data(&spec, 5).unwrap();
        let (lo, hi, bins) = (-2.5f64, 2.5f64, 40usize);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0f64; bins];
        for &v in x.data() {
            let b = ((v as f64 - lo) / width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1.0;
            }
        }
        let n = x.len() as f64;
        let mut chi2 = 0.0;
        for (b, &obs) in counts.iter().enumerate() {
            let a = lo + b as f64 * width;
            let steps = 64;
            let h = width / steps as f64;
            let mut p = density(&spec, a) + density(&spec, a + width);
            for k in 1..steps {
                p += density(&spec, a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            let expected = n * p * h / 3.0;
            if expected > 5.0 {
                chi2 += (obs - expected).powi(2) / expected;
            }
        }
        assert!(chi2 < 72.1, "chi2 {chi2}");
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = StaticDataSpec::one_dimensional(&[-1.0, 1.0], Objective::Linear);
        assert_eq!(
            make_bimodal_data(&spec, 1).unwrap(),
            make_bimodal_data(&spec, 1).unwrap()
        );
        assert_ne!(
            make_bimodal_data(&spec, 1).unwrap(),
            make_bimodal_data(&spec, 2).unwrap()
        );
    }

    #[test]
    fn validation() {
        let mut spec = StaticDataSpec::one_dimensional(&[-1.0, 1.0], Objective::Linear);
        spec.mode_weights = vec![0.5, 0.6];
        assert!(spec.validate().is_err());
        let mut spec = StaticDataSpec::one_dimensional(&[0.0], Objective::Linear);
        spec.sample_count = 999;
        assert!(spec.validate().is_err());
        let spec = StaticDataSpec::one_dimensional(&[0.0], Objective::NegDistance { target: vec![0.0, 0.0] });
        assert!(spec.validate().is_err());
    }

    #[test]
    fn tape_objective_matches_scalar() {
        let x = Tensor::matrix(3, 2, vec![0.1, -0.4, 1.0, 2.0, -3.0, 0.5]).unwrap();
        for f in [
            Objective::Zero,
            Objective::Linear,
            Objective::NegDistance { target: vec![0.5, 0.5] },
            Objective::Step {
                threshold: 0.2,
                sharpness: 10.0,
            },
        ] {
            let mut g = Graph::new();
            let v = g.constant(x.clone());
            let y = f.on_tape(&mut g, v);
            for r in 0..3 {
                let want = f.value(&x.data()[2 * r..2 * r + 2]);
                assert!((g.value(y).data()[r] as f64 - want).abs() < 1e-5);
            }
        }
    }
}
