use serde::{Deserialize, Serialize};

use super::data::StaticDataSpec;
use crate::nn::Tensor;
use crate::theory::jsd;
use crate::{Error, Result};

/// Support radius in units of the mode stddev.
pub const SUPPORT_K: f32 = 4.0;
/// Histogram bins for 1D data; 2D data uses a 10 x 10 grid.
pub const HIST_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportMetrics {
    pub in_support_rate: f64,
    pub primary_mean_f: f64,
    pub data_mean_f: f64,
    pub mixture_jsd_estimate: f64,
}

/// Binning shared by every histogram of one dataset: `[min - 1, max + 1]`
/// of the data along each axis, out-of-range samples go to the edge bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Binning {
    lo: Vec<f32>,
    hi: Vec<f32>,
    per_axis: usize,
}

impl Binning {
    pub fn for_data(data: &Tensor) -> Result<Self> {
        let dim = data.cols();
        if data.rows() == 0 || !(dim == 1 || dim == 2) {
            return Err(Error::Contract("histograms need non-empty 1D or 2D samples".into()));
        }
        let mut lo = vec![f32::INFINITY; dim];
        let mut hi = vec![f32::NEG_INFINITY; dim];
        for row in data.data().chunks(dim) {
            for d in 0..dim {
                lo[d] = lo[d].min(row[d]);
                hi[d] = hi[d].max(row[d]);
            }
        }
        Ok(Self {
            lo: lo.iter().map(|v| v - 1.0).collect(),
            hi: hi.iter().map(|v| v + 1.0).collect(),
            per_axis: if dim == 1 { HIST_BINS } else { 10 },
        })
    }

    pub fn bins(&self) -> usize {
        self.per_axis.pow(self.lo.len() as u32)
    }

    pub fn range(&self, axis: usize) -> (f32, f32) {
        (self.lo[axis], self.hi[axis])
    }

    fn index(&self, x: &[f32]) -> usize {
        let mut idx = 0;
        for d in 0..self.lo.len() {
            let t = (x[d] - self.lo[d]) / (self.hi[d] - self.lo[d]);
            let b = if t.is_nan() {
                0
            } else {
                ((t * self.per_axis as f32).floor().max(0.0) as usize).min(self.per_axis - 1)
            };
            idx = idx * self.per_axis + b;
        }
        idx
    }

    /// Normalized histogram of `samples`.
    pub fn histogram(&self, samples: &Tensor) -> Result<Vec<f64>> {
        let dim = self.lo.len();
        if samples.cols() != dim || samples.rows() == 0 {
            return Err(Error::Dimension(format!(
                "expected non-empty [n, {dim}] samples, got {:?}",
                samples.shape()
            )));
        }
        let mut h = vec![0.0; self.bins()];
        for row in samples.data().chunks(dim) {
            h[self.index(row)] += 1.0;
        }
        let n = samples.rows() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        Ok(h)
    }
}

/// Histogram JSD between two sample sets under the binning of `data`.
pub fn histogram_jsd(data: &Tensor, other: &Tensor) -> Result<f64> {
    let bins = Binning::for_data(data)?;
    jsd(&bins.histogram(data)?, &bins.histogram(other)?)
}

/// Fraction of rows of `samples` within `SUPPORT_K` stddevs of some mode.
pub fn in_support_rate(samples: &Tensor, spec: &StaticDataSpec) -> f64 {
    let dim = spec.dim();
    let r2 = (SUPPORT_K * spec.mode_stddev).powi(2);
    let inside = samples
        .data()
        .chunks(dim)
        .filter(|x| {
            spec.mode_centers
                .iter()
                .any(|c| c.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f32>() <= r2)
        })
        .count();
    inside as f64 / samples.rows().max(1) as f64
}

pub fn mean_objective(samples: &Tensor, spec: &StaticDataSpec) -> f64 {
    let dim = spec.dim();
    let total: f64 = samples.data().chunks(dim).map(|x| spec.objective.value(x)).sum();
    total / samples.rows().max(1) as f64
}

/// Support and matching metrics. `mixture` is whatever the discriminator
/// sees as fake: primary and auxiliary samples pooled in equal numbers, or
/// primary samples alone.
pub fn eval_support_metrics(
    data: &Tensor,
    primary: &Tensor,
    mixture: &Tensor,
    spec: &StaticDataSpec,
) -> Result<SupportMetrics> {
    let dim = spec.dim();
    for (name, t) in [("data", data), ("primary", primary), ("mixture", mixture)] {
        if t.rows() == 0 || t.cols() != dim {
            return Err(Error::Dimension(format!(
                "{name} samples must be non-empty [n, {dim}], got {:?}",
                t.shape()
            )));
        }
    }
    Ok(SupportMetrics {
        in_support_rate: in_support_rate(primary, spec),
        primary_mean_f: mean_objective(primary, spec),
        data_mean_f: mean_objective(data, spec),
        mixture_jsd_estimate: histogram_jsd(data, mixture)?,
    })
}

#[cfg(test)]
mod tests {
    use super::super::data::{make_bimodal_data, Objective};
    use super::*;

    fn spec() -> StaticDataSpec {
        StaticDataSpec::one_dimensional(&[-1.0, 1.0], Objective::Linear)
    }

    #[test]
    fn data_samples_are_in_support() {
        let s = spec();
        let x = make_bimodal_data(&s, 0).unwrap();
        let m = eval_support_metrics(&x, &x, &x, &s).unwrap();
        assert!(m.in_support_rate >= 0.9999);
        assert_eq!(m.mixture_jsd_estimate, 0.0);
        assert!(m.data_mean_f.abs() < 0.05);
    }

    #[test]
    fn far_point_is_out_of_support() {
        let s = spec();
        let far = Tensor::full(&[100, 1], 1.0 + 10.0 * s.mode_stddev);
        assert_eq!(in_support_rate(&far, &s), 0.0);
    }

    #[test]
    fn independent_data_draws_have_small_jsd() {
        let s = spec();
        let a = make_bimodal_data(&s, 1).unwrap();
        let b = make_bimodal_data(&s, 2).unwrap();
        let j = histogram_jsd(&a, &b).unwrap();
        assert!(j < 0.01, "{j}");
    }

    #[test]
    fn one_mode_against_two_is_far() {
        let s = spec();
        let a = make_bimodal_data(&s, 1).unwrap();
        let right = StaticDataSpec::one_dimensional(&[1.0], Objective::Linear);
        let b = make_bimodal_data(&right, 2).unwrap();
        let j = histogram_jsd(&a, &b).unwrap();
        // Half of the data mass is disjoint from `b`; the exact JSD is about 0.216.
        assert!(j > 0.2, "{j}");
    }

    #[test]
    fn two_dimensional_grid() {
        let s = StaticDataSpec {
            mode_centers: vec![vec![0.0, 0.0], vec![1.0, 1.0]],
            ..spec()
        };
        let x = make_bimodal_data(&s, 4).unwrap();
        let b = Binning::for_data(&x).unwrap();
        assert_eq!(b.bins(), 100);
        let h = b.histogram(&x).unwrap();
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn outliers_land_in_edge_bins() {
        let x = make_bimodal_data(&spec(), 0).unwrap();
        let b = Binning::for_data(&x).unwrap();
        let out = Tensor::matrix(2, 1, vec![-100.0, 100.0]).unwrap();
        let h = b.histogram(&out).unwrap();
        assert_eq!(h[0], 0.5);
        assert_eq!(h[HIST_BINS - 1], 0.5);
    }
}
