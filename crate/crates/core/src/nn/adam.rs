use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one list of parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        Self {
            config,
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update using the `grad` stored on each parameter.
    pub fn step(&mut self, params: &mut [Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            match &p.grad {
                Some(g) if g.len() == self.m[i].len() && p.len() == g.len() => {
                    if g.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Numeric(format!("non-finite gradient for parameter {i}")));
                    }
                }
                Some(g) => {
                    return Err(Error::Dimension(format!(
                        "parameter {i}: gradient length {} vs {}",
                        g.len(),
                        self.m[i].len()
                    )))
                }
                None => return Err(Error::Contract(format!("parameter {i} has no gradient"))),
            }
        }

        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let g = p.grad.take().unwrap();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Polyak averaging: `target <- (1 - tau) * target + tau * online`.
pub fn soft_update(target: &mut [Tensor], online: &[Tensor], tau: f32) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Contract(format!("tau must be in [0, 1], got {tau}")));
    }
    if target.len() != online.len() {
        return Err(Error::Dimension(format!(
            "{} target tensors vs {} online tensors",
            target.len(),
            online.len()
        )));
    }
    for (t, o) in target.iter().zip(online) {
        if t.shape() != o.shape() {
            return Err(Error::Dimension(format!(
                "soft_update: {:?} vs {:?}",
                t.shape(),
                o.shape()
            )));
        }
    }
    for (t, o) in target.iter_mut().zip(online) {
        for (tw, &ow) in t.data_mut().iter_mut().zip(o.data()) {
            *tw = (1.0 - tau) * *tw + tau * ow;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_grad(values: &[f32], grad: &[f32]) -> Tensor {
        let mut t = Tensor::new(vec![values.len()], values.to_vec()).unwrap();
        t.grad = Some(grad.to_vec());
        t
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![with_grad(&[1.0, -2.0], &[0.0, 0.0])];
        let mut adam = AdamState::new(&params, AdamConfig::default());
        adam.step(&mut params).unwrap();
        assert_eq!(params[0].data(), &[1.0, -2.0]);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn single_step_matches_hand_calculation() {
        // m = 0.1, v = 0.001, m_hat = 1, v_hat = 1,
        // delta = -3e-4 * 1 / (1 + 1e-8) = -2.99999997e-4
        let mut params = vec![with_grad(&[0.5], &[1.0])];
        let mut adam = AdamState::new(&params, AdamConfig::default());
        adam.step(&mut params).unwrap();
        let delta = params[0].data()[0] as f64 - 0.5;
        assert!((delta - (-2.999_999_97e-4)).abs() < 1e-7, "delta {delta}");
    }

    #[test]
    fn default_learning_rate() {
        assert_eq!(AdamConfig::default().learning_rate, 0.0003);
    }

    #[test]
    fn missing_or_mismatched_gradient_is_error() {
        let mut params = vec![Tensor::zeros(&[2])];
        let mut adam = AdamState::new(&params, AdamConfig::default());
        assert!(matches!(adam.step(&mut params), Err(Error::Contract(_))));
        params[0].grad = Some(vec![0.0; 3]);
        assert!(matches!(adam.step(&mut params), Err(Error::Dimension(_))));
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn soft_update_extremes() {
        let online = vec![Tensor::new(vec![2], vec![1.0, 2.0]).unwrap()];
        let mut target = vec![Tensor::new(vec![2], vec![-1.0, 0.0]).unwrap()];
        soft_update(&mut target, &online, 0.0).unwrap();
        assert_eq!(target[0].data(), &[-1.0, 0.0]);
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target[0].data(), online[0].data());
        assert!(matches!(
            soft_update(&mut target, &online, 1.5),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn soft_update_shrinks_gap_by_one_minus_tau() {
        let online = vec![Tensor::new(vec![3], vec![1.0, 2.0, -4.0]).unwrap()];
        let mut target = vec![Tensor::new(vec![3], vec![0.0, 0.0, 0.0]).unwrap()];
        let tau = 0.005;
        soft_update(&mut target, &online, tau).unwrap();
        for (t, o) in target[0].data().iter().zip(online[0].data()) {
            let gap = o - t;
            assert!((gap - (1.0 - tau) * o).abs() < 1e-6);
        }
    }
}
