use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

/// How an [`Mlp`]'s parameters enter a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Parameters are tracked leaves; their gradients can be read back.
    Train,
    /// Parameters are constants. Gradients still flow through to the input.
    Frozen,
}

/// Multi-layer perceptron; hidden layers use `activation`, the last layer is
/// linear.
///
/// `params` holds `[W0, b0, W1, b1, ...]` with `W_i: [sizes[i+1], sizes[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    pub params: Vec<Tensor>,
}

/// Graph handles for one forward pass, in the same order as `Mlp::params`.
#[derive(Debug, Clone)]
pub struct MlpVars(pub Vec<Var>);

impl Mlp {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Contract(format!("invalid layer sizes {sizes:?}")));
        }
        let mut params = Vec::with_capacity(2 * (sizes.len() - 1));
        for pair in sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f32).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            let b = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(Tensor::matrix(fan_out, fan_in, w)?);
            params.push(Tensor::new(vec![fan_out], b)?);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    /// Builds a network from explicit parameters, checking that shapes chain.
    pub fn from_params(sizes: &[usize], activation: Activation, params: Vec<Tensor>) -> Result<Self> {
        if sizes.len() < 2 || params.len() != 2 * (sizes.len() - 1) {
            return Err(Error::Dimension(format!(
                "{} parameter tensors for layer sizes {sizes:?}",
                params.len()
            )));
        }
        for (i, pair) in sizes.windows(2).enumerate() {
            if params[2 * i].shape() != [pair[1], pair[0]] || params[2 * i + 1].shape() != [pair[1]] {
                return Err(Error::Dimension(format!(
                    "layer {i}: weight {:?}, bias {:?}, expected [{}, {}] and [{}]",
                    params[2 * i].shape(),
                    params[2 * i + 1].shape(),
                    pair[1],
                    pair[0],
                    pair[1]
                )));
            }
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activation,
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Records a forward pass of `input: [batch, in]` on `g`.
    /// Puts the parameters on the tape once so several inputs can share them.
    pub fn bind(&self, g: &mut Graph, mode: Mode) -> MlpVars {
        MlpVars(
            self.params
                .iter()
                .map(|p| match mode {
                    Mode::Train => g.param(p),
                    Mode::Frozen => g.constant(p.clone()),
                })
                .collect(),
        )
    }

    /// Forward pass through parameters previously placed with [`bind`](Self::bind).
    pub fn apply(&self, g: &mut Graph, vars: &MlpVars, input: Var) -> Result<Var> {
        let shape = g.shape(input);
        if shape.len() != 2 || shape[1] != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects [batch, {}], got {shape:?}",
                self.input_dim()
            )));
        }
        let layers = self.sizes.len() - 1;
        let mut h = input;
        for i in 0..layers {
            h = g.linear(h, vars.0[2 * i], vars.0[2 * i + 1]);
            if i + 1 < layers {
                h = match self.activation {
                    Activation::Relu => g.relu(h),
                    Activation::Tanh => g.tanh(h),
                };
            }
        }
        g.check()?;
        Ok(h)
    }

    pub fn forward(&self, g: &mut Graph, input: Var, mode: Mode) -> Result<(Var, MlpVars)> {
        let vars = self.bind(g, mode);
        let out = self.apply(g, &vars, input)?;
        Ok((out, vars))
    }

    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let x = g.constant(input.clone());
        let (y, _) = self.forward(&mut g, x, Mode::Frozen)?;
        Ok(g.value(y).clone())
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Tensor::zero_grad);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weight_net_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(&[3, 4, 2], Activation::Tanh, &mut rng).unwrap();
        net.params.iter_mut().for_each(|p| p.data_mut().fill(0.0));
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 0.5]).unwrap();
        let y = net.predict(&x).unwrap();
        assert_eq!(y.shape(), &[2, 2]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_reproduces_input() {
        let w = Tensor::matrix(3, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::zeros(&[3]);
        let net = Mlp::from_params(&[3, 3], Activation::Relu, vec![w, b]).unwrap();
        let x = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, -0.5, 0.25, 7.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap().data(), x.data());
    }

    #[test]
    fn weight_shapes_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[5, 7, 3, 1], Activation::Relu, &mut rng).unwrap();
        let shapes: Vec<_> = net.params.iter().map(|p| p.shape().to_vec()).collect();
        assert_eq!(
            shapes,
            vec![vec![7, 5], vec![7], vec![3, 7], vec![3], vec![1, 3], vec![1]]
        );
        let bound = 1.0 / 5f32.sqrt();
        assert!(net.params[0].data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn wrong_input_width_is_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[3, 2], Activation::Relu, &mut rng).unwrap();
        let x = Tensor::matrix(1, 4, vec![0.0; 4]).unwrap();
        assert!(matches!(net.predict(&x), Err(Error::Dimension(_))));
    }

    #[test]
    fn mismatched_params_are_rejected() {
        let w = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let b = Tensor::zeros(&[3]);
        assert!(Mlp::from_params(&[3, 2], Activation::Relu, vec![w, b]).is_err());
    }
}
