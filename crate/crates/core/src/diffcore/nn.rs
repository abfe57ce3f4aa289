//! Fully connected networks built on the graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MinError, Result};

use super::adam::{AdamConfig, AdamState};
use super::graph::{Gradients, Graph, NodeId};
use super::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        match self {
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu(s) => g.leaky_relu(x, s),
            Activation::Tanh => g.tanh(x),
        }
    }
}

/// Multi-layer perceptron with a linear output layer. Weights are stored as
/// `in x out` matrices and biases as `1 x out` rows.
#[derive(Debug, Clone)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<(String, Tensor)>,
}

impl Mlp {
    /// PyTorch-style uniform init, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(prefix: &str, sizes: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(MinError::invalid(format!("mlp sizes must be >= 2 positive entries, got {sizes:?}")));
        }
        let mut params = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let wd = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            let bd = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            params.push((format!("{prefix}.{i}.weight"), Tensor::from_parts(vec![fan_in, fan_out], wd)));
            params.push((format!("{prefix}.{i}.bias"), Tensor::from_parts(vec![1, fan_out], bd)));
        }
        Ok(Mlp { sizes: sizes.to_vec(), activation, params })
    }

    pub fn zero_output_layer(&mut self) {
        let n = self.params.len();
        for (_, t) in &mut self.params[n - 2..] {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().map(|(_, t)| t)
    }

    /// Replaces parameters from checkpoint entries, matching by name and shape.
    pub fn load_params(&mut self, entries: &[(String, Tensor)]) -> Result<()> {
        for (name, t) in &mut self.params {
            let (_, src) = entries
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| MinError::ModelMismatch(format!("checkpoint lacks {name}")))?;
            if src.shape() != t.shape() {
                return Err(MinError::ModelMismatch(format!("{name}: {:?} vs {:?}", src.shape(), t.shape())));
            }
            *t = src.clone();
        }
        Ok(())
    }

    /// Copies the parameters onto the graph. Trainable copies receive gradients.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<NodeId> {
        self.params
            .iter()
            .map(|(_, t)| if trainable { g.param(t.clone()) } else { g.input(t.clone()) })
            .collect()
    }

    pub fn forward(&self, g: &mut Graph, bound: &[NodeId], x: NodeId) -> Result<NodeId> {
        let layers = bound.len() / 2;
        let mut h = x;
        for i in 0..layers {
            let z = g.matmul(h, bound[2 * i])?;
            h = g.add(z, bound[2 * i + 1])?;
            if i + 1 < layers {
                h = self.activation.apply(g, h)?;
            }
        }
        Ok(h)
    }

    /// Plain evaluation without recording gradients.
    pub fn eval(&self, x: Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, false);
        let xi = g.input(x);
        let out = self.forward(&mut g, &bound, xi)?;
        Ok(g.value(out).clone())
    }
}

/// An MLP paired with its optimizer state.
#[derive(Debug, Clone)]
pub struct TrainableMlp {
    pub net: Mlp,
    pub adam: AdamState,
}

impl TrainableMlp {
    pub fn new(net: Mlp, config: AdamConfig) -> Self {
        let adam = AdamState::new(net.tensors(), config);
        TrainableMlp { net, adam }
    }

    pub fn apply(&mut self, grads: &mut Gradients, bound: &[NodeId]) -> Result<()> {
        let gs: Vec<Tensor> = bound
            .iter()
            .zip(self.net.tensors())
            .map(|(&id, t)| grads.take(id).unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect();
        self.adam.step(self.net.tensors_mut(), &gs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn forward_shapes_and_bad_sizes() {
        let net = Mlp::new("m", &[3, 5, 2], Activation::Relu, &mut seeded(0)).unwrap();
        let out = net.eval(Tensor::matrix(4, 3, vec![0.1; 12]).unwrap()).unwrap();
        assert_eq!(out.shape(), &[4, 2]);
        assert!(Mlp::new("m", &[3], Activation::Relu, &mut seeded(0)).is_err());
        assert!(Mlp::new("m", &[3, 0, 1], Activation::Relu, &mut seeded(0)).is_err());
    }

    #[test]
    fn zero_output_layer_gives_zero_output() {
        let mut net = Mlp::new("m", &[2, 8, 1], Activation::Tanh, &mut seeded(1)).unwrap();
        net.zero_output_layer();
        let out = net.eval(Tensor::matrix(3, 2, vec![0.3, -1.0, 2.0, 0.5, 0.0, 1.0]).unwrap()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn regression_fits_a_line() {
        let mut rng = seeded(2);
        let net = Mlp::new("m", &[1, 16, 1], Activation::Tanh, &mut rng).unwrap();
        let mut model = TrainableMlp::new(net, AdamConfig { lr: 1e-2, ..AdamConfig::default() });
        let xs: Vec<f64> = (0..32).map(|i| i as f64 / 16.0 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 0.2).collect();
        let mut last = f64::INFINITY;
        for _ in 0..500 {
            let mut g = Graph::new();
            let bound = model.net.bind(&mut g, true);
            let x = g.input(Tensor::matrix(32, 1, xs.clone()).unwrap());
            let y = g.input(Tensor::matrix(32, 1, ys.clone()).unwrap());
            let p = model.net.forward(&mut g, &bound, x).unwrap();
            let d = g.sub(p, y).unwrap();
            let sq = g.mul(d, d).unwrap();
            let loss = g.mean(sq).unwrap();
            last = g.value(loss).item();
            let mut grads = g.backward(loss).unwrap();
            model.apply(&mut grads, &bound).unwrap();
        }
        assert!(last < 1e-3, "final loss {last}");
    }
}
