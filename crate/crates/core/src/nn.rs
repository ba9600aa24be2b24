//! Small dense networks with hand-written backpropagation.
//!
//! Hidden layers use `tanh`, the output layer is linear. Networks here are a
//! few thousand parameters at most, so everything is plain `Vec<f64>`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// One affine map; `weights` is row-major `outputs x inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            row.iter().zip(x).fold(*b, |acc, (w, v)| acc + w * v)
        }));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Per-layer outputs recorded by [`Mlp::forward_cached`]; index 0 is the input.
#[derive(Clone, Debug)]
pub struct Activations {
    values: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.values.last().expect("activations are never empty")
    }

    pub fn input(&self) -> &[f64] {
        &self.values[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += scale * y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += scale * y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
    }
}

impl Mlp {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(contract(format!("invalid layer dims {dims:?}")));
        }
        Ok(Self {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(contract("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(contract(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(contract(format!("layer {i} input does not match previous output")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Floating-point operations of one forward pass: two per weight
    /// (multiply and accumulate, with the bias as the accumulator seed) plus
    /// one per hidden `tanh`.
    pub fn forward_flops(&self) -> u64 {
        let last = self.layers.len() - 1;
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let act = if i < last { l.outputs } else { 0 };
                (2 * l.weights.len() + act) as u64
            })
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut x = input.to_vec();
        let mut y = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut y);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<Activations> {
        self.check_input(input)?;
        let last = self.layers.len() - 1;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = Vec::with_capacity(layer.outputs);
            layer.affine(values.last().unwrap(), &mut y);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            values.push(y);
        }
        Ok(Activations { values })
    }

    /// Gradient of `<upstream, forward(input)>` with respect to every parameter.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<Gradients> {
        let acts = self.forward_cached(input)?;
        let mut grads = Gradients::zeros_like(self);
        self.accumulate_backward(&acts, upstream, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Adds `scale * d<upstream, output>/dparams` into `grads` and returns the
    /// gradient with respect to the input.
    pub fn accumulate_backward(
        &self,
        acts: &Activations,
        upstream: &[f64],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(contract(format!(
                "upstream length {} does not match output dim {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = upstream.iter().map(|u| u * scale).collect();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i < last {
                // tanh' = 1 - y^2
                for (d, y) in delta.iter_mut().zip(&acts.values[i + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let x = &acts.values[i];
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (w, xv) in row.iter_mut().zip(x) {
                    *w += d * xv;
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, w) in prev.iter_mut().zip(row) {
                    *p += d * w;
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    /// Returns a new network with parameters decremented by `lr * grads`.
    pub fn sgd_step(&self, grads: &Gradients, lr: f64) -> Result<Mlp> {
        let mut next = self.clone();
        next.apply_sgd(grads, lr)?;
        Ok(next)
    }

    pub fn apply_sgd(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != self.layers.len()
            || grads
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.inputs != l.inputs || g.outputs != l.outputs)
        {
            return Err(contract("gradient shape does not match network"));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric("non-finite gradient entry".into()));
        }
        for (l, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, d) in l.weights.iter_mut().zip(&g.weights) {
                *w -= lr * d;
            }
            for (b, d) in l.bias.iter_mut().zip(&g.bias) {
                *b -= lr * d;
            }
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(contract(format!(
                "input length {} does not match first layer dim {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Gradient of `log softmax(logits)[index]` with respect to the logits.
pub fn log_prob_grad(probs: &[f64], index: usize) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, p)| if i == index { 1.0 - p } else { -p })
        .collect()
}

pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
}

pub fn one_hot(index: usize, len: usize) -> Vec<f64> {
    let mut v = vec![0.0; len];
    v[index] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn zero_net_gives_uniform_softmax() {
        let net = Mlp::zeros(&[3, 5, 4]).unwrap();
        let out = net.forward(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.0; 4]);
        let p = softmax(&out);
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn single_layer_matmul() {
        let net = Mlp::from_layers(vec![Layer {
            inputs: 2,
            outputs: 2,
            weights: vec![1.0, 2.0, 3.0, 4.0],
            bias: vec![0.0, 0.0],
        }])
        .unwrap();
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), vec![3.0, 7.0]);
        assert_eq!(net.forward(&[1.0, 1.0]).unwrap(), net.forward(&[1.0, 1.0]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let net = Mlp::zeros(&[3, 2]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Contract(_))));
        assert!(matches!(
            net.backward(&[1.0, 2.0, 3.0], &[1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 6, 3], &mut rng).unwrap();
        let g = net.backward(&[0.1, 0.2, 0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(g.iter().all(|v| v == 0.0));
    }

    #[test]
    fn sgd_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(&[2, 3, 1], &mut rng).unwrap();
        let g = net.backward(&[0.5, -0.5], &[1.0]).unwrap();
        assert_eq!(net.sgd_step(&g, 0.0).unwrap(), net);
        assert_eq!(net.sgd_step(&g, 0.1).unwrap(), net.sgd_step(&g, 0.1).unwrap());

        // loss w^2 at w = 1 has gradient 2w = 2; one step of 0.1 gives 0.8
        let w = Mlp::from_layers(vec![Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![1.0],
            bias: vec![0.0],
        }])
        .unwrap();
        let mut grads = Gradients::zeros_like(&w);
        grads.layers[0].weights[0] = 2.0 * w.layers()[0].weights[0];
        let stepped = w.sgd_step(&grads, 0.1).unwrap();
        assert!((stepped.layers()[0].weights[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_numeric_error() {
        let net = Mlp::zeros(&[1, 1]).unwrap();
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].bias[0] = f64::NAN;
        assert!(matches!(net.sgd_step(&g, 0.1), Err(Error::Numeric(_))));
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[3, 7, 7, 2], &mut rng).unwrap();
        let x = [0.2, -0.7, 0.4];
        let up = [0.3, -1.1];
        let acts = net.forward_cached(&x).unwrap();
        let mut g = Gradients::zeros_like(&net);
        let dx = net.accumulate_backward(&acts, &up, 1.0, &mut g).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (dot(&up, &net.forward(&xp).unwrap()) - dot(&up, &net.forward(&xm).unwrap()))
                / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-8, "{fd} vs {}", dx[i]);
        }
    }

    #[test]
    fn flops_of_small_head() {
        let net = Mlp::zeros(&[3, 16, 16, 8]).unwrap();
        assert_eq!(net.forward_flops(), 2 * (3 * 16 + 16 * 16 + 16 * 8) + 32);
        assert_eq!(net.param_count(), 3 * 16 + 16 + 16 * 16 + 16 + 16 * 8 + 8);
    }

    #[test]
    fn sampling_and_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], &mut rng), 1);
        assert_eq!(argmax(&[0.2, 0.7, 0.7]), 1);
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
