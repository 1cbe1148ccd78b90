//! Dense feedforward networks with hand-written backpropagation.
//!
//! Parameters are stored per layer as a row-major `fan_out x fan_in` weight
//! matrix plus a bias vector. The backward pass is shared by the critic
//! (value regression) and the actor (log-probability ascent).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::A2cError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Softmax,
}

impl Activation {
    fn apply(self, z: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => z.to_vec(),
            Activation::Relu => z.iter().map(|&v| v.max(0.0)).collect(),
            Activation::Tanh => z.iter().map(|&v| v.tanh()).collect(),
            Activation::Softmax => softmax(z),
        }
    }

    /// Pulls `grad` (w.r.t. the activation output `a`) back through the
    /// activation, given its input `z`.
    fn backward(self, z: &[f64], a: &[f64], grad: &[f64]) -> Vec<f64> {
        match self {
            Activation::Identity => grad.to_vec(),
            Activation::Relu => z
                .iter()
                .zip(grad)
                .map(|(&zi, &g)| if zi > 0.0 { g } else { 0.0 })
                .collect(),
            Activation::Tanh => a.iter().zip(grad).map(|(&ai, &g)| g * (1.0 - ai * ai)).collect(),
            Activation::Softmax => {
                let dot: f64 = a.iter().zip(grad).map(|(ai, g)| ai * g).sum();
                a.iter().zip(grad).map(|(&ai, &g)| ai * (g - dot)).collect()
            }
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major, `weights[o * fan_in + i]`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    fn zeroed(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self {
            fan_in,
            fan_out,
            weights: vec![0.0; fan_in * fan_out],
            biases: vec![0.0; fan_out],
            activation,
        }
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.fan_in)
            .zip(&self.biases)
            .map(|(row, &b)| b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
            .collect()
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `inputs[l]` is the input of layer `l`.
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    /// Output-layer values before the output activation (logits for a
    /// softmax head).
    pub fn logits(&self) -> &[f64] {
        self.pre.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Parameter gradients, laid out exactly like the network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn l2_norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            layer.weights.iter_mut().chain(layer.biases.iter_mut()).for_each(|g| *g *= factor);
        }
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let norm = self.l2_norm();
        if norm > max_norm {
            self.scale(max_norm / norm);
        }
    }

    /// Same ordering as [`FeedForwardNet::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.iter().collect()
    }

    fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedForwardNet {
    layers: Vec<Layer>,
}

impl FeedForwardNet {
    /// Builds a net over `dims = [input, hidden..., output]` with weights drawn
    /// uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` and zero biases.
    pub fn new<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self, A2cError> {
        let mut net = Self::zeroed(dims, hidden, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeroed(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self, A2cError> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(A2cError::InvalidLayout(format!(
                "layer dims must list at least input and output widths, all positive (got {dims:?})"
            )));
        }
        let n = dims.len() - 1;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| Layer::zeroed(w[0], w[1], if l + 1 == n { output } else { hidden }))
            .collect();
        Ok(Self { layers })
    }

    /// Assembles a net from explicit layers, checking that shapes chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, A2cError> {
        if layers.is_empty() {
            return Err(A2cError::InvalidLayout("no layers".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.fan_in == 0
                || layer.fan_out == 0
                || layer.weights.len() != layer.fan_in * layer.fan_out
                || layer.biases.len() != layer.fan_out
            {
                return Err(A2cError::InvalidLayout(format!("layer {l} has inconsistent shape")));
            }
            if l > 0 && layers[l - 1].fan_out != layer.fan_in {
                return Err(A2cError::InvalidLayout(format!(
                    "layer {l} expects {} inputs but layer {} emits {}",
                    layer.fan_in,
                    l - 1,
                    layers[l - 1].fan_out
                )));
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

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn output_activation(&self) -> Activation {
        self.layers[self.layers.len() - 1].activation
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.fan_out))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), A2cError> {
        if x.len() != self.input_dim() {
            return Err(A2cError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, A2cError> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        for layer in &self.layers {
            a = layer.activation.apply(&layer.pre_activation(&a));
        }
        Ok(a)
    }

    pub fn trace(&self, x: &[f64]) -> Result<Trace, A2cError> {
        self.check_input(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for layer in &self.layers {
            let z = layer.pre_activation(&a);
            let next = layer.activation.apply(&z);
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok(Trace { inputs, pre, output: a })
    }

    /// Gradients of `<grad_output, net(x)>` w.r.t. every parameter.
    pub fn backward(&self, trace: &Trace, grad_output: &[f64]) -> Gradients {
        let last = self.layers.len() - 1;
        let grad_z = self.layers[last].activation.backward(&trace.pre[last], &trace.output, grad_output);
        self.backward_from_logits(trace, &grad_z)
    }

    /// Like [`backward`](Self::backward) but `grad_z` is taken w.r.t. the
    /// output layer's pre-activation, bypassing the output activation.
    pub fn backward_from_logits(&self, trace: &Trace, grad_z: &[f64]) -> Gradients {
        let mut layers: Vec<LayerGradient> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_z.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &trace.inputs[l];
            let mut weights = vec![0.0; layer.weights.len()];
            for (row, &d) in weights.chunks_exact_mut(layer.fan_in).zip(&delta) {
                if d != 0.0 {
                    row.iter_mut().zip(input).for_each(|(w, &x)| *w = d * x);
                }
            }
            let biases = delta.clone();
            if l > 0 {
                let mut grad_in = vec![0.0; layer.fan_in];
                for (row, &d) in layer.weights.chunks_exact(layer.fan_in).zip(&delta) {
                    if d != 0.0 {
                        grad_in.iter_mut().zip(row).for_each(|(g, &w)| *g += d * w);
                    }
                }
                let below = &self.layers[l - 1];
                delta = below.activation.backward(&trace.pre[l - 1], input, &grad_in);
            }
            layers.push(LayerGradient { weights, biases });
        }
        layers.reverse();
        Gradients { layers }
    }

    /// One-shot forward + backward: parameter gradients of
    /// `<grad_output, net(x)>`.
    pub fn gradients(&self, x: &[f64], grad_output: &[f64]) -> Result<Gradients, A2cError> {
        if grad_output.len() != self.output_dim() {
            return Err(A2cError::DimensionMismatch {
                expected: self.output_dim(),
                got: grad_output.len(),
            });
        }
        let trace = self.trace(x)?;
        Ok(self.backward(&trace, grad_output))
    }

    /// `theta += step * grads`.
    pub fn apply(&mut self, grads: &Gradients, step: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w += step * d);
            layer.biases.iter_mut().zip(&g.biases).for_each(|(b, d)| *b += step * d);
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), A2cError> {
        if params.len() != self.num_params() {
            return Err(A2cError::DimensionMismatch {
                expected: self.num_params(),
                got: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            for p in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *p = it.next().unwrap_or_default();
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seeded(dims: &[usize], hidden: Activation, out: Activation, seed: u64) -> FeedForwardNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = FeedForwardNet::new(dims, hidden, out, &mut rng).unwrap();
        // non-zero biases so the bias path is exercised too
        for layer in net.layers_mut() {
            for b in &mut layer.biases {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        net
    }

    fn scalar_loss(net: &FeedForwardNet, x: &[f64], g: &[f64]) -> f64 {
        net.forward(x).unwrap().iter().zip(g).map(|(y, gi)| y * gi).sum()
    }

    fn finite_difference(net: &FeedForwardNet, x: &[f64], g: &[f64], h: f64) -> Vec<f64> {
        let base = net.flat_params();
        let mut probe = net.clone();
        (0..base.len())
            .map(|i| {
                let mut p = base.clone();
                p[i] = base[i] + h;
                probe.set_flat_params(&p).unwrap();
                let up = scalar_loss(&probe, x, g);
                p[i] = base[i] - h;
                probe.set_flat_params(&p).unwrap();
                let down = scalar_loss(&probe, x, g);
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric)
            .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn weights_chain_with_dims() {
        let net = seeded(&[5, 7, 3], Activation::Tanh, Activation::Softmax, 1);
        assert_eq!(net.layer_dims(), vec![5, 7, 3]);
        assert_eq!(net.layers()[0].weights.len(), 35);
        assert_eq!(net.layers()[1].weights.len(), 21);
        assert_eq!(net.num_params(), 35 + 7 + 21 + 3);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let net = seeded(&[16, 9, 2], Activation::Tanh, Activation::Identity, 3);
        for layer in net.layers() {
            let bound = 1.0 / (layer.fan_in as f64).sqrt();
            assert!(layer.weights.iter().all(|w| w.abs() <= bound));
        }
    }

    #[test]
    fn rejects_bad_layouts() {
        assert!(FeedForwardNet::zeroed(&[3], Activation::Tanh, Activation::Identity).is_err());
        assert!(FeedForwardNet::zeroed(&[3, 0, 1], Activation::Tanh, Activation::Identity).is_err());
        let a = Layer::zeroed(3, 4, Activation::Tanh);
        let b = Layer::zeroed(5, 1, Activation::Identity);
        assert!(FeedForwardNet::from_layers(vec![a, b]).is_err());
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = seeded(&[4, 3, 2], Activation::Tanh, Activation::Softmax, 2);
        assert_eq!(
            net.forward(&[0.0; 3]).unwrap_err(),
            A2cError::DimensionMismatch { expected: 4, got: 3 }
        );
    }

    #[test]
    fn softmax_output_is_a_distribution() {
        let net = seeded(&[4, 6, 5], Activation::Tanh, Activation::Softmax, 9);
        let p = net.forward(&[0.3, -1.0, 2.0, 0.5]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax(&[1000.0, 1000.0 + 3f64.ln()]);
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn single_linear_layer_gradient_is_outer_product() {
        let mut net = FeedForwardNet::zeroed(&[3, 2], Activation::Identity, Activation::Identity).unwrap();
        net.layers_mut()[0].weights = vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0];
        let x = [0.5, -2.0, 3.0];
        let g = [1.5, -0.25];
        let grads = net.gradients(&x, &g).unwrap();
        let expected: Vec<f64> = g.iter().flat_map(|gi| x.iter().map(move |xi| gi * xi)).collect();
        assert_eq!(grads.layers[0].weights, expected);
        assert_eq!(grads.layers[0].biases, g.to_vec());
    }

    #[test]
    fn zero_input_gives_zero_first_layer_weight_gradient() {
        let mut net = seeded(&[4, 5, 3], Activation::Tanh, Activation::Softmax, 4);
        for layer in net.layers_mut() {
            layer.biases.iter_mut().for_each(|b| *b = 0.0);
        }
        let grads = net.gradients(&[0.0; 4], &[1.0, -2.0, 0.5]).unwrap();
        assert!(grads.layers[0].weights.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn three_layer_gradients_match_finite_differences() {
        for (seed, hidden, out) in [
            (11, Activation::Tanh, Activation::Softmax),
            (12, Activation::Tanh, Activation::Identity),
            (13, Activation::Relu, Activation::Tanh),
        ] {
            let net = seeded(&[6, 10, 8, 4], hidden, out, seed);
            let x = [0.2, -0.7, 1.1, 0.05, -0.3, 0.9];
            let g = [0.4, -1.2, 0.8, 0.3];
            let analytic = net.gradients(&x, &g).unwrap().flatten();
            let numeric = finite_difference(&net, &x, &g, 1e-5);
            let err = max_rel_error(&analytic, &numeric);
            assert!(err < 1e-4, "{hidden:?}/{out:?}: max rel err {err}");
        }
    }

    #[test]
    fn clip_norm_caps_global_norm() {
        let net = seeded(&[3, 4, 2], Activation::Tanh, Activation::Identity, 5);
        let mut grads = net.gradients(&[3.0, -4.0, 5.0], &[100.0, -80.0]).unwrap();
        assert!(grads.l2_norm() > 10.0);
        grads.clip_norm(10.0);
        assert!((grads.l2_norm() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn flat_params_round_trip() {
        let net = seeded(&[3, 4, 2], Activation::Tanh, Activation::Identity, 6);
        let mut other = FeedForwardNet::zeroed(&[3, 4, 2], Activation::Tanh, Activation::Identity).unwrap();
        other.set_flat_params(&net.flat_params()).unwrap();
        assert_eq!(other, net);
    }
}
