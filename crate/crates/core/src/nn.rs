//! Dense feed-forward networks with hand-written reverse mode.
//!
//! Hidden layers use ReLU. The output layer is either linear or a steep
//! sigmoid `1 / (1 + exp(-t x))`, which pushes actor outputs toward 0 or 1
//! before they are thresholded into a binary action.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::traffic::Action;

/// Floor on the steep-sigmoid derivative used in backward passes.
pub const SIGMOID_GRAD_FLOOR: f64 = 1e-8;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputActivation {
    Linear,
    SteepSigmoid { steepness: f64 },
}

impl OutputActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            OutputActivation::Linear => z,
            OutputActivation::SteepSigmoid { steepness } => steep_sigmoid(z, steepness),
        }
    }

    /// d(output)/d(pre-activation), given the output value.
    fn derivative(self, y: f64) -> f64 {
        match self {
            OutputActivation::Linear => 1.0,
            OutputActivation::SteepSigmoid { steepness } => (steepness * y * (1.0 - y)).max(SIGMOID_GRAD_FLOOR),
        }
    }
}

/// `sigmoid(t * x)`, kept strictly inside (0, 1).
pub fn steep_sigmoid(x: f64, steepness: f64) -> f64 {
    let z = steepness * x;
    let y = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    y.clamp(1e-15, 1.0 - 1e-15)
}

/// Threshold at 0.5; a tie switches.
pub fn binarize(value: f64) -> Action {
    Action::from(value >= 0.5)
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    output: OutputActivation,
}

/// Per-layer activations recorded by a forward pass, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct Trace {
    /// `activations[0]` is the input, `activations[k + 1]` the output of layer k.
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an input")
    }
}

/// Partial derivatives of a scalar loss w.r.t. every parameter, laid out like
/// the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b))
    }

    fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|(w, b)| w.len() + b.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn scale(&mut self, factor: f64) {
        self.iter_mut().for_each(|g| *g *= factor);
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::ArchitectureMismatch);
        }
        self.iter_mut().zip(other.iter()).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|g| g.is_finite())
    }

    fn same_shape(&self, other: &Gradients) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.0.len() == b.0.len() && a.1.len() == b.1.len())
    }
}

impl Mlp {
    /// Uniform initialization in `±1/sqrt(fan_in)` per layer.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes, output)?;
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.inputs as f64).sqrt();
            for p in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                *p = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig {
                key: "layer_sizes".into(),
                reason: format!("need at least two positive layer sizes, got {sizes:?}"),
            });
        }
        Ok(Mlp {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            output,
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.bias))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_sizes() == other.layer_sizes()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.activations.pop().expect("output layer"))
    }

    pub fn trace(&self, input: &[f64]) -> Result<Trace> {
        if input.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.affine(&activations[k]);
            if k == last {
                z.iter_mut().for_each(|v| *v = self.output.apply(*v));
            } else {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }
        Ok(Trace { activations })
    }

    /// Reverse pass for `upstream = dL/d(output)`. Returns parameter
    /// gradients and `dL/d(input)`.
    pub fn backward(&self, trace: &Trace, upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
        let mut grads = Gradients::zeros_like(self);
        let input_grad = self.backward_into(trace, upstream, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like `backward`, but adds parameter gradients into `grads`.
    pub fn backward_into(&self, trace: &Trace, upstream: &[f64], grads: &mut Gradients) -> Result<Vec<f64>> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::ArchitectureMismatch);
        }
        self.backprop(trace, upstream, Some(grads))
    }

    /// `dL/d(input)` only; parameter gradients are skipped.
    pub fn input_gradient(&self, trace: &Trace, upstream: &[f64]) -> Result<Vec<f64>> {
        self.backprop(trace, upstream, None)
    }

    fn backprop(&self, trace: &Trace, upstream: &[f64], mut grads: Option<&mut Gradients>) -> Result<Vec<f64>> {
        if trace.activations.len() != self.layers.len() + 1
            || trace
                .activations
                .iter()
                .zip(self.layer_sizes())
                .any(|(a, n)| a.len() != n)
        {
            return Err(Error::ArchitectureMismatch);
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }

        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(trace.output())
            .map(|(g, &y)| g * self.output.derivative(y))
            .collect();

        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &trace.activations[k];
            if let Some(grads) = grads.as_deref_mut() {
                let (gw, gb) = &mut grads.layers[k];
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    if d != 0.0 {
                        for (g, xi) in gw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                }
            }
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    for (p, w) in prev.iter_mut().zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs]) {
                        *p += d * w;
                    }
                }
            }
            if k > 0 {
                // ReLU gate of the layer below
                for (p, &a) in prev.iter_mut().zip(&trace.activations[k]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        Ok(delta)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            layer_sizes: self.layer_sizes(),
            output_activation: self.output,
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.bias.clone()).collect(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {} (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        let mut net = Mlp::zeros(&ck.layer_sizes, ck.output_activation)?;
        if ck.weights.len() != net.layers.len() || ck.biases.len() != net.layers.len() {
            return Err(Error::Checkpoint("layer count does not match layer_sizes".into()));
        }
        for (k, (layer, (w, b))) in net.layers.iter_mut().zip(ck.weights.into_iter().zip(ck.biases)).enumerate() {
            if w.len() != layer.weights.len() || b.len() != layer.bias.len() {
                return Err(Error::Checkpoint(format!("layer {k} has wrong parameter count")));
            }
            layer.weights = w;
            layer.bias = b;
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

/// On-disk network parameters. Weight matrices are row-major
/// `outputs x inputs`, one per layer, followed by one bias vector per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub output_activation: OutputActivation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Adam moment estimates for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Gradients,
    v: Gradients,
    steps: i32,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(net: &Mlp) -> Self {
        Adam {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            steps: 0,
        }
    }
}

/// One Adam descent step: parameters move against `grads`.
pub fn apply_update(net: &mut Mlp, grads: &Gradients, adam: &mut Adam, learning_rate: f64) -> Result<()> {
    let shape = Gradients::zeros_like(net);
    if !shape.same_shape(grads) || !shape.same_shape(&adam.m) {
        return Err(Error::ArchitectureMismatch);
    }
    adam.steps = adam.steps.saturating_add(1);
    let c1 = 1.0 - Adam::BETA1.powi(adam.steps);
    let c2 = 1.0 - Adam::BETA2.powi(adam.steps);
    let moments = adam.m.iter_mut().zip(adam.v.iter_mut());
    for ((p, &g), (m, v)) in net.params_mut().zip(grads.iter()).zip(moments) {
        *m = Adam::BETA1 * *m + (1.0 - Adam::BETA1) * g;
        *v = Adam::BETA2 * *v + (1.0 - Adam::BETA2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + Adam::EPSILON);
    }
    Ok(())
}

/// `target <- tau * online + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::ArchitectureMismatch);
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::InvalidConfig {
            key: "tau".into(),
            reason: format!("must lie in [0, 1], got {tau}"),
        });
    }
    for (t, &o) in target.params_mut().zip(online.params()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn steep_sigmoid_values() {
        assert_eq!(steep_sigmoid(0.0, 1000.0), 0.5);
        let expected = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((steep_sigmoid(0.01, 1000.0) - expected).abs() < 1e-15);
        assert!((expected - 0.9999546).abs() < 1e-7);
        let y = steep_sigmoid(5.0, 1000.0);
        assert!(y < 1.0 && y > 0.0);
        let y = steep_sigmoid(-5.0, 1000.0);
        assert!(y < 1.0 && y > 0.0);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2], OutputActivation::Linear).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension { expected: 3, got: 1 })));
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 6, 1], OutputActivation::Linear, &mut rng).unwrap();
        let tr = net.trace(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let (g, gi) = net.backward(&tr, &[0.0]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(gi.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_linear_layer_outer_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 2], OutputActivation::Linear, &mut rng).unwrap();
        let x = [0.5, -1.5, 2.0];
        let up = [0.25, -3.0];
        let (g, _) = net.backward(&net.trace(&x).unwrap(), &up).unwrap();
        let (gw, gb) = &g.layers[0];
        for o in 0..2 {
            for i in 0..3 {
                assert_eq!(gw[o * 3 + i], up[o] * x[i]);
            }
            assert_eq!(gb[o], up[o]);
        }
    }

    #[test]
    fn backward_rejects_foreign_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Mlp::new(&[3, 4, 1], OutputActivation::Linear, &mut rng).unwrap();
        let b = Mlp::new(&[3, 5, 1], OutputActivation::Linear, &mut rng).unwrap();
        let tr = b.trace(&[0.0; 3]).unwrap();
        assert!(matches!(a.backward(&tr, &[1.0]), Err(Error::ArchitectureMismatch)));
    }

    #[test]
    fn adam_behaviour() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = Mlp::new(&[2, 3, 1], OutputActivation::Linear, &mut rng).unwrap();

        let mut same = net.clone();
        let mut adam = Adam::new(&same);
        apply_update(&mut same, &Gradients::zeros_like(&net), &mut adam, 0.1).unwrap();
        assert_eq!(same, net);

        let mut g = Gradients::zeros_like(&net);
        g.iter_mut().enumerate().for_each(|(i, v)| *v = (i as f64 - 4.0) * 0.1);
        let (mut a, mut b) = (net.clone(), net.clone());
        let (mut sa, mut sb) = (Adam::new(&net), Adam::new(&net));
        apply_update(&mut a, &g, &mut sa, 0.01).unwrap();
        apply_update(&mut b, &g, &mut sb, 0.01).unwrap();
        assert_eq!(a, b);

        let other = Mlp::zeros(&[2, 4, 1], OutputActivation::Linear).unwrap();
        assert!(apply_update(&mut a, &Gradients::zeros_like(&other), &mut sa, 0.01).is_err());
    }

    #[test]
    fn adam_descends_quadratic() {
        // f(w) = w^2 on the single bias of a 1->1 zero-weight linear net.
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::Linear).unwrap();
        *net.params_mut().nth(1).unwrap() = 1.0;
        let mut adam = Adam::new(&net);
        let f = |n: &Mlp| n.forward(&[0.0]).unwrap()[0].powi(2);
        let before = f(&net);
        let out = net.forward(&[0.0]).unwrap()[0];
        let (g, _) = net.backward(&net.trace(&[0.0]).unwrap(), &[2.0 * out]).unwrap();
        apply_update(&mut net, &g, &mut adam, 0.1).unwrap();
        assert!(f(&net) < before);
    }

    #[test]
    fn soft_update_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let online = Mlp::new(&[2, 3, 1], OutputActivation::Linear, &mut rng).unwrap();
        let target = Mlp::new(&[2, 3, 1], OutputActivation::Linear, &mut rng).unwrap();

        let mut t = target.clone();
        soft_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);

        let mut t = target.clone();
        soft_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, target);

        let mut a = Mlp::zeros(&[1, 1], OutputActivation::Linear).unwrap();
        let mut b = a.clone();
        b.params_mut().for_each(|p| *p = 2.0);
        soft_update(&mut a, &b, 0.5).unwrap();
        assert!(a.params().all(|&p| p == 1.0));

        let wrong = Mlp::zeros(&[2, 4, 1], OutputActivation::Linear).unwrap();
        assert!(soft_update(&mut t, &wrong, 0.5).is_err());
    }

    #[test]
    fn binarize_threshold() {
        assert_eq!(binarize(0.7), Action::Switch);
        assert_eq!(binarize(0.3), Action::Continue);
        assert_eq!(binarize(0.5), Action::Switch);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::new(&[5, 4, 3, 1], OutputActivation::SteepSigmoid { steepness: 10.0 }, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        net.save(&path).unwrap();
        assert_eq!(Mlp::load(&path).unwrap(), net);

        let mut ck = net.to_checkpoint();
        ck.format_version = 99;
        assert!(Mlp::from_checkpoint(ck).is_err());
        let mut ck = net.to_checkpoint();
        ck.weights[1].pop();
        assert!(Mlp::from_checkpoint(ck).is_err());
    }
}
