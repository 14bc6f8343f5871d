//! Finite-difference verification of network gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ddpg::stream_rng;
use crate::error::Result;
use crate::nn::{Mlp, OutputActivation};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Magnitudes below this are compared absolutely rather than relatively.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(MAGNITUDE_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheck {
    pub layer_sizes: Vec<usize>,
    pub output: String,
    pub params: usize,
    pub max_param_error: f64,
    pub max_input_error: f64,
}

impl GradCheck {
    pub fn max_error(&self) -> f64 {
        self.max_param_error.max(self.max_input_error)
    }
}

/// Compare backprop against central differences of `L = upstream · f(x)`
/// for every parameter and every input.
pub fn check_network(net: &Mlp, input: &[f64], upstream: &[f64], h: f64) -> Result<GradCheck> {
    let loss = |n: &Mlp, x: &[f64]| -> Result<f64> {
        Ok(n.forward(x)?.iter().zip(upstream).map(|(y, u)| y * u).sum())
    };
    let trace = net.trace(input)?;
    let (grads, input_grad) = net.backward(&trace, upstream)?;

    let mut probe = net.clone();
    let mut max_param_error = 0.0f64;
    for (i, &analytic) in grads.iter().enumerate() {
        let original = *probe.params_mut().nth(i).unwrap();
        *probe.params_mut().nth(i).unwrap() = original + h;
        let up = loss(&probe, input)?;
        *probe.params_mut().nth(i).unwrap() = original - h;
        let down = loss(&probe, input)?;
        *probe.params_mut().nth(i).unwrap() = original;
        max_param_error = max_param_error.max(relative_error(analytic, (up - down) / (2.0 * h)));
    }

    let mut x = input.to_vec();
    let mut max_input_error = 0.0f64;
    for (i, &analytic) in input_grad.iter().enumerate() {
        x[i] = input[i] + h;
        let up = loss(net, &x)?;
        x[i] = input[i] - h;
        let down = loss(net, &x)?;
        x[i] = input[i];
        max_input_error = max_input_error.max(relative_error(analytic, (up - down) / (2.0 * h)));
    }

    Ok(GradCheck {
        layer_sizes: net.layer_sizes(),
        output: format!("{:?}", net.output_activation()),
        params: net.num_params(),
        max_param_error,
        max_input_error,
    })
}

/// A small network with random shape, output head, input and upstream.
pub fn random_case(rng: &mut ChaCha8Rng) -> Result<(Mlp, Vec<f64>, Vec<f64>)> {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=6)];
    sizes.extend((0..depth).map(|_| rng.random_range(2..=8)));
    sizes.push(rng.random_range(1..=3));
    let output = if rng.random_bool(0.5) {
        OutputActivation::Linear
    } else {
        OutputActivation::SteepSigmoid {
            steepness: rng.random_range(0.5..3.0),
        }
    };
    let net = Mlp::new(&sizes, output, rng)?;
    let input = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upstream = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
    Ok((net, input, upstream))
}

pub fn check_random_networks(count: usize, seed: u64) -> Result<Vec<GradCheck>> {
    let mut rng = stream_rng(seed, 0);
    (0..count)
        .map(|_| {
            let (net, x, u) = random_case(&mut rng)?;
            check_network(&net, &x, &u, DEFAULT_STEP)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_networks_pass() {
        for c in check_random_networks(10, 3).unwrap() {
            assert!(c.max_error() < DEFAULT_TOLERANCE, "{c:?}");
        }
    }

    #[test]
    fn floor_for_tiny_values() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1e-12, 0.0) < 1e-5);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-12);
    }
}
