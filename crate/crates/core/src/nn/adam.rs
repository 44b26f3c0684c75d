use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators, one entry per network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<f64>,
    second: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(net: &Network, config: AdamConfig) -> Self {
        let n = net.param_count();
        Self {
            config,
            first: vec![0.0; n],
            second: vec![0.0; n],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of `net` along `grads`.
pub fn adam_step(net: &mut Network, grads: &Network, state: &mut AdamState) -> Result<()> {
    let n = net.param_count();
    if grads.param_count() != n || state.first.len() != n {
        return Err(Error::ShapeMismatch {
            expected: n,
            got: grads.param_count(),
        });
    }
    let AdamConfig {
        learning_rate,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((p, &g), m), v) in net
        .params_mut()
        .zip(grads.params())
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::array;

    fn scalar(w: f64) -> Network {
        Network::from_layers(vec![Dense {
            weight: array![[w]],
            bias: array![0.0],
        }])
        .unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut net = Network::new(&[3, 2, 1], 1).unwrap();
        let before = net.clone();
        let mut st = AdamState::new(&net, AdamConfig::default());
        adam_step(&mut net, &Network::zeros(&[3, 2, 1]).unwrap(), &mut st).unwrap();
        assert_eq!(net, before);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = scalar(1.0);
        let mut st = AdamState::new(&net, AdamConfig::default());
        adam_step(&mut net, &scalar(0.37), &mut st).unwrap();
        let w = net.layers()[0].weight[[0, 0]];
        assert!((1.0 - w - 5e-3).abs() < 1e-9);
        let mut net = scalar(1.0);
        let mut st = AdamState::new(&net, AdamConfig::default());
        adam_step(&mut net, &scalar(-250.0), &mut st).unwrap();
        assert!((net.layers()[0].weight[[0, 0]] - 1.0 - 5e-3).abs() < 1e-9);
    }

    #[test]
    fn minimizes_scalar_quadratic() {
        let cfg = AdamConfig {
            learning_rate: 1e-2,
            ..AdamConfig::default()
        };
        let mut net = scalar(0.0);
        let mut st = AdamState::new(&net, cfg);
        let mut reached = None;
        for k in 0..5000 {
            let w = net.layers()[0].weight[[0, 0]];
            if (w - 3.0).abs() < 1e-3 {
                reached = Some(k);
                break;
            }
            adam_step(&mut net, &scalar(2.0 * (w - 3.0)), &mut st).unwrap();
        }
        assert!(reached.is_some(), "did not converge");
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut net = scalar(0.0);
        let mut st = AdamState::new(&net, AdamConfig::default());
        let other = Network::zeros(&[2, 1]).unwrap();
        assert!(adam_step(&mut net, &other, &mut st).is_err());
    }
}
