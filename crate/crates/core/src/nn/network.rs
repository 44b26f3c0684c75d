use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::seeded;

/// One affine map `a ↦ a·W + b`; `weight` is `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }
}

/// Dense feedforward network: sigmoid after every layer but the last, identity
/// on the output. Also used as the container for parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Dense>,
}

/// Post-activation outputs of every layer, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    outputs: Vec<Array2<f64>>,
}

impl Activations {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().expect("network has at least one layer")
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `(d0+1)m + (m+1)m(M-2) + (m+1)d1` for `M >= 2` affine layers of hidden
/// width `m`.
pub fn parameter_count(d0: usize, d1: usize, m: usize, layers: usize) -> usize {
    assert!(layers >= 2);
    (d0 + 1) * m + (m + 1) * m * (layers - 2) + (m + 1) * d1
}

impl Network {
    /// Glorot-uniform weights, zero biases. `dims = [d0, h1, ..., d_out]`.
    pub fn new(dims: &[usize], seed: u64) -> Result<Self> {
        Self::check_dims(dims)?;
        let mut rng = seeded(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weight =
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
                Dense {
                    weight,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::check_dims(dims)?;
        Ok(Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("layers", "need at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(invalid("layers", format!("layer {k} output does not feed layer {}", k + 1)));
            }
        }
        for l in &layers {
            if l.bias.len() != l.fan_out() {
                return Err(Error::ShapeMismatch {
                    expected: l.fan_out(),
                    got: l.bias.len(),
                });
            }
        }
        Ok(Self { layers })
    }

    fn check_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(invalid("dims", format!("{dims:?}: need >= 2 positive sizes")));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(Dense::fan_out));
        d
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// Parameters in a fixed order: layer by layer, weights (row-major) then
    /// biases.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<()> {
        if input.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim(),
                got: input.ncols(),
            });
        }
        Ok(())
    }

    /// Batch forward pass; rows of `input` are samples.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        let acts = self.forward_train(input)?;
        Ok(acts.outputs.into_iter().last().expect("non-empty"))
    }

    /// Activations feeding the output layer (the input itself when the
    /// network has a single layer). The output is an affine map of these.
    pub fn features(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&input)?;
        let mut a = input.to_owned();
        for layer in &self.layers[..self.layers.len() - 1] {
            let mut z = a.dot(&layer.weight);
            z += &layer.bias;
            z.mapv_inplace(sigmoid);
            a = z;
        }
        Ok(a)
    }

    pub fn forward_train(&self, input: ArrayView2<f64>) -> Result<Activations> {
        self.check_input(&input)?;
        let last = self.layers.len() - 1;
        let mut outputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let prev = if k == 0 { input.view() } else { outputs[k - 1].view() };
            let mut z = prev.dot(&layer.weight);
            z += &layer.bias;
            if k != last {
                z.mapv_inplace(sigmoid);
            }
            outputs.push(z);
        }
        Ok(Activations { outputs })
    }

    /// Gradient of `(1/J) Σ_j ⟨g_j, f(x_j)⟩` with respect to every parameter,
    /// `J` being the batch size and `g` the output gradient.
    pub fn backward(&self, input: ArrayView2<f64>, out_grad: ArrayView2<f64>) -> Result<Network> {
        let acts = self.forward_train(input)?;
        self.backward_with(input, &acts, out_grad)
    }

    pub fn backward_with(
        &self,
        input: ArrayView2<f64>,
        acts: &Activations,
        out_grad: ArrayView2<f64>,
    ) -> Result<Network> {
        self.check_input(&input)?;
        if out_grad.ncols() != self.output_dim() || out_grad.nrows() != input.nrows() {
            return Err(Error::ShapeMismatch {
                expected: input.nrows() * self.output_dim(),
                got: out_grad.len(),
            });
        }
        let batch = input.nrows().max(1) as f64;
        let mut delta = out_grad.mapv(|g| g / batch);
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let prev = if k == 0 {
                input.view()
            } else {
                acts.outputs[k - 1].view()
            };
            let weight = prev.t().dot(&delta);
            let bias = delta.sum_axis(Axis(0));
            if k > 0 {
                let mut back = delta.dot(&self.layers[k].weight.t());
                back.zip_mut_with(&acts.outputs[k - 1], |d, &a| *d *= a * (1.0 - a));
                delta = back;
            }
            grads.push(Dense { weight, bias });
        }
        grads.reverse();
        Ok(Network { layers: grads })
    }

    /// Writes parameters as CSV `layer,row,col,value`. Row `fan_in` of each
    /// layer holds the bias, i.e. the augmented matrix `[W; b]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "layer,row,col,value")?;
        for (k, l) in self.layers.iter().enumerate() {
            for ((r, c), v) in l.weight.indexed_iter() {
                writeln!(out, "{k},{r},{c},{v:e}")?;
            }
            for (c, v) in l.bias.iter().enumerate() {
                writeln!(out, "{k},{},{c},{v:e}", l.fan_in())?;
            }
        }
        Ok(())
    }

    /// Reads back the layout of [`Network::write_csv`] into a network of the
    /// given dims.
    pub fn read_csv<R: BufRead>(dims: &[usize], input: R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let mut seen = 0usize;
        for (n, line) in input.lines().enumerate() {
            let line = line.map_err(|e| invalid("checkpoint", e.to_string()))?;
            if n == 0 || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(invalid("checkpoint", format!("line {}: expected 4 fields", n + 1)));
            }
            let parse_idx = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| invalid("checkpoint", format!("line {}: {e}", n + 1)))
            };
            let (k, r, c) = (parse_idx(f[0])?, parse_idx(f[1])?, parse_idx(f[2])?);
            let v: f64 = f[3]
                .trim()
                .parse()
                .map_err(|e| invalid("checkpoint", format!("line {}: {e}", n + 1)))?;
            let layer = net
                .layers
                .get_mut(k)
                .ok_or_else(|| invalid("checkpoint", format!("line {}: no layer {k}", n + 1)))?;
            let slot = if r == layer.fan_in() {
                layer.bias.get_mut(c)
            } else {
                layer.weight.get_mut((r, c))
            };
            *slot.ok_or_else(|| invalid("checkpoint", format!("line {}: index out of range", n + 1)))? = v;
            seen += 1;
        }
        if seen != net.param_count() {
            return Err(Error::ShapeMismatch {
                expected: net.param_count(),
                got: seen,
            });
        }
        Ok(net)
    }
}

/// Worst relative error `|a - f| / max(|a|, |f|, 1e-7)` between the
/// backward-pass gradient of `(1/J) Σ ⟨g, f(x)⟩` and central differences with
/// step `1e-5` on every parameter.
pub fn gradient_check(net: &Network, x: &Array2<f64>, g: &Array2<f64>) -> Result<f64> {
    let objective = |n: &Network| -> Result<f64> {
        Ok((&n.forward(x.view())? * g).sum() / x.nrows() as f64)
    };
    let analytic: Vec<f64> = net.backward(x.view(), g.view())?.params().copied().collect();
    let h = 1e-5;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (idx, &a) in analytic.iter().enumerate() {
        let orig = *probe.params().nth(idx).expect("index in range");
        *probe.params_mut().nth(idx).expect("index in range") = orig + h;
        let up = objective(&probe)?;
        *probe.params_mut().nth(idx).expect("index in range") = orig - h;
        let down = objective(&probe)?;
        *probe.params_mut().nth(idx).expect("index in range") = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-7));
    }
    Ok(worst)
}

/// Worst [`gradient_check`] error over `count` random networks with one or
/// two hidden layers of width 1-5, 1-5 inputs, 1-2 outputs and 1-4 rows.
pub fn random_gradient_check(count: usize, seed: u64) -> Result<f64> {
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let d0 = rng.random_range(1..6);
        let mut dims = vec![d0];
        for _ in 0..rng.random_range(1..3) {
            dims.push(rng.random_range(1..6));
        }
        let d_out = rng.random_range(1..3);
        dims.push(d_out);
        let net = Network::new(&dims, rng.random())?;
        let rows = rng.random_range(1..5);
        let x = Array2::from_shape_fn((rows, d0), |_| rng.random_range(-2.0..2.0));
        let g = Array2::from_shape_fn((rows, d_out), |_| rng.random_range(-1.0..1.0));
        worst = worst.max(gradient_check(&net, &x, &g)?);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn init_is_glorot_with_zero_bias() {
        let net = Network::new(&[7, 5, 3], 11).unwrap();
        for l in net.layers() {
            let bound = (6.0 / (l.fan_in() + l.fan_out()) as f64).sqrt();
            assert!(l.weight.iter().all(|w| w.abs() <= bound));
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
        assert_eq!(net, Network::new(&[7, 5, 3], 11).unwrap());
        assert_ne!(net, Network::new(&[7, 5, 3], 12).unwrap());
        assert!(Network::new(&[3], 0).is_err());
        assert!(Network::new(&[3, 0, 1], 0).is_err());
    }

    #[test]
    fn single_linear_layer() {
        let layer = Dense {
            weight: array![[1.0, -2.0], [0.5, 3.0]],
            bias: array![0.1, 0.2],
        };
        let net = Network::from_layers(vec![layer]).unwrap();
        let out = net.forward(array![[2.0, 4.0]].view()).unwrap();
        assert!((out[[0, 0]] - (2.0 + 2.0 + 0.1)).abs() < 1e-15);
        assert!((out[[0, 1]] - (-4.0 + 12.0 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn zero_hidden_layer_outputs_half() {
        let mut net = Network::zeros(&[3, 4, 1]).unwrap();
        net.layers_mut()[1].weight.fill(2.0);
        net.layers_mut()[1].bias.fill(0.7);
        let out = net.forward(array![[1.0, -5.0, 3.0]].view()).unwrap();
        assert!((out[[0, 0]] - (2.0 * 0.5 * 4.0 + 0.7)).abs() < 1e-15);
    }

    #[test]
    fn identical_rows_give_identical_outputs() {
        let net = Network::new(&[3, 4, 1], 3).unwrap();
        let out = net
            .forward(array![[0.3, -0.2, 1.1], [0.3, -0.2, 1.1]].view())
            .unwrap();
        assert_eq!(out[[0, 0]], out[[1, 0]]);
        assert!(net.forward(array![[0.3, 1.1]].view()).is_err());
    }

    #[test]
    fn zero_output_gradient_gives_zero_gradients() {
        let net = Network::new(&[3, 4, 1], 3).unwrap();
        let x = array![[0.3, -0.2, 1.1], [1.0, 0.5, -0.7]];
        let g = net.backward(x.view(), Array2::zeros((2, 1)).view()).unwrap();
        assert!(g.params().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_is_linear_in_output_gradient() {
        let net = Network::new(&[3, 4, 1], 5).unwrap();
        let x = array![[0.3, -0.2, 1.1], [1.0, 0.5, -0.7]];
        let g = array![[0.4], [-1.3]];
        let g1 = net.backward(x.view(), g.view()).unwrap();
        let g2 = net.backward(x.view(), (&g * 2.0).view()).unwrap();
        for (a, b) in g1.params().zip(g2.params()) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let net = Network::new(&[3, 4, 1], 21).unwrap();
        let x = array![[0.3, -0.2, 1.1], [1.0, 0.5, -0.7], [-0.4, 0.9, 0.05]];
        let g = array![[0.4], [-1.3], [0.8]];
        let err = gradient_check(&net, &x, &g).unwrap();
        assert!(err < 1e-5, "relative error {err}");
        let deep = Network::new(&[2, 3, 3, 2], 8).unwrap();
        let x = array![[0.3, -0.2], [1.0, 0.5]];
        let g = array![[0.4, 0.1], [-1.3, 2.0]];
        assert!(gradient_check(&deep, &x, &g).unwrap() < 1e-5);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let net = Network::new(&[5, 3, 1], 4).unwrap();
        let mut buf = Vec::new();
        net.write_csv(&mut buf).unwrap();
        let back = Network::read_csv(&[5, 3, 1], buf.as_slice()).unwrap();
        assert_eq!(net, back);
        assert!(Network::read_csv(&[5, 4, 1], buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn parameter_count_matches_layout(d0 in 1usize..12, d1 in 1usize..4, m in 1usize..10, layers in 2usize..5) {
            let mut dims = vec![d0];
            dims.extend(std::iter::repeat(m).take(layers - 1));
            dims.push(d1);
            let net = Network::zeros(&dims).unwrap();
            prop_assert_eq!(net.param_count(), parameter_count(d0, d1, m, layers));
        }

        #[test]
        fn forward_is_batch_order_independent(seed in 0u64..1000) {
            let net = Network::new(&[3, 4, 1], seed).unwrap();
            let x = array![[0.3, -0.2, 1.1], [1.0, 0.5, -0.7], [-0.4, 0.9, 0.05]];
            let rev = array![[-0.4, 0.9, 0.05], [1.0, 0.5, -0.7], [0.3, -0.2, 1.1]];
            let a = net.forward(x.view()).unwrap();
            let b = net.forward(rev.view()).unwrap();
            for k in 0..3 {
                prop_assert_eq!(a[[k, 0]], b[[2 - k, 0]]);
            }
        }
    }
}
