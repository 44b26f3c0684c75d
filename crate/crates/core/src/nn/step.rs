//! The per-time-step triple of networks `(U_i, Z_i, Z̃_i)`.
//!
//! At step `i` every network reads `(W_{t_1..t_i}, Ŵ_{t_1..t_i}, X_{t_i})`,
//! so the input dimension is `1 + 2i` and the single hidden layer has
//! `ceil((1 + 2i + 1) / 2) = i + 1` units. Inputs pass through a fixed affine
//! standardisation and outputs through a fixed affine rescaling; both can be
//! folded into the first and last layer, so the function class is unchanged.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{invalid, Result};
use crate::model::ModelParams;
use crate::nn::Network;
use crate::paths::{GridSpec, PathBundle};
use crate::rng::derive_seed;

/// Hidden width for the given input/output dimensions: half of the total
/// neuron count of the input and output layers, rounded up.
pub fn hidden_width(d_in: usize, d_out: usize) -> usize {
    (d_in + d_out).div_ceil(2)
}

/// Per-column `(v - shift) / scale` applied before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaling {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaling {
    /// Analytic moments at step `i`: `W_{t_k} ~ √t_k`, `Ŵ_{t_k} ~ t_k^H`,
    /// `X_{t_i}` centred at `x0 - ξ t_i / 2` with scale `√(ξ t_i)`.
    pub fn for_step(step: usize, grid: &GridSpec, params: &ModelParams) -> Self {
        let dim = 1 + 2 * step;
        let mut shift = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        for k in 1..=step {
            let t = grid.time(k);
            scale[k - 1] = t.sqrt();
            scale[step + k - 1] = t.powf(params.hurst);
        }
        let t = grid.time(step);
        shift[dim - 1] = params.x0() - 0.5 * params.xi * t;
        let sx = (params.xi * t).sqrt();
        scale[dim - 1] = if sx > 1e-12 { sx } else { 1.0 };
        Self { shift, scale }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }
}

/// Raw network inputs `(W_{t_1..t_i}, Ŵ_{t_1..t_i}, X_{t_i})` for every sample.
pub fn step_inputs(paths: &PathBundle, step: usize) -> Array2<f64> {
    let dim = 1 + 2 * step;
    let mut out = Array2::zeros((paths.samples(), dim));
    for (j, mut row) in out.outer_iter_mut().enumerate() {
        let (w, wh, x) = (paths.w(j), paths.w_hat(j), paths.x(j));
        for k in 1..=step {
            row[k - 1] = w[k];
            row[step + k - 1] = wh[k];
        }
        row[dim - 1] = x[step];
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepNetworks {
    pub step: usize,
    pub u: Network,
    pub z: Network,
    pub z_tilde: Network,
    pub features: FeatureScaling,
    /// `U_i = u_shift + u_scale · u(·)`.
    pub u_shift: f64,
    pub u_scale: f64,
    /// `Z_i = z_scale · z(·)`, and likewise for `Z̃_i`.
    pub z_scale: f64,
    /// Set when the weights were copied from a trained neighbour; rescaling
    /// then preserves the represented functions instead of resetting them.
    pub warm: bool,
}

impl StepNetworks {
    /// Fresh Glorot networks for step `step`, seeded from `seed`.
    pub fn new(step: usize, grid: &GridSpec, params: &ModelParams, seed: u64) -> Result<Self> {
        let d_in = 1 + 2 * step;
        let dims = [d_in, hidden_width(d_in, 1), 1];
        Ok(Self {
            step,
            u: Network::new(&dims, derive_seed(seed, &[0]))?,
            z: Network::new(&dims, derive_seed(seed, &[1]))?,
            z_tilde: Network::new(&dims, derive_seed(seed, &[2]))?,
            features: FeatureScaling::for_step(step, grid, params),
            u_shift: 0.0,
            u_scale: 1.0,
            z_scale: 1.0,
            warm: false,
        })
    }

    /// Initialises from the trained networks of step `i + 1`. Shared inputs
    /// keep their weights (corrected for the different standardisation), the
    /// inputs `W_{t_{i+1}}, Ŵ_{t_{i+1}}` and the last hidden unit are dropped.
    pub fn warm_start_from(&mut self, next: &StepNetworks) -> Result<()> {
        let i = self.step;
        if next.step != i + 1 {
            return Err(invalid("next", format!("expected step {}, got {}", i + 1, next.step)));
        }
        // Column of `next` holding the same raw input as column `a` here.
        let source = |a: usize| if a < i { a } else if a < 2 * i { a + 1 } else { 2 * i + 2 };
        for (mine, theirs) in [
            (&mut self.u, &next.u),
            (&mut self.z, &next.z),
            (&mut self.z_tilde, &next.z_tilde),
        ] {
            let (src, dst) = (theirs.layers(), mine.layers_mut());
            if src.len() != 2 || dst.len() != 2 {
                return Err(invalid("nets", "warm start needs one hidden layer"));
            }
            let width = dst[0].fan_out();
            let mut bias = src[0].bias.slice(ndarray::s![..width]).to_owned();
            for a in 0..dst[0].fan_in() {
                let b = source(a);
                let ratio = self.features.scale[a] / next.features.scale[b];
                let offset = (self.features.shift[a] - next.features.shift[b]) / next.features.scale[b];
                for h in 0..width {
                    let w = src[0].weight[[b, h]];
                    dst[0].weight[[a, h]] = w * ratio;
                    bias[h] += w * offset;
                }
            }
            dst[0].bias.assign(&bias);
            dst[1].weight.assign(&src[1].weight.slice(ndarray::s![..width, ..]));
            dst[1].bias.assign(&src[1].bias);
        }
        self.u_shift = next.u_shift;
        self.u_scale = next.u_scale;
        self.z_scale = next.z_scale;
        self.warm = true;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.features.dim()
    }

    /// Sets the output affine maps from the mean and standard deviation of the
    /// regression target at `t_{i+1}`.
    pub fn set_output_scaling(&mut self, target_mean: f64, target_std: f64, t_next: f64, growth: f64) {
        let sd = if target_std > 1e-12 { target_std } else { 1.0 };
        let (u_shift, u_scale, z_scale) = (target_mean / growth, sd, sd / t_next.sqrt());
        if self.warm {
            let (old_shift, old_scale, old_z) = (self.u_shift, self.u_scale, self.z_scale);
            let out = self.u.layers_mut().last_mut().expect("network has layers");
            out.weight.mapv_inplace(|w| w * old_scale / u_scale);
            out.bias.mapv_inplace(|b| (old_shift + old_scale * b - u_shift) / u_scale);
            for net in [&mut self.z, &mut self.z_tilde] {
                let out = net.layers_mut().last_mut().expect("network has layers");
                out.weight.mapv_inplace(|w| w * old_z / z_scale);
                out.bias.mapv_inplace(|b| b * old_z / z_scale);
            }
        }
        self.u_shift = u_shift;
        self.u_scale = u_scale;
        self.z_scale = z_scale;
    }

    /// Shifts the output biases so that each network has zero mean output on
    /// `normalized`; `U_i` then starts at `u_shift` on average and `Z_i`,
    /// `Z̃_i` start centred.
    pub fn center_outputs(&mut self, normalized: ArrayView2<f64>) -> Result<()> {
        for net in [&mut self.u, &mut self.z, &mut self.z_tilde] {
            let mean = net.forward(normalized)?.column(0).mean().unwrap_or(0.0);
            let last = net.layers_mut().last_mut().expect("network has layers");
            last.bias[0] -= mean;
        }
        Ok(())
    }

    /// Standardised inputs for the networks.
    pub fn normalize(&self, raw: ArrayView2<f64>) -> Array2<f64> {
        let mut out = raw.to_owned();
        for (mut col, (&s, &c)) in out
            .columns_mut()
            .into_iter()
            .zip(self.features.shift.iter().zip(&self.features.scale))
        {
            col.mapv_inplace(|v| (v - s) / c);
        }
        out
    }

    pub fn inputs(&self, paths: &PathBundle) -> Array2<f64> {
        self.normalize(step_inputs(paths, self.step).view())
    }

    /// `U_i` on standardised inputs.
    pub fn value(&self, normalized: ArrayView2<f64>) -> Result<Array1<f64>> {
        let out = self.u.forward(normalized)?;
        Ok(out.column(0).mapv(|v| self.u_shift + self.u_scale * v))
    }

    /// `U_i` on the raw inputs `(W-history, Ŵ-history, x)`.
    pub fn value_raw(&self, raw: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.value(self.normalize(raw).view())
    }

    /// `U_i` at a single raw input row.
    pub fn value_at(&self, raw: ArrayView1<f64>) -> Result<f64> {
        let row = raw.to_owned().insert_axis(ndarray::Axis(0));
        Ok(self.value_raw(row.view())?[0])
    }

    /// `(U_i, Z_i, Z̃_i)` on standardised inputs.
    pub fn evaluate(&self, normalized: ArrayView2<f64>) -> Result<(Array1<f64>, Array1<f64>, Array1<f64>)> {
        let u = self.value(normalized)?;
        let z = self.z.forward(normalized)?.column(0).mapv(|v| self.z_scale * v);
        let zt = self
            .z_tilde
            .forward(normalized)?
            .column(0)
            .mapv(|v| self.z_scale * v);
        Ok((u, z, zt))
    }
}
