//! Exact fit of the output layers once Adam has shaped the hidden features.
//!
//! `U_i`, `Z_i` and `Z̃_i` are affine in their output-layer parameters, so
//! with the hidden layers frozen the step loss is a least-squares problem in
//! at most `3(m + 1)` unknowns. For the linear driver one Gauss-Newton step
//! solves it exactly; the penalty driver is piecewise linear in `y` and needs
//! a few damped steps as the active set settles.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::nn::{Network, StepNetworks};
use crate::paths::factorize;
use crate::solver::driver::DriverSpec;

/// Per-path data of one step's regression.
pub struct StepSamples<'a> {
    pub inputs: ArrayView2<'a, f64>,
    pub target: &'a [f64],
    pub x: &'a [f64],
    pub db: &'a [f64],
    pub dw: &'a [f64],
}

struct Fit {
    loss: f64,
    residual: Array1<f64>,
    /// `∂H/∂y` per path.
    slope: Array1<f64>,
}

/// Re-solves the output layers of `nets` on `data`; returns the final loss.
pub fn polish_output_layers(
    nets: &mut StepNetworks,
    data: &StepSamples<'_>,
    driver: &DriverSpec,
    t: f64,
    dt: f64,
    max_rounds: usize,
) -> Result<f64> {
    let feats = [
        nets.u.features(data.inputs)?,
        nets.z.features(data.inputs)?,
        nets.z_tilde.features(data.inputs)?,
    ];
    let widths: Vec<usize> = feats.iter().map(|f| f.ncols() + 1).collect();
    let p: usize = widths.iter().sum();
    let n = data.target.len();
    let scales = [nets.u_scale, nets.z_scale, nets.z_scale];

    let mut theta = Vec::with_capacity(p);
    for net in [&nets.u, &nets.z, &nets.z_tilde] {
        theta.extend(output_params(net));
    }

    // Raw network outputs for a parameter vector.
    let outputs = |theta: &[f64]| -> [Array1<f64>; 3] {
        let mut off = 0;
        std::array::from_fn(|k| {
            let m = widths[k] - 1;
            let w = Array1::from(theta[off..off + m].to_vec());
            let b = theta[off + m];
            off += m + 1;
            feats[k].dot(&w) + b
        })
    };
    let fit = |theta: &[f64]| -> Fit {
        let [u, z, zt] = outputs(theta);
        let mut residual = Array1::zeros(n);
        let mut slope = Array1::zeros(n);
        let mut loss = 0.0;
        for j in 0..n {
            let y = nets.u_shift + nets.u_scale * u[j];
            let x = data.x[j];
            let h = y - driver.value(t, x, y) * dt
                + nets.z_scale * (z[j] * data.db[j] + zt[j] * data.dw[j]);
            let r = h - data.target[j];
            residual[j] = r;
            slope[j] = 1.0 - driver.dy(t, x, y) * dt;
            loss += r * r;
        }
        Fit { loss: loss / n as f64, residual, slope }
    };

    let mut current = fit(&theta);
    if !current.loss.is_finite() {
        return Err(Error::Divergence { step: nets.step, iteration: 0, loss: current.loss });
    }
    for _ in 0..max_rounds {
        let mut jac = Array2::zeros((n, p));
        for j in 0..n {
            let mut row = jac.row_mut(j);
            let weights = [
                current.slope[j] * scales[0],
                scales[1] * data.db[j],
                scales[2] * data.dw[j],
            ];
            let mut off = 0;
            for k in 0..3 {
                let m = widths[k] - 1;
                for c in 0..m {
                    row[off + c] = weights[k] * feats[k][[j, c]];
                }
                row[off + m] = weights[k];
                off += m + 1;
            }
        }
        let jtj = jac.t().dot(&jac);
        let jtr = jac.t().dot(&current.residual);
        let Some(delta) = damped_solve(&jtj, &jtr) else {
            break;
        };

        let mut accepted = None;
        let mut step = 1.0;
        for _ in 0..30 {
            let trial: Vec<f64> = theta.iter().zip(&delta).map(|(a, d)| a - step * d).collect();
            let f = fit(&trial);
            if f.loss < current.loss {
                accepted = Some((trial, f));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, f)) = accepted else {
            break;
        };
        let gain = (current.loss - f.loss) / current.loss.max(f64::MIN_POSITIVE);
        theta = trial;
        current = f;
        if gain < 1e-10 {
            break;
        }
    }

    let mut off = 0;
    for (k, net) in [&mut nets.u, &mut nets.z, &mut nets.z_tilde].into_iter().enumerate() {
        set_output_params(net, &theta[off..off + widths[k]]);
        off += widths[k];
    }
    Ok(current.loss)
}

fn output_params(net: &Network) -> Vec<f64> {
    let last = net.layers().last().expect("network has layers");
    let mut v: Vec<f64> = last.weight.column(0).to_vec();
    v.push(last.bias[0]);
    v
}

fn set_output_params(net: &mut Network, theta: &[f64]) {
    let last = net.layers_mut().last_mut().expect("network has layers");
    let m = theta.len() - 1;
    for c in 0..m {
        last.weight[[c, 0]] = theta[c];
    }
    last.bias[0] = theta[m];
}

/// Solves `(JᵀJ + λ D) δ = Jᵀr` with `D = diag(JᵀJ)`, raising `λ` until the
/// Jacobi-scaled system factorizes. `None` if nothing works.
fn damped_solve(jtj: &Array2<f64>, jtr: &Array1<f64>) -> Option<Vec<f64>> {
    let p = jtr.len();
    let scale: Vec<f64> = (0..p)
        .map(|k| {
            let d = jtj[[k, k]].sqrt();
            if d > 0.0 { d } else { 1.0 }
        })
        .collect();
    for lambda in [1e-10, 1e-7, 1e-4, 1e-1] {
        let mut a = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                let v = 0.5 * (jtj[[i, j]] + jtj[[j, i]]) / (scale[i] * scale[j]);
                a[i * p + j] = if i == j { v + lambda } else { v };
            }
        }
        let Ok(factor) = factorize(&a) else {
            continue;
        };
        // Forward then back substitution on L Lᵀ y = b.
        let mut y: Vec<f64> = (0..p).map(|k| jtr[k] / scale[k]).collect();
        for i in 0..p {
            let s: f64 = (0..i).map(|k| factor.get(i, k) * y[k]).sum();
            y[i] = (y[i] - s) / factor.get(i, i);
        }
        for i in (0..p).rev() {
            let s: f64 = (i + 1..p).map(|k| factor.get(k, i) * y[k]).sum();
            y[i] = (y[i] - s) / factor.get(i, i);
        }
        let delta: Vec<f64> = y.iter().zip(&scale).map(|(v, s)| v / s).collect();
        if delta.iter().all(|d| d.is_finite()) {
            return Some(delta);
        }
    }
    None
}
