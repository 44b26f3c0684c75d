use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::forward::euler_row;
use crate::model::ModelParams;
use crate::paths::covariance::{build_covariance, factorize, CovarianceFactor};
use crate::paths::variance::bergomi_variance_into;
use crate::paths::GridSpec;
use crate::rng::sample_rng;

/// Simulated trajectories on the first `steps` intervals of a grid.
///
/// Arrays are sample-major: sample `j` occupies `[j*(steps+1), (j+1)*(steps+1))`
/// in `w`, `w_hat`, `v`, `x` and `[j*steps, (j+1)*steps)` in `dw`, `db`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBundle {
    pub(crate) samples: usize,
    pub(crate) steps: usize,
    pub(crate) dt: f64,
    pub(crate) times: Vec<f64>,
    pub(crate) w: Vec<f64>,
    pub(crate) w_hat: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) x: Vec<f64>,
    pub(crate) dw: Vec<f64>,
    pub(crate) db: Vec<f64>,
    pub(crate) seed: u64,
}

impl PathBundle {
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Number of time steps covered (grid points `0..=steps`).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn point_row<'a>(&self, data: &'a [f64], j: usize) -> &'a [f64] {
        let s = self.steps + 1;
        &data[j * s..(j + 1) * s]
    }

    fn step_row<'a>(&self, data: &'a [f64], j: usize) -> &'a [f64] {
        &data[j * self.steps..(j + 1) * self.steps]
    }

    pub fn w(&self, j: usize) -> &[f64] {
        self.point_row(&self.w, j)
    }

    pub fn w_hat(&self, j: usize) -> &[f64] {
        self.point_row(&self.w_hat, j)
    }

    pub fn v(&self, j: usize) -> &[f64] {
        self.point_row(&self.v, j)
    }

    pub fn x(&self, j: usize) -> &[f64] {
        self.point_row(&self.x, j)
    }

    pub fn dw(&self, j: usize) -> &[f64] {
        self.step_row(&self.dw, j)
    }

    pub fn db(&self, j: usize) -> &[f64] {
        self.step_row(&self.db, j)
    }

    /// Values at grid index `i` across all samples.
    pub fn column(&self, field: PathField, i: usize) -> Vec<f64> {
        let (data, stride) = match field {
            PathField::W => (&self.w, self.steps + 1),
            PathField::WHat => (&self.w_hat, self.steps + 1),
            PathField::V => (&self.v, self.steps + 1),
            PathField::X => (&self.x, self.steps + 1),
            PathField::DW => (&self.dw, self.steps),
            PathField::DB => (&self.db, self.steps),
        };
        (0..self.samples).map(|j| data[j * stride + i]).collect()
    }

    /// Writes the bundle as CSV with columns `sample,i,t,W,What,V,X`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "sample,i,t,W,What,V,X")?;
        for j in 0..self.samples {
            let (w, wh, v, x) = (self.w(j), self.w_hat(j), self.v(j), self.x(j));
            for i in 0..=self.steps {
                writeln!(
                    out,
                    "{j},{i},{},{},{},{},{}",
                    self.times[i], w[i], wh[i], v[i], x[i]
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathField {
    W,
    WHat,
    V,
    X,
    DW,
    DB,
}

/// Model, grid and covariance factor bundled for repeated sampling. The
/// factor is immutable and shared between clones.
#[derive(Debug, Clone)]
pub struct PathSampler {
    params: ModelParams,
    grid: GridSpec,
    factor: Arc<CovarianceFactor>,
}

impl PathSampler {
    pub fn new(params: ModelParams, grid: GridSpec) -> Result<Self> {
        params.validate()?;
        let cov = build_covariance(&grid, params.hurst)?;
        let factor = factorize(&cov)?;
        Ok(Self {
            params,
            grid,
            factor: Arc::new(factor),
        })
    }

    pub fn with_factor(params: ModelParams, grid: GridSpec, factor: CovarianceFactor) -> Result<Self> {
        params.validate()?;
        if factor.dim() != 2 * grid.steps() {
            return Err(crate::Error::ShapeMismatch {
                expected: 2 * grid.steps(),
                got: factor.dim(),
            });
        }
        Ok(Self {
            params,
            grid,
            factor: Arc::new(factor),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn factor(&self) -> &CovarianceFactor {
        &self.factor
    }

    /// Full-horizon paths.
    pub fn sample(&self, samples: usize, seed: u64) -> Result<PathBundle> {
        self.sample_until(samples, seed, self.grid.steps())
    }

    /// Paths on `[0, t_horizon]` only. Normals are drawn in time order, so a
    /// truncated bundle agrees with the full one (same seed) up to rounding.
    pub fn sample_until(&self, samples: usize, seed: u64, horizon: usize) -> Result<PathBundle> {
        if samples == 0 {
            return Err(invalid("samples", "need at least one sample"));
        }
        if horizon == 0 || horizon > self.grid.steps() {
            return Err(invalid(
                "horizon",
                format!("{horizon} not in 1..={}", self.grid.steps()),
            ));
        }
        let points = horizon + 1;
        let mut bundle = PathBundle {
            samples,
            steps: horizon,
            dt: self.grid.dt(),
            times: self.grid.times()[..points].to_vec(),
            w: vec![0.0; samples * points],
            w_hat: vec![0.0; samples * points],
            v: vec![0.0; samples * points],
            x: vec![0.0; samples * points],
            dw: vec![0.0; samples * horizon],
            db: vec![0.0; samples * horizon],
            seed,
        };
        let times = &bundle.times;
        bundle
            .w
            .par_chunks_mut(points)
            .zip(bundle.w_hat.par_chunks_mut(points))
            .zip(bundle.v.par_chunks_mut(points))
            .zip(bundle.x.par_chunks_mut(points))
            .zip(bundle.dw.par_chunks_mut(horizon))
            .zip(bundle.db.par_chunks_mut(horizon))
            .enumerate()
            .for_each(|(j, (((((w, wh), v), x), dw), db))| {
                self.fill_sample(seed, j as u64, horizon, times, w, wh, v, x, dw, db);
            });
        Ok(bundle)
    }

    #[allow(clippy::too_many_arguments)]
    fn fill_sample(
        &self,
        seed: u64,
        index: u64,
        horizon: usize,
        times: &[f64],
        w: &mut [f64],
        w_hat: &mut [f64],
        v: &mut [f64],
        x: &mut [f64],
        dw: &mut [f64],
        db: &mut [f64],
    ) {
        let n = self.grid.steps();
        let sqrt_dt = self.grid.dt().sqrt();
        let mut rng = sample_rng(seed, index);
        let mut z_w = vec![0.0; horizon];
        let mut z_h = vec![0.0; horizon];
        for a in 0..horizon {
            z_w[a] = rng.sample(StandardNormal);
            z_h[a] = rng.sample(StandardNormal);
            db[a] = sqrt_dt * rng.sample::<f64, _>(StandardNormal);
        }
        w[0] = 0.0;
        w_hat[0] = 0.0;
        for a in 0..horizon {
            let lw = self.factor.row(a);
            w[a + 1] = dot(&lw[..=a], &z_w[..=a]);
            let lh = self.factor.row(n + a);
            w_hat[a + 1] = dot(&lh[..horizon], &z_w) + dot(&lh[n..=n + a], &z_h[..=a]);
            dw[a] = w[a + 1] - w[a];
        }
        bergomi_variance_into(w_hat, times, &self.params, v);
        euler_row(self.params.x0(), self.params.rho, self.grid.dt(), v, dw, db, x);
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Draws `samples` full trajectories through the factor `L` of the joint
/// covariance of `(W, Ŵ)`; `B` increments are independent `N(0, Δt)`.
pub fn sample_paths(
    factor: &CovarianceFactor,
    params: &ModelParams,
    grid: &GridSpec,
    samples: usize,
    seed: u64,
) -> Result<PathBundle> {
    PathSampler::with_factor(*params, grid.clone(), factor.clone())?.sample(samples, seed)
}
