//! Covariance of `(W_{t_1..t_N}, Ŵ_{t_1..t_N})` and its Cholesky factor.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::paths::GridSpec;

/// Gauss-Legendre nodes per panel for the off-diagonal fBm covariance.
const QUADRATURE_NODES: usize = 200;

const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8];

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `Cov(W_s, Ŵ_t) = √(2H)/(H+1/2) [t^(H+1/2) - (t - min(s,t))^(H+1/2)]`.
pub fn cross_covariance(s: f64, t: f64, hurst: f64) -> f64 {
    let a = hurst + 0.5;
    let m = s.min(t);
    (2.0 * hurst).sqrt() / a * (t.powf(a) - (t - m).powf(a))
}

/// `Cov(Ŵ_s, Ŵ_t) = 2H ∫_0^min(s,t) (s-u)^(H-1/2) (t-u)^(H-1/2) du`.
///
/// On the diagonal this is `t^(2H)`. Off the diagonal the substitution
/// `v = (s-u)^(H+1/2)` removes the endpoint singularity and leaves
/// `2H/(H+1/2) ∫_0^{s^(H+1/2)} (t - s + v^(1/(H+1/2)))^(H-1/2) dv`,
/// integrated by composite Gauss-Legendre (200 nodes per panel,
/// panels doubling in width away from the origin).
pub fn fbm_covariance(s: f64, t: f64, hurst: f64) -> f64 {
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    if lo <= 0.0 {
        return 0.0;
    }
    if lo == hi {
        return lo.powf(2.0 * hurst);
    }
    let (nodes, weights) = gauss_legendre(QUADRATURE_NODES);
    fbm_covariance_with_rule(lo, hi, hurst, &nodes, &weights)
}

fn fbm_covariance_with_rule(lo: f64, hi: f64, hurst: f64, nodes: &[f64], weights: &[f64]) -> f64 {
    let a = hurst + 0.5;
    let upper = lo.powf(a);
    let gap = hi - lo;
    let integrand = |v: f64| (gap + v.powf(1.0 / a)).powf(hurst - 0.5);
    // The integrand changes scale where v^(1/a) ~ gap; panels grow
    // geometrically from there so small gaps stay resolved.
    let mut edge = gap.powf(a).min(upper);
    let mut left = 0.0;
    let mut integral = 0.0;
    loop {
        let half = 0.5 * (edge - left);
        let mid = 0.5 * (edge + left);
        integral += half
            * nodes
                .iter()
                .zip(weights)
                .map(|(&x, &w)| w * integrand(mid + half * x))
                .sum::<f64>();
        if edge >= upper {
            break;
        }
        left = edge;
        edge = (2.0 * edge).min(upper);
    }
    2.0 * hurst / a * integral
}

/// Covariance of the Gaussian vector `(W_{t_1},...,W_{t_N}, Ŵ_{t_1},...,Ŵ_{t_N})`
/// as a row-major `2N x 2N` matrix.
pub fn build_covariance(grid: &GridSpec, hurst: f64) -> Result<Vec<f64>> {
    if !(hurst > 0.0 && hurst <= 0.5) {
        return Err(invalid("hurst", format!("{hurst} not in (0, 1/2]")));
    }
    let n = grid.steps();
    let dim = 2 * n;
    let times = &grid.times()[1..];
    let (nodes, weights) = gauss_legendre(QUADRATURE_NODES);
    let mut cov = vec![0.0; dim * dim];
    for a in 0..n {
        for b in 0..n {
            let (s, t) = (times[a], times[b]);
            cov[a * dim + b] = s.min(t);
            let c = cross_covariance(s, t, hurst);
            cov[a * dim + n + b] = c;
            cov[(n + b) * dim + a] = c;
        }
        for b in a..n {
            let (s, t) = (times[a], times[b]);
            let c = if a == b {
                s.powf(2.0 * hurst)
            } else {
                fbm_covariance_with_rule(s, t, hurst, &nodes, &weights)
            };
            cov[(n + a) * dim + n + b] = c;
            cov[(n + b) * dim + n + a] = c;
        }
    }
    Ok(cov)
}

/// Lower Cholesky factor `L` with `L Lᵀ = C + jitter·I`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFactor {
    dim: usize,
    lower: Vec<f64>,
    jitter: f64,
}

impl CovarianceFactor {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Diagonal jitter that had to be added for the factorization to succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.lower[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.lower[row * self.dim..(row + 1) * self.dim]
    }

    /// `L Lᵀ`, row-major.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.dim;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j).map(|k| self.get(i, k) * self.get(j, k)).sum();
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        out
    }
}

/// Cholesky factorization, retrying with diagonal jitter from 1e-12 up to
/// 1e-8 when a pivot is not safely positive.
pub fn factorize(cov: &[f64]) -> Result<CovarianceFactor> {
    let dim = (cov.len() as f64).sqrt().round() as usize;
    if dim * dim != cov.len() || dim == 0 {
        return Err(Error::ShapeMismatch {
            expected: dim * dim,
            got: cov.len(),
        });
    }
    for i in 0..dim {
        for j in 0..i {
            let (a, b) = (cov[i * dim + j], cov[j * dim + i]);
            if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                return Err(invalid("cov", format!("not symmetric at ({i}, {j})")));
            }
        }
    }
    for &jitter in &JITTER_LADDER {
        if let Some(lower) = try_cholesky(cov, dim, jitter) {
            return Ok(CovarianceFactor { dim, lower, jitter });
        }
    }
    Err(Error::IllConditioned {
        jitter: JITTER_LADDER[JITTER_LADDER.len() - 1],
    })
}

fn try_cholesky(cov: &[f64], n: usize, jitter: f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let diag = cov[j * n + j] + jitter;
        let s: f64 = (0..j).map(|k| l[j * n + k] * l[j * n + k]).sum();
        let pivot = diag - s;
        // A pivot at round-off level means the matrix is numerically singular.
        if !(pivot > 1e-13 * diag.abs().max(f64::MIN_POSITIVE)) {
            return None;
        }
        let ljj = pivot.sqrt();
        l[j * n + j] = ljj;
        for i in (j + 1)..n {
            let s: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            l[i * n + j] = (cov[i * n + j] - s) / ljj;
        }
    }
    Some(l)
}
