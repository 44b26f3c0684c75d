//! Exact joint simulation of `(W, Ŵ, B, V)` on a uniform grid.

mod covariance;
mod grid;
mod kernel;
mod sampler;
mod variance;

pub use covariance::{
    build_covariance, cross_covariance, factorize, fbm_covariance, gauss_legendre,
    CovarianceFactor,
};
pub use grid::GridSpec;
pub use kernel::KernelSpec;
pub use sampler::{sample_paths, PathBundle, PathField, PathSampler};
pub use variance::{bergomi_variance, rough_heston_variance, RoughHestonParams};
